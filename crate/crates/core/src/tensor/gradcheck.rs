//! Central finite-difference checks of every operator's backward pass.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::{Tensor, TensorError};

/// Step for the central differences.
pub const FD_EPS: f64 = 1e-5;
/// Pass threshold on the maximum relative error.
pub const GRAD_TOL: f64 = 1e-4;
/// Gradients smaller than this in both routes are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    MatMul,
    BatchedMatMul,
    Add,
    Mul,
    Scale,
    Sum,
    Concat,
    Slice,
    Reshape,
    Transpose,
    EmbeddingLookup,
    Softmax,
    LayerNorm,
    Relu,
    Dropout,
    MaskedFill,
    CrossEntropy,
}

impl OpKind {
    pub const ALL: [OpKind; 17] = [
        OpKind::MatMul,
        OpKind::BatchedMatMul,
        OpKind::Add,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Sum,
        OpKind::Concat,
        OpKind::Slice,
        OpKind::Reshape,
        OpKind::Transpose,
        OpKind::EmbeddingLookup,
        OpKind::Softmax,
        OpKind::LayerNorm,
        OpKind::Relu,
        OpKind::Dropout,
        OpKind::MaskedFill,
        OpKind::CrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::BatchedMatMul => "batched_matmul",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Sum => "sum",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
            OpKind::Reshape => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::EmbeddingLookup => "embedding_lookup",
            OpKind::Softmax => "softmax",
            OpKind::LayerNorm => "layer_norm",
            OpKind::Relu => "relu",
            OpKind::Dropout => "dropout",
            OpKind::MaskedFill => "masked_fill",
            OpKind::CrossEntropy => "cross_entropy",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub kind: OpKind,
    pub seed: u64,
    pub max_rel_error: f64,
    pub checked: usize,
    /// For cross-entropy: whether every ignored row got an exactly zero
    /// gradient. Always true for other kinds.
    pub ignored_exact_zero: bool,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOL && self.ignored_exact_zero
    }
}

fn random(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Inputs that receive gradients, plus a builder producing the checked
/// scalar from them.
struct Case {
    inputs: Vec<Tensor>,
    build: Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>>,
    /// Rows of the first input whose gradient must be exactly zero.
    zero_rows: Vec<usize>,
}

fn case(kind: OpKind, rng: &mut ChaCha8Rng) -> Case {
    // Projects an op output onto fixed random weights so every output
    // element influences the scalar.
    fn project(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var, TensorError> {
        let w = g.constant(weights.clone());
        let prod = g.mul(out, w)?;
        Ok(g.sum(prod))
    }
    macro_rules! projected {
        ($out_shape:expr, |$g:ident, $v:ident| $body:expr) => {{
            let w = random(rng, &$out_shape);
            Box::new(move |$g: &mut Graph, $v: &[Var]| {
                let out = $body?;
                project($g, out, &w)
            })
        }};
    }
    let simple = |inputs, build| Case { inputs, build, zero_rows: vec![] };
    match kind {
        OpKind::MatMul => simple(vec![random(rng, &[3, 4]), random(rng, &[4, 2])], projected!([3, 2], |g, v| g.matmul(v[0], v[1]))),
        OpKind::BatchedMatMul => {
            simple(vec![random(rng, &[2, 3, 4]), random(rng, &[2, 4, 2])], projected!([2, 3, 2], |g, v| g.matmul(v[0], v[1])))
        }
        OpKind::Add => simple(vec![random(rng, &[3, 4]), random(rng, &[4])], projected!([3, 4], |g, v| g.add(v[0], v[1]))),
        OpKind::Mul => simple(vec![random(rng, &[3, 4]), random(rng, &[4])], projected!([3, 4], |g, v| g.mul(v[0], v[1]))),
        OpKind::Scale => simple(vec![random(rng, &[5])], projected!([5], |g, v| Ok::<_, TensorError>(g.scale(v[0], -1.7)))),
        OpKind::Sum => {
            simple(vec![random(rng, &[2, 3])], Box::new(|g: &mut Graph, v: &[Var]| {
                let s = g.sum(v[0]);
                Ok(g.scale(s, 0.3))
            }))
        }
        OpKind::Concat => {
            simple(vec![random(rng, &[2, 3]), random(rng, &[2, 2])], projected!([2, 5], |g, v| g.concat(&[v[0], v[1]], 1)))
        }
        OpKind::Slice => simple(vec![random(rng, &[3, 5])], projected!([3, 2], |g, v| g.slice(v[0], 1, 2, 2))),
        OpKind::Reshape => simple(vec![random(rng, &[2, 6])], projected!([3, 4], |g, v| g.reshape(v[0], &[3, 4]))),
        OpKind::Transpose => {
            simple(vec![random(rng, &[2, 3, 4, 2])], projected!([2, 4, 3, 2], |g, v| g.transpose(v[0], &[0, 2, 1, 3])))
        }
        OpKind::EmbeddingLookup => {
            simple(vec![random(rng, &[5, 3])], projected!([4, 3], |g, v| g.embedding(v[0], &[4, 0, 4, 2])))
        }
        OpKind::Softmax => simple(vec![random(rng, &[3, 4])], projected!([3, 4], |g, v| g.softmax(v[0], 1))),
        OpKind::LayerNorm => simple(vec![random(rng, &[8])], projected!([8], |g, v| g.layer_norm(v[0], 0, 1e-5))),
        OpKind::Relu => {
            let mut x = random(rng, &[12]);
            // keep samples away from the kink
            for v in x.data_mut() {
                while v.abs() < 1e-2 {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            simple(vec![x], projected!([12], |g, v| Ok::<_, TensorError>(g.relu(v[0]))))
        }
        OpKind::Dropout => simple(vec![random(rng, &[16])], projected!([16], |g, v| Ok::<_, TensorError>(g.dropout(v[0], 0.3, 7)))),
        OpKind::MaskedFill => {
            let mask: Vec<bool> = (0..12).map(|_| rng.gen_bool(0.4)).collect();
            simple(vec![random(rng, &[3, 4])], projected!([3, 4], |g, v| g.masked_fill(v[0], &mask, -2.5)))
        }
        OpKind::CrossEntropy => {
            let targets = vec![2, 0, 0, 4, 0];
            Case {
                inputs: vec![random(rng, &[5, 6])],
                build: Box::new(move |g: &mut Graph, v: &[Var]| g.cross_entropy(v[0], &targets, 0)),
                zero_rows: vec![1, 2, 4],
            }
        }
    }
}

fn evaluate(case: &Case, inputs: &[Tensor], seed: u64) -> Result<(Graph, Vec<Var>, Var), TensorError> {
    let mut g = Graph::training(seed, 0);
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = (case.build)(&mut g, &vars)?;
    Ok((g, vars, out))
}

/// Compares analytic and central-difference gradients of one operator at a
/// random point drawn from `seed`. `analytic_scale` multiplies the analytic
/// gradient (1.0 for a real check; other values simulate a broken backward).
pub fn grad_check_scaled(kind: OpKind, seed: u64, analytic_scale: f64) -> Result<GradCheckReport, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9E37_79B9));
    let case = case(kind, &mut rng);
    let (g, vars, out) = evaluate(&case, &case.inputs, seed)?;
    let grads = g.backward(out)?;

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let mut ignored_exact_zero = true;
    for (i, input) in case.inputs.iter().enumerate() {
        let zeros = vec![0.0; input.len()];
        let analytic = grads.wrt(vars[i]).unwrap_or(&zeros);
        if i == 0 && !case.zero_rows.is_empty() {
            let cols = input.shape()[1];
            ignored_exact_zero = case.zero_rows.iter().all(|&r| analytic[r * cols..(r + 1) * cols].iter().all(|&x| x == 0.0));
        }
        for j in 0..input.len() {
            let mut shifted = case.inputs.clone();
            shifted[i].data_mut()[j] += FD_EPS;
            let (gp, _, op) = evaluate(&case, &shifted, seed)?;
            shifted[i].data_mut()[j] -= 2.0 * FD_EPS;
            let (gm, _, om) = evaluate(&case, &shifted, seed)?;
            let numeric = (gp.value(op).item() - gm.value(om).item()) / (2.0 * FD_EPS);
            let a = analytic[j] * analytic_scale;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    Ok(GradCheckReport { kind, seed, max_rel_error: max_rel, checked, ignored_exact_zero })
}

pub fn grad_check(kind: OpKind, seed: u64) -> Result<GradCheckReport, TensorError> {
    grad_check_scaled(kind, seed, 1.0)
}

/// Runs every operator at each of `seeds`.
pub fn grad_check_all(seeds: &[u64]) -> Result<Vec<GradCheckReport>, TensorError> {
    let mut out = Vec::new();
    for kind in OpKind::ALL {
        for &seed in seeds {
            out.push(grad_check(kind, seed)?);
        }
    }
    Ok(out)
}
