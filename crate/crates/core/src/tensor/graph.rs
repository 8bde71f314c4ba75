use super::params::{ParamId, ParamStore};
use super::{shape_err, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf { param: Option<ParamId> },
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Sum { a: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { a: Var, axis: usize, start: usize },
    Reshape { a: Var },
    Transpose { a: Var, perm: Vec<usize> },
    Embedding { table: Var, indices: Vec<usize> },
    Softmax { a: Var, axis: usize },
    LayerNorm { a: Var, axis: usize, xhat: Vec<f64>, rstd: Vec<f64> },
    Relu { a: Var },
    Dropout { a: Var, mask: Vec<f64> },
    MaskedFill { a: Var, mask: Vec<bool> },
    CrossEntropy { logits: Var, targets: Vec<usize>, ignore: usize, probs: Vec<f64>, count: usize },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf { .. } => vec![],
            Op::MatMul { a, b } | Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Embedding { table, .. } => vec![*table],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::Scale { a, .. }
            | Op::Sum { a }
            | Op::Slice { a, .. }
            | Op::Reshape { a }
            | Op::Transpose { a, .. }
            | Op::Softmax { a, .. }
            | Op::LayerNorm { a, .. }
            | Op::Relu { a }
            | Op::Dropout { a, .. }
            | Op::MaskedFill { a, .. } => vec![*a],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order; node ids are therefore a
/// topological order and `backward` simply walks them in reverse.
pub struct Graph {
    nodes: Vec<Node>,
    training: bool,
    dropout_seed: u64,
    step: u64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
fn around(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Uniform [0, 1) draw for element `index` of the dropout call identified by
/// (seed, layer, step).
fn dropout_uniform(seed: u64, layer: u64, step: u64, index: u64) -> f64 {
    let key = splitmix(splitmix(splitmix(seed) ^ layer) ^ step);
    (splitmix(key ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03)) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// C (m×n) = A (m×k) · B (k×n) + beta·C with arbitrary strides for A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, c: &mut [f64], beta: f64) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the callers pass slices covering the strided m×k, k×n and m×n
    // extents, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa as isize, csa as isize,
            b.as_ptr(), rsb as isize, csb as isize,
            beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

fn permute(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let rank = shape.len();
    let new_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let src_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    let last = rank - 1;
    let (inner_len, inner_stride) = (new_shape[last], src_strides[last]);
    loop {
        for j in 0..inner_len {
            out.push(data[offset + j * inner_stride]);
        }
        // advance the multi-index over all but the innermost axis
        let mut axis = last;
        loop {
            if axis == 0 {
                return (out, new_shape);
            }
            axis -= 1;
            idx[axis] += 1;
            offset += src_strides[axis];
            if idx[axis] < new_shape[axis] {
                break;
            }
            offset -= src_strides[axis] * idx[axis];
            idx[axis] = 0;
        }
    }
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// `b` broadcasts against `a` when its shape is a suffix of `a`'s shape.
fn broadcasts(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

impl Graph {
    /// A graph in evaluation mode: dropout is the identity.
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), training: false, dropout_seed: 0, step: 0 }
    }

    /// A graph in training mode; dropout masks are derived from
    /// (`dropout_seed`, layer id, `step`).
    pub fn training(dropout_seed: u64, step: u64) -> Self {
        Graph { nodes: Vec::new(), training: true, dropout_seed, step }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node created after the first `len`. Vars pointing past
    /// the new end must not be used again.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Whether `v` still refers to a node of this graph.
    pub fn contains(&self, v: Var) -> bool {
        v.0 < self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf { .. } => false,
            op => op.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input (no gradient).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { param: None })
    }

    /// A free leaf that receives a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let v = self.push(t, Op::Leaf { param: None });
        self.nodes[v.0].requires_grad = true;
        v
    }

    /// Loads a parameter as a gradient-receiving leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf { param: Some(id) });
        self.nodes[v.0].requires_grad = true;
        v
    }

    /// Matrix product of `[m,k]·[k,n]` or batched `[b,m,k]·[b,k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (batch, m, k, n) = match (sa.as_slice(), sb.as_slice()) {
            ([m, k], [k2, n]) if k == k2 => (1, *m, *k, *n),
            ([b1, m, k], [b2, k2, n]) if b1 == b2 && k == k2 => (*b1, *m, *k, *n),
            _ => return Err(shape_err("matmul", &[&sa, &sb])),
        };
        let mut out = vec![0.0; batch * m * n];
        let (av, bv) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
        for i in 0..batch {
            gemm(m, k, n, &av[i * m * k..], k, 1, &bv[i * k * n..], n, 1, &mut out[i * m * n..], 0.0);
        }
        let shape = if sa.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        Ok(self.push(Tensor { shape, data: out }, Op::MatMul { a, b }))
    }

    fn elementwise(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcasts(sa, sb) {
            return Err(shape_err(name, &[sa, sb]));
        }
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let nb = bv.data.len();
        let data = av.data.chunks(nb).flat_map(|chunk| chunk.iter().zip(&bv.data).map(|(&x, &y)| f(x, y))).collect();
        Ok(Tensor { shape: av.shape.clone(), data })
    }

    /// `a + b`, where `b`'s shape may be a suffix of `a`'s shape.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.elementwise(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add { a, b }))
    }

    /// Elementwise `a ⊙ b` with the same broadcasting as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.elementwise(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let src = &self.nodes[a.0].value;
        let t = Tensor { shape: src.shape.clone(), data: src.data.iter().map(|x| x * factor).collect() };
        self.push(t, Op::Scale { a, factor })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(shape_err("concat", &[&first]));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len() || s[..axis] != first[..axis] || s[axis + 1..] != first[axis + 1..] {
                return Err(shape_err("concat", &[&first, s]));
            }
            total += s[axis];
        }
        let (outer, _, inner) = around(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = &self.nodes[v.0].value;
                let len = t.shape[axis] * inner;
                data.extend_from_slice(&t.data[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        Ok(self.push(Tensor { shape, data }, Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    /// `len` entries of `a` along `axis`, starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::Shape { op: "slice", shapes: format!("{shape:?} axis {axis} range {start}..{}", start + len) });
        }
        let (outer, n, inner) = around(&shape, axis);
        let src = &self.nodes[a.0].value.data;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        Ok(self.push(Tensor { shape: out_shape, data }, Op::Slice { a, axis, start }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let src = &self.nodes[a.0].value;
        if shape.iter().product::<usize>() != src.data.len() || shape.contains(&0) {
            return Err(shape_err("reshape", &[&src.shape, shape]));
        }
        let t = Tensor { shape: shape.to_vec(), data: src.data.clone() };
        Ok(self.push(t, Op::Reshape { a }))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn transpose(&mut self, a: Var, perm: &[usize]) -> Result<Var, TensorError> {
        let src = &self.nodes[a.0].value;
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..src.shape.len()).collect::<Vec<_>>() {
            return Err(TensorError::Shape { op: "transpose", shapes: format!("{:?} with permutation {perm:?}", src.shape) });
        }
        let (data, shape) = permute(&src.data, &src.shape, perm);
        Ok(self.push(Tensor { shape, data }, Op::Transpose { a, perm: perm.to_vec() }))
    }

    /// Rows of `table` (`[vocab, dim]`) selected by `indices`; output `[n, dim]`.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let t = &self.nodes[table.0].value;
        let [rows, dim] = t.shape[..] else { return Err(shape_err("embedding_lookup", &[&t.shape])) };
        if indices.is_empty() {
            return Err(TensorError::Shape { op: "embedding_lookup", shapes: "no indices".into() });
        }
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::Shape { op: "embedding_lookup", shapes: format!("index {i} into {:?}", t.shape) });
            }
            data.extend_from_slice(&t.data[i * dim..(i + 1) * dim]);
        }
        let out = Tensor { shape: vec![indices.len(), dim], data };
        Ok(self.push(out, Op::Embedding { table, indices: indices.to_vec() }))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let src = &self.nodes[a.0].value;
        if axis >= src.shape.len() {
            return Err(shape_err("softmax", &[&src.shape]));
        }
        let (outer, n, inner) = around(&src.shape, axis);
        let mut data = vec![0.0; src.data.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let max = (0..n).map(|j| src.data[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    continue; // fully masked: all weights stay 0
                }
                let mut total = 0.0;
                for j in 0..n {
                    let e = (src.data[at(j)] - max).exp();
                    data[at(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    data[at(j)] /= total;
                }
            }
        }
        let t = Tensor { shape: src.shape.clone(), data };
        Ok(self.push(t, Op::Softmax { a, axis }))
    }

    /// Normalizes to zero mean and unit variance along `axis` (no affine).
    pub fn layer_norm(&mut self, a: Var, axis: usize, eps: f64) -> Result<Var, TensorError> {
        let src = &self.nodes[a.0].value;
        if axis >= src.shape.len() {
            return Err(shape_err("layer_norm", &[&src.shape]));
        }
        let (outer, n, inner) = around(&src.shape, axis);
        let mut xhat = vec![0.0; src.data.len()];
        let mut rstd = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let mean = (0..n).map(|j| src.data[at(j)]).sum::<f64>() / n as f64;
                let var = (0..n).map(|j| (src.data[at(j)] - mean).powi(2)).sum::<f64>() / n as f64;
                let r = 1.0 / (var + eps).sqrt();
                rstd[o * inner + i] = r;
                for j in 0..n {
                    xhat[at(j)] = (src.data[at(j)] - mean) * r;
                }
            }
        }
        let t = Tensor { shape: src.shape.clone(), data: xhat.clone() };
        Ok(self.push(t, Op::LayerNorm { a, axis, xhat, rstd }))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let src = &self.nodes[a.0].value;
        let t = Tensor { shape: src.shape.clone(), data: src.data.iter().map(|&x| x.max(0.0)).collect() };
        self.push(t, Op::Relu { a })
    }

    /// Inverted dropout with drop probability `p`; identity in eval mode.
    /// `layer` distinguishes dropout sites within one step.
    pub fn dropout(&mut self, a: Var, p: f64, layer: u64) -> Var {
        if !self.training || p == 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - p);
        let src = &self.nodes[a.0].value;
        let mask: Vec<f64> = (0..src.data.len() as u64)
            .map(|i| if dropout_uniform(self.dropout_seed, layer, self.step, i) < p { 0.0 } else { keep })
            .collect();
        let data = src.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let t = Tensor { shape: src.shape.clone(), data };
        self.push(t, Op::Dropout { a, mask })
    }

    /// Replaces entries where `mask` is true by `value`.
    pub fn masked_fill(&mut self, a: Var, mask: &[bool], value: f64) -> Result<Var, TensorError> {
        let src = &self.nodes[a.0].value;
        if mask.len() != src.data.len() {
            return Err(TensorError::Shape { op: "masked_fill", shapes: format!("{:?} with mask of {}", src.shape, mask.len()) });
        }
        let data = src.data.iter().zip(mask).map(|(&x, &m)| if m { value } else { x }).collect();
        let t = Tensor { shape: src.shape.clone(), data };
        Ok(self.push(t, Op::MaskedFill { a, mask: mask.to_vec() }))
    }

    /// Mean token cross-entropy of `logits` (`[n, classes]`) against
    /// `targets`, skipping positions whose target is `ignore`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: usize) -> Result<Var, TensorError> {
        let src = &self.nodes[logits.0].value;
        let [rows, classes] = src.shape[..] else { return Err(shape_err("cross_entropy", &[&src.shape])) };
        if targets.len() != rows || targets.iter().any(|&t| t != ignore && t >= classes) {
            return Err(TensorError::Shape { op: "cross_entropy", shapes: format!("{:?} with {} targets", src.shape, targets.len()) });
        }
        let mut probs = vec![0.0; src.data.len()];
        let mut total = 0.0;
        let mut count = 0;
        for (r, &t) in targets.iter().enumerate() {
            if t == ignore {
                continue;
            }
            let row = &src.data[r * classes..(r + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            for (p, x) in probs[r * classes..(r + 1) * classes].iter_mut().zip(row) {
                *p = (x - max).exp() / z;
            }
            total += max + z.ln() - row[t];
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), ignore, probs, count };
        Ok(self.push(Tensor::scalar(loss), op))
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.data.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if let Op::Leaf { .. } = node.op {
                grads[id] = Some(gout);
                continue;
            }
            if node.requires_grad {
                self.backprop(node, &gout, &mut grads);
            }
        }
        Ok(Gradients { grads, params: self.param_ids() })
    }

    fn param_ids(&self) -> Vec<Option<ParamId>> {
        self.nodes
            .iter()
            .map(|n| match n.op {
                Op::Leaf { param } => param,
                _ => None,
            })
            .collect()
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop(&self, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let take = |grads: &mut [Option<Vec<f64>>], v: Var| {
            grads[v.0].take().unwrap_or_else(|| vec![0.0; self.nodes[v.0].value.data.len()])
        };
        // Accumulates `g` elementwise into the gradient buffer of `v`.
        let add_into = |grads: &mut [Option<Vec<f64>>], v: Var, g: &mut dyn Iterator<Item = (usize, f64)>| {
            let len = self.nodes[v.0].value.data.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            for (i, x) in g {
                buf[i] += x;
            }
        };
        match &node.op {
            Op::Leaf { .. } => {}
            Op::MatMul { a, b } => {
                let (sa, sb) = (&val(*a).shape, &val(*b).shape);
                let (batch, m, k) = if sa.len() == 2 { (1, sa[0], sa[1]) } else { (sa[0], sa[1], sa[2]) };
                let n = *sb.last().unwrap();
                if self.wants(*a) {
                    let mut ga = take(grads, *a);
                    let bv = &val(*b).data;
                    for i in 0..batch {
                        // dA = dC · Bᵀ
                        gemm(m, n, k, &gout[i * m * n..], n, 1, &bv[i * k * n..], 1, n, &mut ga[i * m * k..], 1.0);
                    }
                    grads[a.0] = Some(ga);
                }
                if self.wants(*b) {
                    let mut gb = take(grads, *b);
                    let av = &val(*a).data;
                    for i in 0..batch {
                        // dB = Aᵀ · dC
                        gemm(k, m, n, &av[i * m * k..], 1, k, &gout[i * m * n..], n, 1, &mut gb[i * k * n..], 1.0);
                    }
                    grads[b.0] = Some(gb);
                }
            }
            Op::Add { a, b } | Op::Mul { a, b } => {
                let is_mul = matches!(node.op, Op::Mul { .. });
                let nb = val(*b).data.len();
                if self.wants(*a) {
                    if is_mul {
                        let bv = &val(*b).data;
                        add_into(grads, *a, &mut gout.iter().enumerate().map(|(i, g)| (i, g * bv[i % nb])));
                    } else {
                        add_into(grads, *a, &mut gout.iter().copied().enumerate());
                    }
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; nb];
                    let av = &val(*a).data;
                    for (i, g) in gout.iter().enumerate() {
                        gb[i % nb] += if is_mul { g * av[i] } else { *g };
                    }
                    add_into(grads, *b, &mut gb.into_iter().enumerate());
                }
            }
            Op::Scale { a, factor } => {
                add_into(grads, *a, &mut gout.iter().map(|g| g * factor).enumerate());
            }
            Op::Sum { a } => {
                let g = gout[0];
                let len = val(*a).data.len();
                add_into(grads, *a, &mut (0..len).map(|i| (i, g)));
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = around(&node.value.shape, *axis);
                let mut offset = 0;
                for &v in inputs {
                    let len = val(v).shape[*axis];
                    if self.wants(v) {
                        let mut it = (0..outer).flat_map(|o| {
                            let src = o * total * inner + offset * inner;
                            (0..len * inner).map(move |j| (o * len * inner + j, gout[src + j]))
                        });
                        add_into(grads, v, &mut it);
                    }
                    offset += len;
                }
            }
            Op::Slice { a, axis, start } => {
                let (outer, n, inner) = around(&val(*a).shape, *axis);
                let len = node.value.shape[*axis];
                let mut it = (0..outer).flat_map(|o| {
                    (0..len * inner).map(move |j| (o * n * inner + start * inner + j, gout[o * len * inner + j]))
                });
                add_into(grads, *a, &mut it);
            }
            Op::Reshape { a } => {
                add_into(grads, *a, &mut gout.iter().copied().enumerate());
            }
            Op::Transpose { a, perm } => {
                let (back, _) = permute(gout, &node.value.shape, &inverse_perm(perm));
                add_into(grads, *a, &mut back.into_iter().enumerate());
            }
            Op::Embedding { table, indices } => {
                let dim = val(*table).shape[1];
                let mut it = indices.iter().enumerate().flat_map(|(r, &i)| (0..dim).map(move |j| (i * dim + j, gout[r * dim + j])));
                add_into(grads, *table, &mut it);
            }
            Op::Softmax { a, axis } => {
                let y = &node.value.data;
                let (outer, n, inner) = around(&node.value.shape, *axis);
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + i;
                        let dot: f64 = (0..n).map(|j| gout[at(j)] * y[at(j)]).sum();
                        for j in 0..n {
                            gx[at(j)] = y[at(j)] * (gout[at(j)] - dot);
                        }
                    }
                }
                add_into(grads, *a, &mut gx.into_iter().enumerate());
            }
            Op::LayerNorm { a, axis, xhat, rstd } => {
                let (outer, n, inner) = around(&node.value.shape, *axis);
                let mut gx = vec![0.0; xhat.len()];
                let nf = n as f64;
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + i;
                        let sum_g: f64 = (0..n).map(|j| gout[at(j)]).sum();
                        let sum_gx: f64 = (0..n).map(|j| gout[at(j)] * xhat[at(j)]).sum();
                        let r = rstd[o * inner + i];
                        for j in 0..n {
                            gx[at(j)] = r / nf * (nf * gout[at(j)] - sum_g - xhat[at(j)] * sum_gx);
                        }
                    }
                }
                add_into(grads, *a, &mut gx.into_iter().enumerate());
            }
            Op::Relu { a } => {
                let x = &val(*a).data;
                add_into(grads, *a, &mut gout.iter().enumerate().map(|(i, g)| (i, if x[i] > 0.0 { *g } else { 0.0 })));
            }
            Op::Dropout { a, mask } => {
                add_into(grads, *a, &mut gout.iter().zip(mask).map(|(g, m)| g * m).enumerate());
            }
            Op::MaskedFill { a, mask } => {
                add_into(grads, *a, &mut gout.iter().zip(mask).map(|(g, &m)| if m { 0.0 } else { *g }).enumerate());
            }
            Op::CrossEntropy { logits, targets, ignore, probs, count } => {
                if *count == 0 {
                    return;
                }
                let classes = val(*logits).shape[1];
                let scale = gout[0] / *count as f64;
                let mut g = vec![0.0; probs.len()];
                for (r, &t) in targets.iter().enumerate() {
                    if t == *ignore {
                        continue;
                    }
                    for c in 0..classes {
                        g[r * classes + c] = probs[r * classes + c] * scale;
                    }
                    g[r * classes + t] -= scale;
                }
                add_into(grads, *logits, &mut g.into_iter().enumerate());
            }
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<Option<ParamId>>,
}

impl Gradients {
    /// Gradient of a leaf (or any node still holding one); `None` when the
    /// loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradients per parameter, summed over every load of that parameter.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = vec![None; store.len()];
        for (g, p) in self.grads.iter().zip(&self.params) {
            let (Some(g), Some(p)) = (g, p) else { continue };
            match &mut out[p.0] {
                Some(t) => t.data.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                slot => *slot = Some(Tensor { shape: store.get(*p).shape.clone(), data: g.clone() }),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn softmax_symmetric() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![0.0, 0.0]));
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y).data(), [0.5, 0.5]);
    }

    #[test]
    fn layer_norm_constant_row() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![1.0, 1.0, 1.0]));
        let y = g.layer_norm(x, 0, 1e-5).unwrap();
        assert_eq!(g.value(y).data(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut g = Graph::new();
        let va = g.constant(Tensor::new(vec![2, 3], a.clone()).unwrap());
        let vb = g.constant(Tensor::new(vec![3, 4], b.clone()).unwrap());
        let c = g.matmul(va, vb).unwrap();
        assert_eq!(g.shape(c), [2, 4]);
        let expect = naive_matmul(&a, &b, 2, 3, 4);
        for (x, y) in g.value(c).data().iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, -2.0, 3.5]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap(), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_square_gradient_is_identity() {
        let mut g = Graph::new();
        let xs = vec![0.3, -1.2, 2.0];
        let x = g.leaf(Tensor::from_vec(xs.clone()));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let half = g.scale(s, 0.5);
        let grads = g.backward(half).unwrap();
        assert_eq!(grads.wrt(x).unwrap(), xs.as_slice());
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.7));
        let y = g.add(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap(), [2.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn masked_softmax_gives_exact_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2, 3], vec![0.1, 2.0, -1.0, 0.5, 0.5, 3.0]).unwrap());
        let m = g.masked_fill(x, &[false, true, false, true, false, false], f64::NEG_INFINITY).unwrap();
        let y = g.softmax(m, 1).unwrap();
        let out = g.value(y).data();
        assert_eq!(out[1], 0.0);
        assert_eq!(out[3], 0.0);
        for row in out.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn dropout_identity_in_eval() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![1.0; 10]));
        assert_eq!(g.dropout(x, 0.5, 3), x);
    }

    #[test]
    fn dropout_reproducible() {
        let run = |step| {
            let mut g = Graph::training(11, step);
            let x = g.constant(Tensor::from_vec(vec![1.0; 64]));
            let y = g.dropout(x, 0.3, 2);
            g.value(y).data().to_vec()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
        let kept = run(5).iter().filter(|&&v| v > 0.0).count();
        assert!(kept > 30 && kept < 60, "{kept}");
    }

    #[test]
    fn transpose_round_trip() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 3, 4], (0..24).map(f64::from).collect()).unwrap());
        let y = g.transpose(x, &[2, 0, 1]).unwrap();
        assert_eq!(g.shape(y), [4, 2, 3]);
        // y[k][i][j] == x[i][j][k]
        assert_eq!(g.value(y).data()[1 * 6 + 0 * 3 + 2], g.value(x).data()[0 * 12 + 2 * 4 + 1]);
        let z = g.transpose(y, &[1, 2, 0]).unwrap();
        assert_eq!(g.value(z), g.value(x));
    }
}
