//! Finite-difference check of the full model's loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TransformerConfig;
use super::model::{collate, Model};
use super::TransformerError;
use crate::corpus::{EncodedExample, BOS, EOS};
use crate::tensor::{Graph, ParamId, FD_EPS};

/// Relative error tolerance for the end-to-end check.
pub const MODEL_GRAD_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ModelGradCheck {
    pub max_rel_error: f64,
    pub sampled: usize,
}

impl ModelGradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < MODEL_GRAD_TOL
    }
}

/// A two-layer, width-8 model with dropout off.
pub fn tiny_config(seed: u64) -> TransformerConfig {
    TransformerConfig {
        d_model: 8,
        n_heads: 2,
        n_encoder_layers: 2,
        n_decoder_layers: 2,
        d_feedforward: 16,
        dropout_p: 0.0,
        lr: 1e-3,
        warmup_epochs: 1,
        total_epochs: 1,
        weight_decay: 0.0,
        batch_size: 2,
        seed,
        ..TransformerConfig::romance()
    }
}

fn toy_examples() -> Vec<EncodedExample> {
    vec![
        EncodedExample {
            source: vec![4, 5, 6, 4, 7, 8, 5],
            positions: vec![0, 1, 2, 0, 1, 0, 1],
            languages: vec![0, 0, 0, 1, 1, 2, 2],
            target: vec![BOS, 4, 5, 6, EOS],
        },
        EncodedExample { source: vec![6, 4, 8], positions: vec![0, 1, 0], languages: vec![0, 0, 2], target: vec![BOS, 7, EOS] },
    ]
}

/// Compares analytic loss gradients of a random tiny model against central
/// differences at `n_samples` randomly chosen parameter scalars.
pub fn end_to_end_grad_check(seed: u64, n_samples: usize) -> Result<ModelGradCheck, TransformerError> {
    let mut model = Model::new(tiny_config(seed), 9, 8, 3)?;
    let examples = toy_examples();
    let refs: Vec<&EncodedExample> = examples.iter().collect();
    let batch = collate(&refs);
    let loss_of = |m: &Model| -> Result<f64, TransformerError> {
        let mut g = Graph::new();
        let loss = m.loss(&mut g, &batch)?;
        Ok(g.value(loss).item())
    };
    let mut g = Graph::new();
    let loss = model.loss(&mut g, &batch)?;
    let grads = g.backward(loss)?.for_params(&model.params);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let ids: Vec<ParamId> = model.params.ids().collect();
    let sizes: Vec<usize> = ids.iter().map(|&id| model.params.get(id).len()).collect();
    let total: usize = sizes.iter().sum();
    let mut max_rel: f64 = 0.0;
    for _ in 0..n_samples {
        // uniform over scalars, not over tensors
        let mut k = rng.gen_range(0..total);
        let mut which = 0;
        while k >= sizes[which] {
            k -= sizes[which];
            which += 1;
        }
        let id = ids[which];
        let analytic = grads[id.0].as_ref().map_or(0.0, |t| t.data()[k]);
        let original = model.params.get(id).data()[k];
        model.params.get_mut(id).data_mut()[k] = original + FD_EPS;
        let plus = loss_of(&model)?;
        model.params.get_mut(id).data_mut()[k] = original - FD_EPS;
        let minus = loss_of(&model)?;
        model.params.get_mut(id).data_mut()[k] = original;
        let numeric = (plus - minus) / (2.0 * FD_EPS);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    Ok(ModelGradCheck { max_rel_error: max_rel, sampled: n_samples })
}
