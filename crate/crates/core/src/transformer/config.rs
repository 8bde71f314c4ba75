use serde::{Deserialize, Serialize};

use super::TransformerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub d_feedforward: usize,
    pub dropout_p: f64,
    pub lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_max_source_len")]
    pub max_source_len: usize,
}

fn default_max_source_len() -> usize {
    1024
}

impl TransformerConfig {
    /// Hyperparameters tuned for the Romance datasets.
    pub fn romance() -> Self {
        TransformerConfig {
            d_model: 128,
            n_heads: 8,
            n_encoder_layers: 3,
            n_decoder_layers: 3,
            d_feedforward: 128,
            dropout_p: 0.202,
            lr: 0.00013,
            warmup_epochs: 50,
            total_epochs: 200,
            weight_decay: 0.0,
            batch_size: 1,
            seed: 0,
            max_source_len: default_max_source_len(),
        }
    }

    /// Hyperparameters tuned for the Sinitic dataset.
    pub fn sinitic() -> Self {
        TransformerConfig {
            d_model: 128,
            n_heads: 8,
            n_encoder_layers: 2,
            n_decoder_layers: 5,
            d_feedforward: 647,
            dropout_p: 0.1708861,
            lr: 0.0007487,
            warmup_epochs: 32,
            total_epochs: 200,
            weight_decay: 0.0000001,
            batch_size: 32,
            seed: 0,
            max_source_len: default_max_source_len(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "romance" => Some(Self::romance()),
            "sinitic" => Some(Self::sinitic()),
            _ => None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TransformerError> {
        let fail = |m: &str| Err(TransformerError::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail("d_model must be a positive multiple of n_heads");
        }
        if self.d_model % 2 != 0 {
            return fail("d_model must be even for sinusoidal positions");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail("dropout_p must lie in [0, 1)");
        }
        if self.lr <= 0.0 || self.batch_size == 0 || self.d_feedforward == 0 {
            return fail("lr, batch_size and d_feedforward must be positive");
        }
        if self.n_encoder_layers == 0 || self.n_decoder_layers == 0 {
            return fail("at least one encoder and one decoder layer are required");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_table() {
        let r = TransformerConfig::romance();
        assert_eq!((r.lr, r.n_encoder_layers, r.n_decoder_layers, r.d_model, r.n_heads), (0.00013, 3, 3, 128, 8));
        assert_eq!((r.d_feedforward, r.dropout_p, r.total_epochs, r.warmup_epochs, r.weight_decay, r.batch_size), (128, 0.202, 200, 50, 0.0, 1));
        let s = TransformerConfig::sinitic();
        assert_eq!((s.lr, s.n_encoder_layers, s.n_decoder_layers, s.d_model, s.n_heads), (0.0007487, 2, 5, 128, 8));
        assert_eq!((s.d_feedforward, s.dropout_p, s.total_epochs, s.warmup_epochs, s.weight_decay, s.batch_size), (647, 0.1708861, 200, 32, 0.0000001, 32));
        r.validate().unwrap();
        s.validate().unwrap();
    }

    #[test]
    fn invalid_heads_rejected() {
        let mut c = TransformerConfig::romance();
        c.n_heads = 5;
        assert!(c.validate().is_err());
        c.n_heads = 8;
        c.dropout_p = 1.0;
        assert!(c.validate().is_err());
    }
}
