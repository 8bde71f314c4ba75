//! Experiment configuration. A TOML file with `[dataset]`, `[model]`,
//! `[run]`, `[baselines]` and `[probe]` sections; command-line flags
//! override it, and `train` writes the resolved version to
//! `<out>/experiment.toml` so later commands pick it up.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use protorec::baselines::ContextConfig;
use protorec::corpus::{ParseOptions, ScriptMode, TokenizerOptions};
use protorec::transformer::TransformerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{read, CliError, Result};

pub const EXPERIMENT_FILE: &str = "experiment.toml";
pub const DEFAULT_N_SEEDS: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub run: RunSection,
    pub baselines: BaselineSection,
    pub probe: ProbeSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub proto_column: Option<String>,
    pub tokenizer: TokenizerOptions,
    pub split_seed: u64,
}

/// A preset name plus optional per-field overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<String>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_encoder_layers: Option<usize>,
    pub n_decoder_layers: Option<usize>,
    pub d_feedforward: Option<usize>,
    pub dropout_p: Option<f64>,
    pub lr: Option<f64>,
    pub warmup_epochs: Option<usize>,
    pub total_epochs: Option<usize>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_source_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Option<Vec<u64>>,
    pub base_seed: u64,
    pub n_seeds: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seeds: None, base_seed: 0, n_seeds: DEFAULT_N_SEEDS }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    /// Any of random, majority, corpar, svm.
    pub systems: Option<Vec<String>>,
    /// Context families as a `+`-joined list of pos, str, ini ("none" for
    /// plain correspondences).
    pub corpar_context: Option<String>,
    pub svm_context: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub gold_tree: Option<PathBuf>,
    pub threshold: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions { proto_column: self.dataset.proto_column.clone(), tokenizer: self.dataset.tokenizer }
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset.path.as_deref().ok_or_else(|| CliError::Config("no dataset given (use --dataset)".into()))
    }

    pub fn preset_name(&self) -> &str {
        self.model.preset.as_deref().unwrap_or("sinitic")
    }

    pub fn transformer_config(&self) -> Result<TransformerConfig> {
        let name = self.preset_name();
        let mut c = TransformerConfig::preset(name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?} (romance, sinitic)")))?;
        let m = &self.model;
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = m.$f { c.$f = v; })* };
        }
        apply!(d_model, n_heads, n_encoder_layers, n_decoder_layers, d_feedforward, dropout_p, lr, warmup_epochs, total_epochs, weight_decay, batch_size, max_source_len);
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }

    /// Writes every model field explicitly.
    pub fn pin_model(&mut self) -> Result<()> {
        let c = self.transformer_config()?;
        self.model = ModelSection {
            preset: Some(self.preset_name().to_string()),
            d_model: Some(c.d_model),
            n_heads: Some(c.n_heads),
            n_encoder_layers: Some(c.n_encoder_layers),
            n_decoder_layers: Some(c.n_decoder_layers),
            d_feedforward: Some(c.d_feedforward),
            dropout_p: Some(c.dropout_p),
            lr: Some(c.lr),
            warmup_epochs: Some(c.warmup_epochs),
            total_epochs: Some(c.total_epochs),
            weight_decay: Some(c.weight_decay),
            batch_size: Some(c.batch_size),
            max_source_len: Some(c.max_source_len),
        };
        Ok(())
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        let seeds = match &self.run.seeds {
            Some(s) => s.clone(),
            None => (0..self.run.n_seeds as u64).map(|i| self.run.base_seed + i).collect(),
        };
        if seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        let mut seen = HashSet::new();
        if let Some(d) = seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(CliError::Config(format!("seed {d} listed twice")));
        }
        Ok(seeds)
    }

    pub fn baseline_systems(&self) -> Result<Vec<String>> {
        let systems = self.baselines.systems.clone().unwrap_or_else(|| vec!["random".into(), "majority".into(), "corpar".into(), "svm".into()]);
        for s in &systems {
            if !["random", "majority", "corpar", "svm"].contains(&s.as_str()) {
                return Err(CliError::Config(format!("unknown baseline {s:?} (random, majority, corpar, svm)")));
            }
        }
        Ok(systems)
    }

    /// Context families per classifier; defaults follow the best settings
    /// reported for each dataset family.
    pub fn contexts(&self) -> Result<(ContextConfig, ContextConfig)> {
        let romance = self.preset_name().eq_ignore_ascii_case("romance");
        let ortho = self.dataset.tokenizer.mode == ScriptMode::Orthographic;
        let (corpar, svm) = match (romance, ortho) {
            (true, false) => ("pos+ini", "pos+str+ini"),
            (true, true) => ("ini", "pos+str"),
            (false, _) => ("none", "pos+str"),
        };
        let corpar = parse_context(self.baselines.corpar_context.as_deref().unwrap_or(corpar))?;
        let svm = parse_context(self.baselines.svm_context.as_deref().unwrap_or(svm))?;
        Ok((corpar, svm))
    }
}

pub fn parse_context(text: &str) -> Result<ContextConfig> {
    let mut c = ContextConfig::NONE;
    if text.trim().eq_ignore_ascii_case("none") {
        return Ok(c);
    }
    for part in text.split('+').map(|p| p.trim().to_ascii_lowercase()) {
        match part.as_str() {
            "pos" => c.pos = true,
            "str" => c.structure = true,
            "ini" => c.edges = true,
            _ => return Err(CliError::Config(format!("unknown context {part:?} (pos, str, ini, none)"))),
        }
    }
    Ok(c)
}

pub fn context_label(c: ContextConfig) -> String {
    let parts: Vec<&str> = [(c.pos, "Pos"), (c.structure, "Str"), (c.edges, "Ini")].iter().filter(|(on, _)| *on).map(|(_, n)| *n).collect();
    if parts.is_empty() {
        String::new()
    } else {
        format!(" +{}", parts.join(""))
    }
}

/// `0,3,7`, a half-open range `0..10`, or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || CliError::Config(format!("bad seed list {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}
