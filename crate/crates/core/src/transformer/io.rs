//! On-disk layout of a trained model: `model.ckpt` (parameters),
//! `model.meta` (TOML sidecar with config, vocabulary and language order)
//! and `history.csv`.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TransformerConfig;
use super::model::Model;
use super::train::{EpochRecord, TrainedModel};
use super::TransformerError;
use crate::corpus::{TokenTable, Vocabulary};
use crate::tensor::{read_checkpoint, write_checkpoint};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const META_FILE: &str = "model.meta";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub proto_name: String,
    pub languages: Vec<String>,
    pub best_epoch: usize,
    pub max_decode_len: usize,
    pub config: TransformerConfig,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,lr,train_loss,val_ped\n");
    for r in history {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.lr, r.train_loss, r.val_ped));
    }
    s
}

fn parse_history(text: &str) -> Result<Vec<EpochRecord>, TransformerError> {
    let bad = |l: &str| TransformerError::Meta(format!("bad history line {l:?}"));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let [epoch, lr, loss, ped] = f[..] else { return Err(bad(l)) };
            Ok(EpochRecord {
                epoch: epoch.parse().map_err(|_| bad(l))?,
                lr: lr.parse().map_err(|_| bad(l))?,
                train_loss: loss.parse().map_err(|_| bad(l))?,
                val_ped: ped.parse().map_err(|_| bad(l))?,
            })
        })
        .collect()
}

pub fn save_trained(dir: &Path, tm: &TrainedModel) -> Result<(), TransformerError> {
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join(CHECKPOINT_FILE))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, &tm.model.params)?;
    drop(w);
    let meta = ModelMeta {
        proto_name: tm.proto_name.clone(),
        languages: tm.languages.clone(),
        best_epoch: tm.best_epoch,
        max_decode_len: tm.max_decode_len,
        config: tm.model.config.clone(),
        source_tokens: tm.vocab.source.tokens().to_vec(),
        target_tokens: tm.vocab.target.tokens().to_vec(),
    };
    let text = toml::to_string(&meta).map_err(|e| TransformerError::Meta(e.to_string()))?;
    fs::write(dir.join(META_FILE), text)?;
    fs::write(dir.join(HISTORY_FILE), history_csv(&tm.history))?;
    Ok(())
}

pub fn load_trained(dir: &Path) -> Result<TrainedModel, TransformerError> {
    let meta_text = fs::read_to_string(dir.join(META_FILE))?;
    let meta: ModelMeta = toml::from_str(&meta_text).map_err(|e| TransformerError::Meta(e.to_string()))?;
    let vocab = Vocabulary {
        source: TokenTable::from_tokens(meta.source_tokens.clone())?,
        target: TokenTable::from_tokens(meta.target_tokens.clone())?,
    };
    let (_, params) = read_checkpoint(fs::File::open(dir.join(CHECKPOINT_FILE))?)?;
    let model = Model::with_params(meta.config.clone(), vocab.source.len(), vocab.target.len(), meta.languages.len(), params)?;
    let history = match fs::read_to_string(dir.join(HISTORY_FILE)) {
        Ok(text) => parse_history(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(TrainedModel {
        model,
        vocab,
        languages: meta.languages,
        proto_name: meta.proto_name,
        history,
        best_epoch: meta.best_epoch,
        max_decode_len: meta.max_decode_len,
    })
}
