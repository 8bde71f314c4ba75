use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::decode::{greedy_decode_batch, max_decode_len};
use super::model::{collate, Model};
use super::TransformerError;
use crate::corpus::{encode_cognate_set, Dataset, EncodedExample, Vocabulary, Word};
use crate::metrics::edit_distance;
use crate::tensor::{adam_step, lr_at, AdamConfig, AdamState, Graph, ParamStore, ScheduleCfg};

/// Examples decoded together during validation.
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over batches of the per-token training loss.
    pub train_loss: f64,
    /// Mean phoneme edit distance of greedy reconstructions on validation.
    pub val_ped: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// The model holding the best epoch's parameters.
    pub model: Model,
    pub vocab: Vocabulary,
    pub languages: Vec<String>,
    pub proto_name: String,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub max_decode_len: usize,
}

impl TrainedModel {
    pub fn best_val_ped(&self) -> f64 {
        self.history[self.best_epoch].val_ped
    }
}

/// Returned by a training hook after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookAction {
    Continue,
    Stop,
}

fn encode_all(ds: &Dataset, vocab: &Vocabulary) -> Result<Vec<EncodedExample>, TransformerError> {
    Ok(ds.sets.iter().map(|s| encode_cognate_set(s, vocab)).collect::<Result<_, _>>()?)
}

/// Mean edit distance between greedy reconstructions and gold protoforms.
pub(crate) fn mean_ped(model: &Model, vocab: &Vocabulary, examples: &[EncodedExample], golds: &[Word], max_len: usize) -> Result<f64, TransformerError> {
    let preds = greedy_decode_batch(model, &vocab.target, examples, max_len, EVAL_BATCH)?;
    let total: usize = preds.iter().zip(golds).map(|(p, g)| edit_distance(&p.word, g)).sum();
    Ok(total as f64 / golds.len().max(1) as f64)
}

/// Trains for `model.config.total_epochs` epochs and keeps the parameters of
/// the epoch with the lowest validation edit distance (earliest on ties).
pub fn train(model: Model, vocab: &Vocabulary, train_split: &Dataset, val_split: &Dataset) -> Result<TrainedModel, TransformerError> {
    train_with_hook(model, vocab, train_split, val_split, |_, _| HookAction::Continue)
}

/// [`train`] with a callback after every epoch, which can end training early.
pub fn train_with_hook(
    mut model: Model,
    vocab: &Vocabulary,
    train_split: &Dataset,
    val_split: &Dataset,
    mut hook: impl FnMut(&EpochRecord, &Model) -> HookAction,
) -> Result<TrainedModel, TransformerError> {
    if train_split.is_empty() || val_split.is_empty() {
        return Err(TransformerError::Config("training and validation splits must be nonempty".into()));
    }
    let cfg = model.config.clone();
    let train_examples = encode_all(train_split, vocab)?;
    let val_examples = encode_all(val_split, vocab)?;
    let val_golds: Vec<Word> = val_split.sets.iter().map(|s| s.proto.clone()).collect();
    let max_len = max_decode_len(train_split);

    let schedule = ScheduleCfg { peak_lr: cfg.lr, warmup_epochs: cfg.warmup_epochs, total_epochs: cfg.total_epochs };
    let mut adam = AdamState::new(&model.params, AdamConfig { weight_decay: cfg.weight_decay, ..AdamConfig::default() });
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_5EED);
    let dropout_seed = cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(1);
    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut step = 0u64;

    for epoch in 0..cfg.total_epochs {
        let lr = lr_at(epoch, &schedule);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&EncodedExample> = chunk.iter().map(|&i| &train_examples[i]).collect();
            let batch = collate(&refs);
            let mut g = Graph::training(dropout_seed, step);
            let loss = model.loss(&mut g, &batch)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(TransformerError::Diverged { epoch, loss: value });
            }
            let grads = g.backward(loss)?.for_params(&model.params);
            adam_step(&mut model.params, &grads, &mut adam, lr).map_err(|_| TransformerError::Diverged { epoch, loss: f64::NAN })?;
            loss_sum += value;
            batches += 1;
            step += 1;
        }
        let val_ped = mean_ped(&model, vocab, &val_examples, &val_golds, max_len)?;
        let record = EpochRecord { epoch, lr, train_loss: loss_sum / batches as f64, val_ped };
        if best.as_ref().map_or(true, |(_, ped, _)| val_ped < *ped) {
            best = Some((epoch, val_ped, model.params.clone()));
        }
        let action = hook(&record, &model);
        history.push(record);
        if action == HookAction::Stop {
            break;
        }
    }
    let (best_epoch, _, params) = best.ok_or_else(|| TransformerError::Config("total_epochs must be positive".into()))?;
    model.params = params;
    Ok(TrainedModel {
        model,
        vocab: vocab.clone(),
        languages: train_split.languages.iter().map(|l| l.name.clone()).collect(),
        proto_name: train_split.proto_name.clone(),
        history,
        best_epoch,
        max_decode_len: max_len,
    })
}
