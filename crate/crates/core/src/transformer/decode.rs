use super::model::{collate, Model};
use super::TransformerError;
use crate::corpus::{Dataset, EncodedExample, TokenTable, Word, BOS, EOS, PAD, UNK};

/// One greedy reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub word: Word,
    /// Decoding stopped at the length limit without producing EOS.
    pub truncated: bool,
}

impl Decoded {
    /// EOS was the first prediction.
    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }
}

/// Generation limit: twice the longest training protoform, at least 20.
pub fn max_decode_len(train: &Dataset) -> usize {
    let longest = train.sets.iter().map(|s| s.proto.len()).max().unwrap_or(0);
    (2 * longest).max(20)
}

fn to_decoded(indices: &[usize], target: &TokenTable) -> Decoded {
    let truncated = indices.last() != Some(&EOS);
    let body = if truncated { indices } else { &indices[..indices.len() - 1] };
    Decoded { word: target.decode(body), truncated }
}

/// Greedy decoding from BOS: repeatedly appends the arg-max token, never
/// choosing PAD, BOS or UNK, until EOS or `max_len` tokens.
pub fn greedy_decode(model: &Model, target: &TokenTable, example: &EncodedExample, max_len: usize) -> Result<Decoded, TransformerError> {
    Ok(greedy_decode_batch(model, target, std::slice::from_ref(example), max_len, 1)?.remove(0))
}

/// [`greedy_decode`] over many examples, `batch_size` at a time.
pub fn greedy_decode_batch(model: &Model, target: &TokenTable, examples: &[EncodedExample], max_len: usize, batch_size: usize) -> Result<Vec<Decoded>, TransformerError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        let batch = collate(&refs);
        for indices in model.greedy_indices(&batch, max_len, &[PAD, BOS, UNK], EOS, BOS)? {
            out.push(to_decoded(&indices, target));
        }
    }
    Ok(out)
}
