use std::collections::{BTreeSet, HashMap};

use super::dataset::{CognateSet, Dataset};
use super::tokenize::{Token, Word};
use super::CorpusError;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Bijection between token texts and dense indices. Indices 0..4 are the
/// special tokens; surface tokens follow in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenTable {
    fn from_sorted<'a>(surface: impl IntoIterator<Item = &'a str>) -> Self {
        let tokens: Vec<String> =
            SPECIALS.iter().copied().chain(surface).map(str::to_string).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TokenTable { tokens, index }
    }

    /// Rebuilds a table from its full token list (specials first), as stored
    /// in checkpoint sidecars.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(CorpusError::Schema("token table must start with the special tokens".into()));
        }
        let index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(CorpusError::Schema("duplicate token in table".into()));
        }
        Ok(TokenTable { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, or `UNK` when unseen.
    pub fn lookup(&self, token: &Token) -> usize {
        self.index.get(token.as_str()).copied().unwrap_or(UNK)
    }

    pub fn get(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    pub fn text(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps indices back to a word, skipping special tokens.
    pub fn decode(&self, indices: &[usize]) -> Word {
        indices
            .iter()
            .filter(|&&i| i >= SPECIALS.len())
            .map(|&i| Token::new(self.tokens[i].clone()))
            .collect()
    }
}

/// Shared source table for all daughters and a separate target table for the
/// proto-language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub source: TokenTable,
    pub target: TokenTable,
}

/// Builds the vocabulary from a (training) dataset.
pub fn build_vocab(ds: &Dataset) -> Result<Vocabulary, CorpusError> {
    if ds.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut source = BTreeSet::new();
    let mut target = BTreeSet::new();
    for set in &ds.sets {
        for w in set.daughters.values() {
            source.extend(w.iter().map(Token::as_str));
        }
        target.extend(set.proto.iter().map(Token::as_str));
    }
    Ok(Vocabulary { source: TokenTable::from_sorted(source), target: TokenTable::from_sorted(target) })
}

/// Model input for one cognate set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub source: Vec<usize>,
    /// Daughter-local position of each source token (restarts at 0).
    pub positions: Vec<usize>,
    /// Daughter language index of each source token.
    pub languages: Vec<usize>,
    /// `BOS proto... EOS`.
    pub target: Vec<usize>,
}

/// Concatenates the present daughters in language order. Missing daughters
/// contribute nothing.
pub fn encode_cognate_set(cs: &CognateSet, vocab: &Vocabulary) -> Result<EncodedExample, CorpusError> {
    if cs.daughters.is_empty() {
        return Err(CorpusError::NoDaughters { set_id: cs.set_id.clone() });
    }
    let mut ex = EncodedExample { source: vec![], positions: vec![], languages: vec![], target: vec![BOS] };
    for (&lang, word) in &cs.daughters {
        for (pos, tok) in word.iter().enumerate() {
            ex.source.push(vocab.source.lookup(tok));
            ex.positions.push(pos);
            ex.languages.push(lang);
        }
    }
    ex.target.extend(cs.proto.iter().map(|t| vocab.target.lookup(t)));
    ex.target.push(EOS);
    Ok(ex)
}
