use std::collections::BTreeMap;

use super::BaselineError;
use crate::corpus::phon::{classify, SegmentClass};
use crate::corpus::{CognateSet, Dataset, Token, Word};

/// Share of training daughter forms that must parse as one syllable for the
/// dataset to count as monosyllabic.
pub const MONOSYLLABIC_SHARE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyllableParse {
    pub onset: Vec<Token>,
    pub nucleus: Vec<Token>,
    pub coda: Vec<Token>,
    pub tone: Option<Token>,
}

impl SyllableParse {
    pub fn to_word(&self) -> Word {
        self.onset.iter().chain(&self.nucleus).chain(&self.coda).chain(&self.tone).cloned().collect()
    }
}

/// Splits a word into onset (initial non-vowel run), nucleus, coda (final
/// non-vowel run) and an optional trailing tone. Returns `None` unless the
/// nucleus is a nonempty run of vowels and tones occur only at the end.
pub fn parse_syllable(word: &Word) -> Option<SyllableParse> {
    let mut toks = word.tokens();
    let mut tone = None;
    if let Some((last, rest)) = toks.split_last() {
        if classify(last.as_str()) == SegmentClass::Tone {
            tone = Some(last.clone());
            toks = rest;
        }
    }
    if toks.iter().any(|t| classify(t.as_str()) == SegmentClass::Tone) {
        return None;
    }
    let is_vowel = |t: &Token| classify(t.as_str()) == SegmentClass::Vowel;
    let onset_len = toks.iter().take_while(|t| !is_vowel(t)).count();
    let coda_len = toks[onset_len..].iter().rev().take_while(|t| !is_vowel(t)).count();
    let nucleus = &toks[onset_len..toks.len() - coda_len];
    if nucleus.is_empty() || !nucleus.iter().all(is_vowel) {
        return None;
    }
    Some(SyllableParse {
        onset: toks[..onset_len].to_vec(),
        nucleus: nucleus.to_vec(),
        coda: toks[toks.len() - coda_len..].to_vec(),
        tone,
    })
}

/// Predicts each syllable constituent as the most common value among the
/// daughters.
#[derive(Debug, Clone)]
pub struct MajorityConstituent {
    _private: (),
}

impl MajorityConstituent {
    /// Checks that `train` is monosyllabic enough for the method to apply.
    pub fn fit(train: &Dataset) -> Result<Self, BaselineError> {
        let forms: Vec<&Word> = train.sets.iter().flat_map(|s| s.daughters.values()).collect();
        if forms.is_empty() {
            return Err(BaselineError::Unsupported("no daughter forms".into()));
        }
        let parsed = forms.iter().filter(|w| parse_syllable(w).is_some()).count();
        let share = parsed as f64 / forms.len() as f64;
        if share < MONOSYLLABIC_SHARE {
            return Err(BaselineError::Unsupported(format!(
                "majority constituent needs monosyllabic data; only {:.1}% of forms parse as one syllable",
                100.0 * share
            )));
        }
        Ok(MajorityConstituent { _private: () })
    }

    pub fn predict(&self, cs: &CognateSet) -> Result<Word, BaselineError> {
        if cs.daughters.is_empty() {
            return Err(BaselineError::NoDaughters(cs.set_id.clone()));
        }
        let parses: Vec<SyllableParse> = cs.daughters.values().filter_map(parse_syllable).collect();
        if parses.is_empty() {
            return Err(BaselineError::Unparseable(cs.set_id.clone()));
        }
        let pick = |part: &dyn Fn(&SyllableParse) -> Vec<Token>| -> Vec<Token> {
            let mut counts: BTreeMap<Vec<Token>, usize> = BTreeMap::new();
            for p in &parses {
                *counts.entry(part(p)).or_default() += 1;
            }
            // BTreeMap iterates in lexicographic order, so the first maximum wins ties
            let best = counts.values().copied().max().unwrap_or(0);
            counts.into_iter().find(|(_, c)| *c == best).map(|(k, _)| k).unwrap_or_default()
        };
        let onset = pick(&|p| p.onset.clone());
        let nucleus = pick(&|p| p.nucleus.clone());
        let coda = pick(&|p| p.coda.clone());
        let tone = pick(&|p| p.tone.iter().cloned().collect());
        Ok(onset.into_iter().chain(nucleus).chain(coda).chain(tone).collect())
    }
}

/// One-shot form of [`MajorityConstituent`].
pub fn majority_constituent(train: &Dataset, cs: &CognateSet) -> Result<Word, BaselineError> {
    MajorityConstituent::fit(train)?.predict(cs)
}
