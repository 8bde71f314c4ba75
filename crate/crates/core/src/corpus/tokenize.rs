use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::phon::{is_attaching_mark, is_length_mark, is_stress_mark, is_tone_char, TIE_BARS};
use super::CorpusError;

/// One phoneme: a base segment with its merged diacritics, or a tone contour.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Token(String);

impl Token {
    /// Wraps `text` as a token. Panics on empty text or embedded whitespace,
    /// which the tokenizer never produces.
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        assert!(!text.is_empty(), "empty token");
        assert!(!text.chars().any(char::is_whitespace), "whitespace in token {text:?}");
        Token(text)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Token {
    fn from(s: &str) -> Self {
        Token::new(s)
    }
}

/// An ordered token sequence. Attested forms are non-empty; predictions may
/// be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<Token>);

impl Word {
    pub fn new(tokens: Vec<Token>) -> Self {
        Word(tokens)
    }

    /// Builds a word from whitespace-separated token texts (`"tʰ a n"`).
    pub fn from_spaced(s: &str) -> Self {
        Word(s.split_whitespace().map(Token::new).collect())
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Token> {
        self.0.iter()
    }

    /// Token texts joined without separators.
    pub fn surface(&self) -> String {
        self.0.iter().map(Token::as_str).collect()
    }

    /// Token texts joined by single spaces.
    pub fn spaced(&self) -> String {
        self.0.iter().map(Token::as_str).collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spaced())
    }
}

impl FromIterator<Token> for Word {
    fn from_iter<I: IntoIterator<Item = Token>>(iter: I) -> Self {
        Word(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Word {
    type Item = &'a Token;
    type IntoIter = std::slice::Iter<'a, Token>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptMode {
    /// IPA input: diacritics merge into segments, tone runs form one token.
    #[default]
    Phonetic,
    /// Orthographic input: one token per (NFC) character.
    Orthographic,
}

/// What to do with the IPA stress marks ˈ and ˌ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StressMode {
    /// Each stress mark is a token of its own.
    #[default]
    Separate,
    /// Stress marks are deleted.
    Strip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerOptions {
    pub mode: ScriptMode,
    pub strip_length: bool,
    pub stress: StressMode,
}

/// The string the tokenizer actually segments: NFD (phonetic) or NFC
/// (orthographic), whitespace removed, and length or stress marks removed
/// when the options ask for it. Token texts of `tokenize_form` always
/// concatenate to this string.
pub fn normalize_form(raw: &str, options: &TokenizerOptions) -> String {
    let normalized: String = match options.mode {
        ScriptMode::Phonetic => raw.nfd().collect(),
        ScriptMode::Orthographic => raw.nfc().collect(),
    };
    normalized
        .chars()
        .filter(|c| !c.is_whitespace())
        .filter(|&c| options.mode == ScriptMode::Orthographic || !(options.strip_length && is_length_mark(c)))
        .filter(|&c| options.mode == ScriptMode::Orthographic || !(options.stress == StressMode::Strip && is_stress_mark(c)))
        .collect()
}

#[derive(PartialEq)]
enum Pending {
    None,
    Segment,
    Tone,
}

/// Splits a surface form into phoneme tokens.
pub fn tokenize_form(raw: &str, options: &TokenizerOptions) -> Result<Word, CorpusError> {
    let text = normalize_form(raw, options);
    if text.is_empty() {
        return Err(CorpusError::EmptyForm);
    }
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut pending = Pending::None;
    let mut glue_next = false;


    for (offset, c) in text.char_indices() {
        if options.mode == ScriptMode::Orthographic {
            if is_attaching_mark(c) && pending == Pending::Segment && get_is_combining(c) {
                current.push(c);
                continue;
            }
            flush(&mut current, &mut tokens);
            current.push(c);
            pending = Pending::Segment;
            continue;
        }

        if is_stress_mark(c) {
            flush(&mut current, &mut tokens);
            tokens.push(Token::new(c.to_string()));
            pending = Pending::None;
            glue_next = false;
        } else if is_tone_char(c) {
            if pending != Pending::Tone {
                flush(&mut current, &mut tokens);
                pending = Pending::Tone;
            }
            current.push(c);
            glue_next = false;
        } else if is_attaching_mark(c) {
            if pending != Pending::Segment {
                return Err(CorpusError::OrphanMark { form: raw.to_string(), mark: c, offset });
            }
            current.push(c);
            if TIE_BARS.contains(&c) {
                glue_next = true;
            }
        } else if glue_next && pending == Pending::Segment {
            current.push(c);
            glue_next = false;
        } else {
            flush(&mut current, &mut tokens);
            current.push(c);
            pending = Pending::Segment;
        }
    }
    flush(&mut current, &mut tokens);
    Ok(Word::new(tokens))
}

fn flush(current: &mut String, tokens: &mut Vec<Token>) {
    if !current.is_empty() {
        tokens.push(Token::new(std::mem::take(current)));
    }
}

fn get_is_combining(c: char) -> bool {
    unicode_normalization::char::is_combining_mark(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn phon() -> TokenizerOptions {
        TokenizerOptions::default()
    }

    fn texts(w: &Word) -> Vec<&str> {
        w.iter().map(Token::as_str).collect()
    }

    #[test]
    fn aspirated_onset_and_tone_contour() {
        let w = tokenize_form("tʰan˥˩", &phon()).unwrap();
        assert_eq!(texts(&w), ["tʰ", "a", "n", "˥˩"]);
    }

    #[test]
    fn strip_vowel_length() {
        let opts = TokenizerOptions { strip_length: true, ..phon() };
        let w = tokenize_form("kaːsa", &opts).unwrap();
        assert_eq!(texts(&w), ["k", "a", "s", "a"]);
        let kept = tokenize_form("kaːsa", &phon()).unwrap();
        assert_eq!(texts(&kept), ["k", "aː", "s", "a"]);
    }

    #[test]
    fn combining_bridge_merges() {
        let w = tokenize_form("t\u{032A}o", &phon()).unwrap();
        assert_eq!(texts(&w), ["t\u{032A}", "o"]);
    }

    #[test]
    fn superscript_digit_tones() {
        let w = tokenize_form("ma⁵⁵", &phon()).unwrap();
        assert_eq!(texts(&w), ["m", "a", "⁵⁵"]);
        let w = tokenize_form("ʂʐ̩˥", &phon()).unwrap();
        assert_eq!(texts(&w), ["ʂ", "ʐ̩", "˥"]);
    }

    #[test]
    fn tie_bar_affricate() {
        let w = tokenize_form("t͡sʰa", &phon()).unwrap();
        assert_eq!(texts(&w), ["t͡sʰ", "a"]);
    }

    #[test]
    fn composed_and_decomposed_agree() {
        let a = tokenize_form("\u{00E3}o", &phon()).unwrap();
        let b = tokenize_form("a\u{0303}o", &phon()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn stress_modes() {
        let w = tokenize_form("ˈkasa", &phon()).unwrap();
        assert_eq!(texts(&w), ["ˈ", "k", "a", "s", "a"]);
        let opts = TokenizerOptions { stress: StressMode::Strip, ..phon() };
        assert_eq!(tokenize_form("ˈkasa", &opts).unwrap().len(), 4);
    }

    #[test]
    fn errors() {
        assert!(matches!(tokenize_form("", &phon()), Err(CorpusError::EmptyForm)));
        assert!(matches!(tokenize_form("  ", &phon()), Err(CorpusError::EmptyForm)));
        assert!(matches!(tokenize_form("\u{0303}a", &phon()), Err(CorpusError::OrphanMark { .. })));
        assert!(matches!(tokenize_form("˥ʰ", &phon()), Err(CorpusError::OrphanMark { .. })));
    }

    #[test]
    fn orthographic_characters() {
        let opts = TokenizerOptions { mode: ScriptMode::Orthographic, ..phon() };
        let w = tokenize_form("cafe\u{0301}", &opts).unwrap();
        assert_eq!(texts(&w), ["c", "a", "f", "é"]);
    }

    proptest! {
        #[test]
        fn round_trip(s in "[ptkaeiou\u{0303}\u{032A}ʰʷːˈ˥˧˩⁵ ]{1,12}", strip in any::<bool>()) {
            let opts = TokenizerOptions { strip_length: strip, ..phon() };
            if let Ok(w) = tokenize_form(&s, &opts) {
                prop_assert_eq!(w.surface(), normalize_form(&s, &opts));
                for t in w.iter() {
                    prop_assert!(!t.as_str().chars().any(char::is_whitespace));
                }
            }
        }
    }
}
