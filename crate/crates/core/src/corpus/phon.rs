//! Character and segment classes used by the tokenizer, the baselines and
//! the feature table.

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Combining tie bars join the following base letter into the same segment.
pub(crate) const TIE_BARS: [char; 2] = ['\u{0361}', '\u{035C}'];

const SYLLABIC_MARKS: [char; 2] = ['\u{0329}', '\u{030D}'];

const VOWELS: &str = "aeiouyæɐɑɒɔəɘɚɛɜɝɞɤɨɪɯɵøœɶʉʊʌʏᵻᴀ";

/// Chao tone letters and superscript digits.
pub fn is_tone_char(c: char) -> bool {
    matches!(c, '\u{02E5}'..='\u{02E9}' | '\u{00B9}' | '\u{00B2}' | '\u{00B3}' | '\u{2070}' | '\u{2074}'..='\u{2079}')
}

pub fn is_length_mark(c: char) -> bool {
    matches!(c, 'ː' | 'ˑ')
}

pub fn is_stress_mark(c: char) -> bool {
    matches!(c, 'ˈ' | 'ˌ')
}

/// Marks that attach to the preceding base segment: combining marks,
/// modifier letters (ʰ, ʷ, ʲ, ˠ, ʼ, ː ...) and spacing modifier symbols
/// such as the rhotic hook.
pub fn is_attaching_mark(c: char) -> bool {
    if is_tone_char(c) || is_stress_mark(c) {
        return false;
    }
    match get_general_category(c) {
        GeneralCategory::NonspacingMark
        | GeneralCategory::SpacingMark
        | GeneralCategory::EnclosingMark
        | GeneralCategory::ModifierLetter => true,
        GeneralCategory::ModifierSymbol => ('\u{02B0}'..='\u{02FF}').contains(&c),
        _ => false,
    }
}

/// Prosodic class of a surface token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentClass {
    Consonant,
    Vowel,
    Tone,
}

impl SegmentClass {
    pub fn name(self) -> &'static str {
        match self {
            SegmentClass::Consonant => "C",
            SegmentClass::Vowel => "V",
            SegmentClass::Tone => "T",
        }
    }
}

/// Classifies a token by its first character, treating syllabic consonants
/// (m̩, ŋ̍) as vowels.
pub fn classify(token: &str) -> SegmentClass {
    let Some(first) = token.chars().next() else {
        return SegmentClass::Consonant;
    };
    if token.chars().all(is_tone_char) {
        return SegmentClass::Tone;
    }
    let base = std::iter::once(first).nfd().next().unwrap_or(first);
    let base = base.to_lowercase().next().unwrap_or(base);
    if VOWELS.contains(base) || token.chars().any(|c| SYLLABIC_MARKS.contains(&c)) {
        SegmentClass::Vowel
    } else {
        SegmentClass::Consonant
    }
}
