//! Synthetic cognate data from ordered sound-change rules.
//!
//! A rules file declares the phoneme inventory and, per daughter language,
//! contextual rewrite rules in the usual `x > y / L _ R` notation:
//!
//! ```text
//! ; comment
//! consonants: p t k b d g s z m n l r
//! vowels: a e i o u ə
//! proto: p t k s m n l r a e i o u
//!
//! daughter West
//!   t > z / # _
//!   k > g / V _ V
//!   a|e > ə / _ #
//!   n > ∅ / _ #
//! ```
//!
//! `C` and `V` stand for any declared consonant or vowel, `#` for a word
//! boundary, `|` separates alternatives, and `∅` (or `0`) is the empty
//! replacement. Each rule is applied in a single left-to-right pass taking the
//! longest matching target at each position, with contexts read from the
//! rule's input; rules apply in listed order.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::phon::{classify, SegmentClass};
use crate::corpus::{tokenize_form, CognateSet, Dataset, LanguageId, Token, TokenizerOptions, Word};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("rules line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("rules line {line}: phoneme {phoneme:?} is not declared in the inventory")]
    Undeclared { line: usize, phoneme: String },
    #[error("{requested} daughters requested but the rules define {available}")]
    TooManyDaughters { requested: usize, available: usize },
    #[error("rules define no daughter languages")]
    NoDaughters,
    #[error("cannot sample {wanted} distinct protoforms from this inventory")]
    Exhausted { wanted: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Elem {
    Phone(String),
    Class(SegmentClass),
    Boundary,
}

/// One context or target slot: any of the alternatives matches.
type Slot = Vec<Elem>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    /// Alternative target sequences.
    targets: Vec<Vec<Elem>>,
    replacement: Vec<String>,
    left: Vec<Slot>,
    right: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Daughter {
    pub name: String,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub consonants: Vec<String>,
    pub vowels: Vec<String>,
    /// Phonemes used to sample protoforms.
    pub proto: Vec<String>,
    pub daughters: Vec<Daughter>,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut consonants = None;
        let mut vowels = None;
        let mut proto = None;
        // rule lines are parsed once the inventory is known
        let mut pending: Vec<(String, Vec<(usize, String)>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split(';').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| SynthError::Parse { line: line_no, message: message.to_string() };
            if let Some(rest) = line.strip_prefix("consonants:") {
                consonants = Some(words(rest));
            } else if let Some(rest) = line.strip_prefix("vowels:") {
                vowels = Some(words(rest));
            } else if let Some(rest) = line.strip_prefix("proto:") {
                proto = Some(words(rest));
            } else if let Some(rest) = line.strip_prefix("daughter") {
                let name = rest.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(err("daughter needs a single-word name"));
                }
                if pending.iter().any(|(n, _)| n == name) {
                    return Err(err("duplicate daughter name"));
                }
                pending.push((name.to_string(), Vec::new()));
            } else {
                let Some((_, rules)) = pending.last_mut() else {
                    return Err(err("rule outside a daughter block"));
                };
                rules.push((line_no, line.to_string()));
            }
        }
        let consonants = consonants.ok_or_else(|| SynthError::Parse { line: 0, message: "missing consonants line".into() })?;
        let vowels = vowels.ok_or_else(|| SynthError::Parse { line: 0, message: "missing vowels line".into() })?;
        let declared: HashSet<&str> = consonants.iter().chain(&vowels).map(String::as_str).collect();
        for p in consonants.iter().chain(&vowels) {
            if p == "C" || p == "V" || p == "#" || p == "_" {
                return Err(SynthError::Parse { line: 0, message: format!("{p:?} is reserved") });
            }
            let single = tokenize_form(p, &TokenizerOptions::default()).map(|w| w.len() == 1).unwrap_or(false);
            if !single {
                return Err(SynthError::Parse { line: 0, message: format!("inventory entry {p:?} is not a single segment") });
            }
        }
        let proto = proto.unwrap_or_else(|| consonants.iter().chain(&vowels).cloned().collect());
        for p in &proto {
            if !declared.contains(p.as_str()) {
                return Err(SynthError::Undeclared { line: 0, phoneme: p.clone() });
            }
        }
        if pending.is_empty() {
            return Err(SynthError::NoDaughters);
        }
        let mut daughters = Vec::new();
        for (name, lines) in pending {
            let rules = lines.iter().map(|(n, l)| parse_rule(*n, l, &declared)).collect::<Result<_, _>>()?;
            daughters.push(Daughter { name, rules });
        }
        Ok(RuleSet { consonants, vowels, proto, daughters })
    }

    fn class_of(&self, phone: &str) -> SegmentClass {
        if self.vowels.iter().any(|v| v == phone) {
            SegmentClass::Vowel
        } else if self.consonants.iter().any(|c| c == phone) {
            SegmentClass::Consonant
        } else {
            classify(phone)
        }
    }

    fn matches(&self, elem: &Elem, phone: &str) -> bool {
        match elem {
            Elem::Phone(p) => p == phone,
            Elem::Class(c) => self.class_of(phone) == *c,
            Elem::Boundary => false,
        }
    }

    fn slot_matches(&self, slot: &Slot, word: &[String], at: Option<usize>) -> bool {
        slot.iter().any(|e| match (e, at) {
            (Elem::Boundary, None) => true,
            (Elem::Boundary, Some(_)) | (_, None) => false,
            (e, Some(i)) => self.matches(e, &word[i]),
        })
    }

    /// Length of the longest target of `rule` matchable at `i` with its
    /// context satisfied.
    fn match_at(&self, rule: &Rule, word: &[String], i: usize) -> Option<usize> {
        let mut best = None;
        for target in &rule.targets {
            let len = target.len();
            if i + len > word.len() || best.is_some_and(|b| b >= len) {
                continue;
            }
            if !target.iter().zip(&word[i..i + len]).all(|(e, p)| self.matches(e, p)) {
                continue;
            }
            let left_ok = rule.left.iter().rev().enumerate().all(|(k, slot)| {
                let at = (i as isize) - 1 - k as isize;
                match at {
                    a if a >= 0 => self.slot_matches(slot, word, Some(a as usize)),
                    -1 => self.slot_matches(slot, word, None),
                    _ => false,
                }
            });
            let right_ok = rule.right.iter().enumerate().all(|(k, slot)| {
                let at = i + len + k;
                match at.cmp(&word.len()) {
                    std::cmp::Ordering::Less => self.slot_matches(slot, word, Some(at)),
                    std::cmp::Ordering::Equal => self.slot_matches(slot, word, None),
                    std::cmp::Ordering::Greater => false,
                }
            });
            if left_ok && right_ok {
                best = Some(len);
            }
        }
        best
    }

    fn apply_rule(&self, rule: &Rule, word: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(word.len());
        let mut i = 0;
        while i < word.len() {
            match self.match_at(rule, word, i) {
                Some(len) => {
                    out.extend(rule.replacement.iter().cloned());
                    i += len;
                }
                None => {
                    out.push(word[i].clone());
                    i += 1;
                }
            }
        }
        out
    }

    /// Runs daughter `d`'s rules over a proto word.
    pub fn derive(&self, d: usize, proto: &[String]) -> Vec<String> {
        self.daughters[d].rules.iter().fold(proto.to_vec(), |w, r| self.apply_rule(r, &w))
    }
}

fn parse_elem(tok: &str, line: usize, declared: &HashSet<&str>) -> Result<Elem, SynthError> {
    match tok {
        "C" => Ok(Elem::Class(SegmentClass::Consonant)),
        "V" => Ok(Elem::Class(SegmentClass::Vowel)),
        "#" => Ok(Elem::Boundary),
        p if declared.contains(p) => Ok(Elem::Phone(p.to_string())),
        p => Err(SynthError::Undeclared { line, phoneme: p.to_string() }),
    }
}

fn parse_rule(line: usize, text: &str, declared: &HashSet<&str>) -> Result<Rule, SynthError> {
    let err = |message: &str| SynthError::Parse { line, message: message.to_string() };
    let text = text.replace('→', ">");
    let (change, context) = match text.split_once('/') {
        Some((c, ctx)) => (c, Some(ctx)),
        None => (text.as_str(), None),
    };
    let (target, replacement) = change.split_once('>').ok_or_else(|| err("rule needs `>`"))?;
    let mut targets = Vec::new();
    for alt in target.split('|') {
        let seq = alt
            .split_whitespace()
            .map(|t| parse_elem(t, line, declared))
            .collect::<Result<Vec<_>, _>>()?;
        if seq.is_empty() || seq.contains(&Elem::Boundary) {
            return Err(err("each target alternative needs at least one segment and no boundary"));
        }
        targets.push(seq);
    }
    let replacement: Vec<String> = match replacement.trim() {
        "∅" | "0" => Vec::new(),
        r => r
            .split_whitespace()
            .map(|p| if declared.contains(p) { Ok(p.to_string()) } else { Err(SynthError::Undeclared { line, phoneme: p.to_string() }) })
            .collect::<Result<_, _>>()?,
    };
    let (mut left, mut right) = (Vec::new(), Vec::new());
    if let Some(ctx) = context {
        let toks: Vec<&str> = ctx.split_whitespace().collect();
        let focus = toks.iter().position(|t| *t == "_").ok_or_else(|| err("context needs `_`"))?;
        if toks.iter().filter(|t| **t == "_").count() != 1 {
            return Err(err("context needs exactly one `_`"));
        }
        let slot = |t: &str| t.split('|').map(|a| parse_elem(a, line, declared)).collect::<Result<Slot, _>>();
        left = toks[..focus].iter().map(|t| slot(t)).collect::<Result<_, _>>()?;
        right = toks[focus + 1..].iter().map(|t| slot(t)).collect::<Result<_, _>>()?;
        let inner_boundary = |slots: &[Slot], edge: usize| {
            slots.iter().enumerate().any(|(k, s)| k != edge && s.contains(&Elem::Boundary))
        };
        if inner_boundary(&left, 0) || inner_boundary(&right, right.len().saturating_sub(1)) {
            return Err(err("`#` may only sit at the outer edge of a context"));
        }
    }
    Ok(Rule { targets, replacement, left, right })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub n_sets: usize,
    /// Use the first `n` daughters of the rules file; all when `None`.
    pub n_daughters: Option<usize>,
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
}

impl GenerateOptions {
    pub fn new(n_sets: usize, seed: u64) -> Self {
        GenerateOptions { n_sets, n_daughters: None, seed, min_len: 3, max_len: 6 }
    }
}

/// Samples distinct protoforms alternating consonants and vowels (length
/// uniform in `min_len..=max_len`, random first class) and derives every
/// daughter reflex through its rules. A reflex emptied by deletions is
/// recorded as missing.
pub fn generate(rules: &RuleSet, opts: &GenerateOptions) -> Result<Dataset, SynthError> {
    let available = rules.daughters.len();
    let n_daughters = opts.n_daughters.unwrap_or(available);
    if n_daughters > available {
        return Err(SynthError::TooManyDaughters { requested: n_daughters, available });
    }
    if n_daughters == 0 {
        return Err(SynthError::NoDaughters);
    }
    let cons: Vec<&String> = rules.proto.iter().filter(|p| rules.class_of(p) == SegmentClass::Consonant).collect();
    let vows: Vec<&String> = rules.proto.iter().filter(|p| rules.class_of(p) == SegmentClass::Vowel).collect();
    if cons.is_empty() || vows.is_empty() {
        return Err(SynthError::Parse { line: 0, message: "proto inventory needs consonants and vowels".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seen = HashSet::new();
    let mut sets = Vec::with_capacity(opts.n_sets);
    let mut attempts = 0usize;
    while sets.len() < opts.n_sets {
        attempts += 1;
        if attempts > opts.n_sets * 100 + 1000 {
            return Err(SynthError::Exhausted { wanted: opts.n_sets });
        }
        let len = rng.gen_range(opts.min_len..=opts.max_len.max(opts.min_len));
        let mut vowel = rng.gen_bool(0.5);
        let mut proto = Vec::with_capacity(len);
        for _ in 0..len {
            let pool = if vowel { &vows } else { &cons };
            proto.push((*pool.choose(&mut rng).expect("nonempty pool")).clone());
            vowel = !vowel;
        }
        if !seen.insert(proto.clone()) {
            continue;
        }
        let mut daughters = BTreeMap::new();
        for d in 0..n_daughters {
            let reflex = rules.derive(d, &proto);
            if !reflex.is_empty() {
                daughters.insert(d, reflex.into_iter().map(Token::new).collect::<Word>());
            }
        }
        if daughters.is_empty() {
            continue;
        }
        sets.push(CognateSet {
            set_id: format!("s{:04}", sets.len() + 1),
            proto: proto.into_iter().map(Token::new).collect(),
            daughters,
        });
    }
    let languages = rules.daughters[..n_daughters]
        .iter()
        .enumerate()
        .map(|(index, d)| LanguageId { name: d.name.clone(), index })
        .collect();
    Ok(Dataset { sets, languages, proto_name: "Proto".into() })
}

const ONSETS: &[&str] = &["p", "pʰ", "b", "t", "tʰ", "d", "k", "kʰ", "g", "s", "ʃ", "z", "m", "n", "ŋ", "l", "h", "x", "ɕ", "ʈ"];
const MEDIALS: &[&str] = &["j", "w"];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ə", "ɛ", "ɔ", "y", "ɨ"];
const CODAS: &[&str] = &["m", "n", "ŋ", "p", "t", "k"];
const CONTOURS: &[&str] = &["˥", "˧", "˩", "˥˩", "˧˥", "˨˩", "˩˧", "˥˧", "˨˩˦", "˧˩", "˦", "˨"];
const PROTO_TONES: &[&str] = &["˥", "˧˥", "˨˩", "˥˩"];

/// A corpus shaped like monosyllabic tone-language data: proto syllables of
/// onset, optional medial, nucleus, optional coda and a tone, with each
/// daughter applying its own seeded segment mergers and tone mapping, and
/// each reflex attested with probability `attested`.
pub fn tonal_monosyllables(n_sets: usize, n_daughters: usize, attested: f64, seed: u64) -> Result<Dataset, SynthError> {
    if n_daughters == 0 {
        return Err(SynthError::NoDaughters);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, pool: &[&str]| pool[rng.gen_range(0..pool.len())].to_string();
    // per-daughter substitution tables over the proto inventory
    let mut tables: Vec<BTreeMap<String, Option<String>>> = Vec::with_capacity(n_daughters);
    for _ in 0..n_daughters {
        let mut t = BTreeMap::new();
        for &o in ONSETS {
            t.insert(o.to_string(), Some(if rng.gen_bool(0.3) { pick(&mut rng, ONSETS) } else { o.to_string() }));
        }
        for &v in NUCLEI {
            t.insert(v.to_string(), Some(if rng.gen_bool(0.3) { pick(&mut rng, NUCLEI) } else { v.to_string() }));
        }
        for &c in CODAS {
            let r = if rng.gen_bool(0.2) { None } else if rng.gen_bool(0.2) { Some(pick(&mut rng, CODAS)) } else { Some(c.to_string()) };
            t.insert(format!("-{c}"), r);
        }
        for &tone in PROTO_TONES {
            t.insert(tone.to_string(), Some(pick(&mut rng, CONTOURS)));
        }
        tables.push(t);
    }
    let mut seen = HashSet::new();
    let mut sets = Vec::with_capacity(n_sets);
    let mut attempts = 0usize;
    while sets.len() < n_sets {
        attempts += 1;
        if attempts > n_sets * 100 + 1000 {
            return Err(SynthError::Exhausted { wanted: n_sets });
        }
        let onset = pick(&mut rng, ONSETS);
        let medial = rng.gen_bool(0.3).then(|| pick(&mut rng, MEDIALS));
        let nucleus = pick(&mut rng, NUCLEI);
        let coda = rng.gen_bool(0.5).then(|| pick(&mut rng, CODAS));
        let tone = pick(&mut rng, PROTO_TONES);
        let proto: Vec<String> = [Some(onset.clone()), medial.clone(), Some(nucleus.clone()), coda.clone(), Some(tone.clone())]
            .into_iter()
            .flatten()
            .collect();
        if !seen.insert(proto.clone()) {
            continue;
        }
        let mut daughters = BTreeMap::new();
        for (d, t) in tables.iter().enumerate() {
            if !rng.gen_bool(attested) {
                continue;
            }
            let mut reflex: Vec<String> = Vec::new();
            reflex.extend(t[&onset].clone());
            reflex.extend(medial.clone());
            reflex.extend(t[&nucleus].clone());
            if let Some(c) = &coda {
                reflex.extend(t[&format!("-{c}")].clone());
            }
            reflex.extend(t[&tone].clone());
            daughters.insert(d, reflex.into_iter().map(Token::new).collect::<Word>());
        }
        if daughters.is_empty() {
            let d = rng.gen_range(0..n_daughters);
            let t = &tables[d];
            let reflex: Vec<String> = [t[&onset].clone(), Some(nucleus.clone()), t[&tone].clone()].into_iter().flatten().collect();
            daughters.insert(d, reflex.into_iter().map(Token::new).collect::<Word>());
        }
        sets.push(CognateSet {
            set_id: format!("m{:04}", sets.len() + 1),
            proto: proto.into_iter().map(Token::new).collect(),
            daughters,
        });
    }
    let languages = (0..n_daughters).map(|index| LanguageId { name: format!("D{:02}", index + 1), index }).collect();
    Ok(Dataset { sets, languages, proto_name: "Proto".into() })
}
