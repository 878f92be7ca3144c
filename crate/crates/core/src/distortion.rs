//! Word masking and shuffling.
//!
//! Frequent words are masked character-for-character with `*` (the "OO"
//! step: original order kept). Three shuffles then scramble part of the
//! remaining structure:
//!
//! * RPA: asterisk runs are shuffled among the slots that hold runs;
//! * RPRW: the surviving words are shuffled among word slots;
//! * RPE: runs and words are shuffled together.
//!
//! Separators never move. Shuffles are Fisher–Yates over slot indices,
//! driven by ChaCha8 seeded with `seed` on stream `repetition`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ncd::Document;

/// The ten masking degrees 0.1, 0.2, ..., 1.0.
pub fn standard_degrees() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyList {
    entries: Vec<(String, f64)>,
}

impl FrequencyList {
    /// Normalises the masses and sorts by falling mass, ties alphabetical.
    pub fn from_counts<I: IntoIterator<Item = (String, f64)>>(counts: I) -> Result<Self> {
        let mut merged: BTreeMap<String, f64> = BTreeMap::new();
        for (w, c) in counts {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::input(format!("frequency of {w:?} must be positive")));
            }
            *merged.entry(w.to_lowercase()).or_insert(0.0) += c;
        }
        if merged.is_empty() {
            return Err(Error::input("frequency list is empty"));
        }
        let total: f64 = merged.values().sum();
        let mut entries: Vec<(String, f64)> = merged.into_iter().map(|(w, c)| (w, c / total)).collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(FrequencyList { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Read `word<TAB>number` lines; `#` lines and blank lines are skipped.
pub fn load_frequency_list<R: BufRead>(source: R) -> Result<FrequencyList> {
    let mut counts = Vec::new();
    for (k, line) in source.lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let (word, num) = trimmed.split_once('\t').ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "expected word<TAB>number".into(),
        })?;
        let word = word.trim();
        if word.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty word".into(),
            });
        }
        let value: f64 = num.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("not a number: {:?}", num.trim()),
        })?;
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("frequency must be positive: {value}"),
            });
        }
        counts.push((word.to_string(), value));
    }
    FrequencyList::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordSet {
    pub degree: f64,
    pub words: HashSet<String>,
}

impl WordSet {
    pub fn empty() -> Self {
        WordSet {
            degree: 0.0,
            words: HashSet::new(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }
}

/// Shortest prefix of the list whose cumulative mass reaches each degree.
pub fn build_word_sets(freq: &FrequencyList, degrees: &[f64]) -> Result<Vec<WordSet>> {
    if degrees.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
        return Err(Error::input("degrees must lie in (0, 1]"));
    }
    if degrees.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::input("degrees must be sorted ascending"));
    }
    let mut cumulative = Vec::with_capacity(freq.len());
    let mut acc = 0.0;
    for (_, f) in &freq.entries {
        acc += f;
        cumulative.push(acc);
    }
    Ok(degrees
        .iter()
        .map(|&d| {
            let take = if d >= 1.0 {
                freq.len()
            } else {
                // tolerance absorbs rounding in the running sum
                cumulative.iter().position(|&c| c >= d - 1e-12).map_or(freq.len(), |i| i + 1)
            };
            WordSet {
                degree: d,
                words: freq.entries[..take].iter().map(|(w, _)| w.clone()).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Word,
    AsteriskRun,
    Separator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub original_index: usize,
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Words are alphabetic runs with internal apostrophes; everything else,
/// raw asterisks included, is separator text.
pub fn tokenize(text: &str) -> Vec<Token> {
    split(text, false)
}

/// Tokenizer for masked text: maximal `*` runs become their own tokens.
pub fn tokenize_masked(text: &str) -> Vec<Token> {
    split(text, true)
}

fn split(text: &str, runs: bool) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens: Vec<Token> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        let kind = if chars[i].is_alphabetic() {
            i += 1;
            while i < chars.len() {
                if chars[i].is_alphabetic() {
                    i += 1;
                } else if is_apostrophe(chars[i]) && i + 1 < chars.len() && chars[i + 1].is_alphabetic() {
                    i += 2;
                } else {
                    break;
                }
            }
            TokenKind::Word
        } else if runs && chars[i] == '*' {
            while i < chars.len() && chars[i] == '*' {
                i += 1;
            }
            TokenKind::AsteriskRun
        } else {
            while i < chars.len() && !chars[i].is_alphabetic() && !(runs && chars[i] == '*') {
                i += 1;
            }
            TokenKind::Separator
        };
        let index = tokens.len();
        tokens.push(Token {
            kind,
            text: chars[start..i].iter().collect(),
            original_index: index,
        });
    }
    tokens
}

/// Mask every listed word with one `*` per character.
pub fn apply_oo(text: &str, words: &WordSet) -> String {
    let mut out = String::with_capacity(text.len());
    for t in tokenize(text) {
        if t.kind == TokenKind::Word && words.contains(&t.text) {
            out.extend(std::iter::repeat('*').take(t.text.chars().count()));
        } else {
            out.push_str(&t.text);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    Oo,
    Rpa,
    Rprw,
    Rpe,
}

impl Technique {
    pub const ALL: [Technique; 4] = [Technique::Oo, Technique::Rpa, Technique::Rprw, Technique::Rpe];
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Technique::Oo => "OO",
            Technique::Rpa => "RPA",
            Technique::Rprw => "RPRW",
            Technique::Rpe => "RPE",
        })
    }
}

impl FromStr for Technique {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OO" => Ok(Technique::Oo),
            "RPA" => Ok(Technique::Rpa),
            "RPRW" => Ok(Technique::Rprw),
            "RPE" => Ok(Technique::Rpe),
            _ => Err(Error::input(format!("unknown technique {s:?}"))),
        }
    }
}

/// Where RPA may put asterisk runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunPlacement {
    /// Only into slots that already held a run.
    #[default]
    RunSlots,
    /// Into any word or run slot; words keep their relative order.
    AnySlot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionPlan {
    pub technique: Technique,
    pub degree: f64,
    pub seed: u64,
    pub repetition: u64,
    pub placement: RunPlacement,
}

impl DistortionPlan {
    pub fn new(technique: Technique, degree: f64, seed: u64, repetition: u64) -> Self {
        DistortionPlan {
            technique,
            degree,
            seed,
            repetition,
            placement: RunPlacement::default(),
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.repetition);
        rng
    }
}

/// In-place Fisher–Yates shuffle.
pub fn fisher_yates<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Shuffle masked text according to `plan`.
pub fn permute(text: &str, plan: &DistortionPlan) -> Result<String> {
    let mut tokens = tokenize_masked(text);
    let moves = |k: TokenKind| match plan.technique {
        Technique::Rpa => k == TokenKind::AsteriskRun,
        Technique::Rprw => k == TokenKind::Word,
        Technique::Rpe => k != TokenKind::Separator,
        Technique::Oo => false,
    };
    if plan.technique == Technique::Oo {
        return Err(Error::Contract("OO has nothing to permute".into()));
    }
    let mut rng = plan.rng();
    if plan.technique == Technique::Rpa && plan.placement == RunPlacement::AnySlot {
        let slots: Vec<usize> = (0..tokens.len())
            .filter(|&i| tokens[i].kind != TokenKind::Separator)
            .collect();
        let mut runs: Vec<Token> = Vec::new();
        let mut words: Vec<Token> = Vec::new();
        for &s in &slots {
            match tokens[s].kind {
                TokenKind::AsteriskRun => runs.push(tokens[s].clone()),
                _ => words.push(tokens[s].clone()),
            }
        }
        // choose which slots receive runs, then shuffle the runs themselves
        let mut flags: Vec<bool> = (0..slots.len()).map(|i| i < runs.len()).collect();
        fisher_yates(&mut flags, &mut rng);
        fisher_yates(&mut runs, &mut rng);
        let (mut r, mut w) = (runs.into_iter(), words.into_iter());
        for (&s, &is_run) in slots.iter().zip(&flags) {
            tokens[s] = if is_run { r.next() } else { w.next() }.expect("counts match");
        }
    } else {
        let slots: Vec<usize> = (0..tokens.len()).filter(|&i| moves(tokens[i].kind)).collect();
        let mut picked: Vec<Token> = slots.iter().map(|&i| tokens[i].clone()).collect();
        fisher_yates(&mut picked, &mut rng);
        for (&s, t) in slots.iter().zip(picked) {
            tokens[s] = t;
        }
    }
    Ok(tokens.into_iter().map(|t| t.text).collect())
}

/// Mask, then shuffle unless the plan is OO. Bodies must be UTF-8.
pub fn distort_document(doc: &Document, words: &WordSet, plan: &DistortionPlan) -> Result<Document> {
    let text = std::str::from_utf8(&doc.body)
        .map_err(|_| Error::input(format!("document {:?} is not UTF-8", doc.id)))?;
    let masked = apply_oo(text, words);
    let out = match plan.technique {
        Technique::Oo => masked,
        _ => permute(&masked, plan)?,
    };
    Ok(Document {
        id: doc.id.clone(),
        class_label: doc.class_label.clone(),
        body: out.into_bytes(),
    })
}
