//! Probabilistic context-free grammars: parsing, sampling with exact
//! probability bookkeeping, exhaustive enumeration of finite languages,
//! Kullback-Leibler divergence and fixed-size corpus generation.
//!
//! File format, one production per line (`#` starts a comment):
//!
//! ```text
//! <prob> <LHS> : <RHS symbols separated by spaces>
//! ```
//!
//! `<prob>` is an integer, decimal or `a/b` literal, a bound parameter
//! name, or `<literal>-<name>` (e.g. `1-v`). The first production's LHS is
//! the root. Symbols that never appear on a LHS are terminals and are
//! emitted verbatim, without separators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ncd::Document;

/// Maximum number of expansions in one sampled derivation.
pub const MAX_DERIVATION_STEPS: usize = 10_000;
/// Largest language [`enumerate_distribution`] will materialise.
pub const MAX_LANGUAGE_SIZE: usize = 1_000_000;
pub const DEFAULT_CORPUS_BYTES: usize = 16_000;

pub type Distribution = BTreeMap<String, BigRational>;

#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub probability: BigRational,
    pub lhs: String,
    pub rhs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    pub root: String,
    pub productions: Vec<Production>,
    pub nonterminals: BTreeSet<String>,
    pub terminals: BTreeSet<String>,
    /// Trailing terminal of the root production, when it has one.
    pub delimiter: Option<String>,
    /// Production indices per LHS, in file order.
    by_lhs: HashMap<String, Vec<usize>>,
    /// Per-LHS cumulative probabilities used by the sampler.
    cumulative: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub text: String,
    pub probability: BigRational,
    pub entropy_bits: f64,
}

/// Parse a rational literal: `3`, `0.25`, `1/4`.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let int = if int.is_empty() { "0" } else { int };
        let digits: BigInt = format!("{int}{frac}").parse().ok()?;
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        return Some(BigRational::new(digits, scale));
    }
    s.parse::<BigInt>().ok().map(BigRational::from_integer)
}

/// Parse `name=value` pairs separated by commas, e.g. `v=1/4,w=1/2`.
pub fn parse_bindings(s: &str) -> Result<BTreeMap<String, BigRational>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::input(format!("binding {part:?} is not name=value")))?;
        let value = parse_rational(v)
            .ok_or_else(|| Error::input(format!("binding {part:?} has a bad rational")))?;
        out.insert(k.trim().to_string(), value);
    }
    Ok(out)
}

/// `1/4` style rendering used for class labels.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn eval_probability(
    token: &str,
    bindings: &BTreeMap<String, BigRational>,
    line: usize,
) -> Result<BigRational> {
    if let Some(r) = parse_rational(token) {
        return Ok(r);
    }
    let (constant, name) = match token.split_once('-') {
        Some((c, n)) => {
            let c = parse_rational(c).ok_or_else(|| Error::Parse {
                line,
                msg: format!("bad probability expression {token:?}"),
            })?;
            (Some(c), n.trim())
        }
        None => (None, token),
    };
    let value = bindings.get(name).ok_or_else(|| Error::Parse {
        line,
        msg: format!("unbound parameter {name:?}"),
    })?;
    Ok(match constant {
        Some(c) => c - value,
        None => value.clone(),
    })
}

pub fn parse_grammar(
    source: impl BufRead,
    bindings: &BTreeMap<String, BigRational>,
) -> Result<Grammar> {
    let mut productions = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<grammar>", e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, rhs) = line.split_once(" : ").ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "expected \"<prob> <LHS> : <RHS>\"".into(),
        })?;
        let mut head = head.split_whitespace();
        let (prob, lhs) = match (head.next(), head.next(), head.next()) {
            (Some(p), Some(l), None) => (p, l),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "expected a probability and one LHS symbol".into(),
                })
            }
        };
        let probability = eval_probability(prob, bindings, lineno)?;
        if probability.is_negative() || probability > BigRational::one() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("probability {probability} outside [0, 1]"),
            });
        }
        let rhs: Vec<String> = rhs.split_whitespace().map(str::to_string).collect();
        if rhs.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty right-hand side".into(),
            });
        }
        productions.push(Production {
            probability,
            lhs: lhs.to_string(),
            rhs,
        });
    }
    Grammar::new(productions)
}

impl Grammar {
    /// Validate productions and build lookup tables.
    pub fn new(productions: Vec<Production>) -> Result<Self> {
        let root = productions
            .first()
            .map(|p| p.lhs.clone())
            .ok_or_else(|| Error::input("grammar has no productions"))?;
        let nonterminals: BTreeSet<String> = productions.iter().map(|p| p.lhs.clone()).collect();
        let terminals: BTreeSet<String> = productions
            .iter()
            .flat_map(|p| p.rhs.iter())
            .filter(|s| !nonterminals.contains(*s))
            .cloned()
            .collect();

        let mut by_lhs: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, p) in productions.iter().enumerate() {
            by_lhs.entry(p.lhs.clone()).or_default().push(i);
        }
        for nt in &nonterminals {
            let sum: BigRational = by_lhs[nt]
                .iter()
                .map(|&i| productions[i].probability.clone())
                .sum();
            if !sum.is_one() {
                return Err(Error::input(format!(
                    "probabilities of {nt} sum to {sum}, not 1"
                )));
            }
        }
        let cumulative = by_lhs
            .iter()
            .map(|(nt, idx)| {
                let mut acc = 0.0;
                let cum = idx
                    .iter()
                    .map(|&i| {
                        acc += productions[i].probability.to_f64().unwrap_or(0.0);
                        acc
                    })
                    .collect();
                (nt.clone(), cum)
            })
            .collect();
        let delimiter = productions
            .iter()
            .find(|p| p.lhs == root)
            .and_then(|p| p.rhs.last())
            .filter(|s| terminals.contains(*s))
            .cloned();

        Ok(Grammar {
            root,
            productions,
            nonterminals,
            terminals,
            delimiter,
            by_lhs,
            cumulative,
        })
    }

    pub fn alternatives(&self, nonterminal: &str) -> &[usize] {
        self.by_lhs.get(nonterminal).map_or(&[], Vec::as_slice)
    }

    /// True when some nonterminal can derive itself.
    pub fn is_recursive(&self) -> bool {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        fn visit(g: &Grammar, nt: &str, marks: &mut HashMap<String, Mark>) -> bool {
            match marks.get(nt).copied().unwrap_or(Mark::New) {
                Mark::Active => return true,
                Mark::Done => return false,
                Mark::New => {}
            }
            marks.insert(nt.to_string(), Mark::Active);
            for &i in g.alternatives(nt) {
                for s in &g.productions[i].rhs {
                    if g.nonterminals.contains(s) && visit(g, s, marks) {
                        return true;
                    }
                }
            }
            marks.insert(nt.to_string(), Mark::Done);
            false
        }
        let mut marks = HashMap::new();
        self.nonterminals
            .iter()
            .any(|nt| visit(self, nt, &mut marks))
    }

    /// Number of derivations from the root, saturating at `usize::MAX`.
    fn language_size(&self) -> usize {
        fn count(g: &Grammar, sym: &str, memo: &mut HashMap<String, usize>) -> usize {
            if !g.nonterminals.contains(sym) {
                return 1;
            }
            if let Some(&c) = memo.get(sym) {
                return c;
            }
            let total = g.alternatives(sym).iter().fold(0usize, |acc, &i| {
                let prod = g.productions[i]
                    .rhs
                    .iter()
                    .fold(1usize, |p, s| p.saturating_mul(count(g, s, memo)));
                acc.saturating_add(prod)
            });
            memo.insert(sym.to_string(), total);
            total
        }
        count(self, &self.root, &mut HashMap::new())
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.productions {
            writeln!(
                f,
                "{} {} : {}",
                format_rational(&p.probability),
                p.lhs,
                p.rhs.join(" ")
            )?;
        }
        Ok(())
    }
}

/// Sample one sentence by leftmost expansion from the root.
pub fn generate_sentence<R: Rng + ?Sized>(g: &Grammar, rng: &mut R) -> Result<Sentence> {
    let mut text = String::new();
    let mut probability = BigRational::one();
    let mut entropy_bits = 0.0;
    let mut stack: Vec<&str> = vec![g.root.as_str()];
    let mut steps = 0usize;

    while let Some(sym) = stack.pop() {
        if !g.nonterminals.contains(sym) {
            text.push_str(sym);
            continue;
        }
        steps += 1;
        if steps > MAX_DERIVATION_STEPS {
            return Err(Error::Resource(format!(
                "derivation exceeded {MAX_DERIVATION_STEPS} expansions (runaway grammar)"
            )));
        }
        let alts = g.alternatives(sym);
        let cum = &g.cumulative[sym];
        let u: f64 = rng.gen();
        let k = cum
            .iter()
            .position(|&c| u < c)
            .unwrap_or(alts.len() - 1);
        let prod = &g.productions[alts[k]];
        entropy_bits -= prod.probability.to_f64().unwrap_or(0.0).log2();
        probability *= &prod.probability;
        stack.extend(prod.rhs.iter().rev().map(String::as_str));
    }
    Ok(Sentence {
        text,
        probability,
        entropy_bits,
    })
}

/// Exact sentence distribution of a finite language.
pub fn enumerate_distribution(g: &Grammar) -> Result<Distribution> {
    if g.is_recursive() {
        return Err(Error::Unsupported(
            "exact enumeration of a recursive grammar".into(),
        ));
    }
    let size = g.language_size();
    if size > MAX_LANGUAGE_SIZE {
        return Err(Error::Resource(format!(
            "language has {size} derivations, limit {MAX_LANGUAGE_SIZE}"
        )));
    }

    fn expand(g: &Grammar, sym: &str, memo: &mut HashMap<String, Vec<(String, BigRational)>>) -> Vec<(String, BigRational)> {
        if !g.nonterminals.contains(sym) {
            return vec![(sym.to_string(), BigRational::one())];
        }
        if let Some(v) = memo.get(sym) {
            return v.clone();
        }
        let mut out = Vec::new();
        for &i in g.alternatives(sym) {
            let p = &g.productions[i];
            let mut partial = vec![(String::new(), p.probability.clone())];
            for s in &p.rhs {
                let sub = expand(g, s, memo);
                partial = partial
                    .iter()
                    .flat_map(|(t, q)| sub.iter().map(move |(u, r)| (format!("{t}{u}"), q * r)))
                    .collect();
            }
            out.extend(partial);
        }
        memo.insert(sym.to_string(), out.clone());
        out
    }

    let mut dist = Distribution::new();
    for (text, p) in expand(g, &g.root, &mut HashMap::new()) {
        if p.is_zero() {
            continue;
        }
        *dist.entry(text).or_insert_with(BigRational::zero) += p;
    }
    Ok(dist)
}

/// `sum_X q_X log2(q_X / p_X)` in bits.
pub fn kl_divergence(q: &Distribution, p: &Distribution) -> Result<f64> {
    let mut total = 0.0;
    let mut identical = q.len() == p.len();
    for (x, qx) in q {
        if qx.is_zero() {
            continue;
        }
        let px = p
            .get(x)
            .filter(|px| !px.is_zero())
            .ok_or_else(|| Error::Domain(format!("sentence {x:?} outside the support of p")))?;
        if qx != px {
            identical = false;
        }
        let qf = qx.to_f64().unwrap_or(0.0);
        total += qf * (qx / px).to_f64().unwrap_or(f64::NAN).log2();
    }
    if identical {
        return Ok(0.0);
    }
    Ok(total.max(0.0))
}

/// Shannon entropy of a distribution, in bits.
pub fn entropy(dist: &Distribution) -> f64 {
    dist.values()
        .filter_map(|p| p.to_f64())
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// Parameters of one generated corpus file.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub grammar: Grammar,
    pub target_size_bytes: usize,
    pub seed: u64,
    /// Selects an independent PRNG stream for this file.
    pub stream: u64,
    pub id: String,
    pub class_label: String,
}

/// The PRNG used for sampling: ChaCha8 keyed by `seed`, stream `stream`.
pub fn corpus_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Concatenate sampled sentences while the total stays within the target.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Document> {
    let mut rng = corpus_rng(spec.seed, spec.stream);
    let mut body = String::new();
    loop {
        let s = generate_sentence(&spec.grammar, &mut rng)?;
        if body.len() + s.text.len() > spec.target_size_bytes {
            if body.is_empty() {
                return Err(Error::input(format!(
                    "target size {} is smaller than one sentence ({} bytes)",
                    spec.target_size_bytes,
                    s.text.len()
                )));
            }
            break;
        }
        body.push_str(&s.text);
    }
    Ok(Document::new(
        spec.id.clone(),
        spec.class_label.clone(),
        body.into_bytes(),
    ))
}
