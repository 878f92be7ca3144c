//! Order-N prediction by partial matching with escape method D.
//!
//! Only the ideal code length `sum(-log2 p)` is computed; no bitstream is
//! produced. The estimator:
//!
//! * a context with per-symbol counts `c_s`, total `n` and `d` distinct
//!   symbols predicts a seen symbol with `(c_s - 1/2) / n` and escapes with
//!   `d / (2n)`;
//! * symbols already offered by a longer context are excluded from the
//!   shorter ones (their counts leave both `n` and `d`);
//! * a context with nothing left after exclusion is skipped at no cost;
//! * order -1 is uniform over the bytes not yet excluded;
//! * after every byte all context orders `0..=N` are updated (full updates),
//!   and counts are never rescaled.

use rustc_hash::FxHashMap;

use super::{CodeLength, MAX_PPM_ORDER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
struct Context {
    symbols: Vec<(u8, u32)>,
    total: u64,
}

impl Context {
    fn bump(&mut self, byte: u8) {
        self.total += 1;
        match self.symbols.iter_mut().find(|(s, _)| *s == byte) {
            Some((_, c)) => *c += 1,
            None => self.symbols.push((byte, 1)),
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Exclusion([u64; 4]);

impl Exclusion {
    #[inline]
    fn contains(&self, b: u8) -> bool {
        self.0[(b >> 6) as usize] & (1u64 << (b & 63)) != 0
    }

    #[inline]
    fn insert(&mut self, b: u8) {
        self.0[(b >> 6) as usize] |= 1u64 << (b & 63);
    }

    fn len(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

/// Adaptive context model of a fixed order.
///
/// Cloning a model snapshots its full state, including the running code
/// length, so `C(xy)` can be obtained by cloning the model after `x` and
/// continuing with `y`.
#[derive(Debug, Clone)]
pub struct PpmModel {
    order: usize,
    /// `tables[k]` holds the order-`k` contexts keyed by their last `k` bytes.
    tables: Vec<FxHashMap<u128, Context>>,
    history: u128,
    seen: usize,
    bits: f64,
}

#[inline]
fn context_mask(k: usize) -> u128 {
    if k == 0 {
        0
    } else if k >= 16 {
        u128::MAX
    } else {
        (1u128 << (8 * k)) - 1
    }
}

impl PpmModel {
    pub fn new(order: usize) -> Result<Self> {
        if !(1..=MAX_PPM_ORDER).contains(&order) {
            return Err(Error::InvalidSpec(format!(
                "ppm order {order} outside 1..={MAX_PPM_ORDER}"
            )));
        }
        Ok(PpmModel {
            order,
            tables: vec![FxHashMap::default(); order + 1],
            history: 0,
            seen: 0,
            bits: 0.0,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Total ideal code length of everything fed so far.
    pub fn bits(&self) -> f64 {
        self.bits
    }

    pub fn code_length(&self) -> CodeLength {
        CodeLength::from_bits(self.bits)
    }

    /// Number of distinct contexts stored at order `k`.
    pub fn context_count(&self, k: usize) -> usize {
        self.tables.get(k).map_or(0, |t| t.len())
    }

    /// Count of `byte` in the order-`k` context formed by `context` (its last
    /// `k` bytes). Intended for inspection and tests.
    pub fn count(&self, context: &[u8], byte: u8) -> u32 {
        let k = context.len();
        let key = context
            .iter()
            .fold(0u128, |h, &b| (h << 8) | b as u128);
        self.tables
            .get(k)
            .and_then(|t| t.get(&key))
            .and_then(|c| c.symbols.iter().find(|(s, _)| *s == byte))
            .map_or(0, |&(_, c)| c)
    }

    /// Code one byte, update the model and return its cost in bits.
    pub fn update(&mut self, byte: u8) -> f64 {
        let avail = self.order.min(self.seen);
        let mut excluded = Exclusion::default();
        let mut cost = 0.0f64;
        let mut coded = false;

        for k in (0..=avail).rev() {
            let key = self.history & context_mask(k);
            let ctx = self.tables[k].entry(key).or_default();
            if !coded {
                let mut n = 0u64;
                let mut d = 0u64;
                let mut hit = 0u64;
                for &(s, c) in &ctx.symbols {
                    if !excluded.contains(s) {
                        n += c as u64;
                        d += 1;
                        if s == byte {
                            hit = c as u64;
                        }
                    }
                }
                if d > 0 {
                    if hit > 0 {
                        cost -= ((2 * hit - 1) as f64 / (2 * n) as f64).log2();
                        coded = true;
                    } else {
                        cost -= (d as f64 / (2 * n) as f64).log2();
                        for &(s, _) in &ctx.symbols {
                            excluded.insert(s);
                        }
                    }
                }
            }
            ctx.bump(byte);
        }
        if !coded {
            cost += f64::from(256 - excluded.len()).log2();
        }

        self.history = (self.history << 8) | byte as u128;
        self.seen = self.seen.saturating_add(1);
        self.bits += cost;
        cost
    }

    pub fn feed(&mut self, data: &[u8]) {
        for &b in data {
            self.update(b);
        }
    }
}

/// Ideal PPM code length of `data` at context order `order`.
pub fn ppm_code_length(data: &[u8], order: usize) -> Result<CodeLength> {
    let mut model = PpmModel::new(order)?;
    model.feed(data);
    Ok(model.code_length())
}
