//! Greedy LZ77 with a fixed-width token format.
//!
//! Stream layout: a 4-byte little-endian header holding the input length,
//! then MSB-first tokens padded to a whole byte:
//!
//! * literal: flag `0`, 8-bit byte (9 bits);
//! * match: flag `1`, 16-bit `offset - 1`, 8-bit length (25 bits).
//!
//! The search buffer spans the previous 64 KiB, matches are 3..=255 bytes,
//! and at each position the longest match (nearest on ties) is taken.

use super::CodeLength;

pub const HEADER_BYTES: usize = 4;
pub const WINDOW: usize = 1 << 16;
pub const MIN_MATCH: usize = 3;
pub const MAX_MATCH: usize = 255;
/// Hash-chain candidates examined per position.
pub const MAX_CHAIN: usize = 4096;

const HASH_BITS: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Literal(u8),
    Match { offset: usize, len: usize },
}

#[derive(Default)]
pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    pub(crate) fn put(&mut self, value: u32, width: u32) {
        self.acc = (self.acc << width) | (value as u64 & ((1u64 << width) - 1));
        self.nbits += width;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.bytes.push((self.acc >> self.nbits) as u8);
        }
    }

    pub(crate) fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.bytes.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.bytes
    }
}

#[inline]
fn hash3(d: &[u8]) -> usize {
    let v = (d[0] as u32) << 16 | (d[1] as u32) << 8 | d[2] as u32;
    (v.wrapping_mul(2654435761) >> (32 - HASH_BITS)) as usize
}

/// Greedy parse of `data` into literals and back-references.
pub fn tokenize(data: &[u8]) -> Vec<Token> {
    let n = data.len();
    let mut head = vec![usize::MAX; 1 << HASH_BITS];
    let mut prev = vec![usize::MAX; WINDOW];
    let mut tokens = Vec::new();

    let insert = |pos: usize, head: &mut [usize], prev: &mut [usize]| {
        if pos + MIN_MATCH <= n {
            let h = hash3(&data[pos..]);
            prev[pos % WINDOW] = head[h];
            head[h] = pos;
        }
    };

    let mut pos = 0;
    while pos < n {
        let mut best_len = 0;
        let mut best_off = 0;
        if pos + MIN_MATCH <= n {
            let limit = MAX_MATCH.min(n - pos);
            let mut cand = head[hash3(&data[pos..])];
            let mut steps = 0;
            while cand != usize::MAX && pos - cand <= WINDOW && steps < MAX_CHAIN {
                let len = data[cand..]
                    .iter()
                    .zip(&data[pos..pos + limit])
                    .take_while(|(a, b)| a == b)
                    .count();
                if len > best_len {
                    best_len = len;
                    best_off = pos - cand;
                    if len == limit {
                        break;
                    }
                }
                let next = prev[cand % WINDOW];
                if next == usize::MAX || next >= cand {
                    break;
                }
                cand = next;
                steps += 1;
            }
        }
        if best_len >= MIN_MATCH {
            tokens.push(Token::Match {
                offset: best_off,
                len: best_len,
            });
            for p in pos..pos + best_len {
                insert(p, &mut head, &mut prev);
            }
            pos += best_len;
        } else {
            tokens.push(Token::Literal(data[pos]));
            insert(pos, &mut head, &mut prev);
            pos += 1;
        }
    }
    tokens
}

/// Serialize `data` to the token stream described in the module docs.
pub fn lz_encode(data: &[u8]) -> Vec<u8> {
    let mut out = (data.len() as u32).to_le_bytes().to_vec();
    let mut w = BitWriter::default();
    for t in tokenize(data) {
        match t {
            Token::Literal(b) => {
                w.put(0, 1);
                w.put(b as u32, 8);
            }
            Token::Match { offset, len } => {
                w.put(1, 1);
                w.put((offset - 1) as u32, 16);
                w.put(len as u32, 8);
            }
        }
    }
    out.extend(w.finish());
    out
}

pub fn lz_compress(data: &[u8]) -> CodeLength {
    CodeLength::from_bytes(lz_encode(data).len() as u64)
}
