//! Block-sorting compressor: BWT, move-to-front, zero-run coding and an
//! adaptive order-0 coder.
//!
//! The transform sorts all cyclic rotations of a block and keeps the last
//! column plus the row index of the unrotated block (the primary index).
//! Runs of MTF zeros become bijective base-2 digits (`RUNA`/`RUNB`), other
//! MTF values `v` map to `v + 1`, and every block ends with an explicit
//! end-of-block symbol. The final stage charges the ideal adaptive order-0
//! cost over that 258-symbol alphabet, with all counts starting at one.
//!
//! Size accounting: 4 header bytes (input length), then per block 4 bytes
//! of primary index plus `ceil(bits / 8)` bytes of coded symbols.

use super::CodeLength;

pub const BLOCK_SIZE: usize = 128 * 1024;
pub const HEADER_BYTES: usize = 4;

const RUNA: u16 = 0;
const RUNB: u16 = 1;
const EOB: u16 = 257;
const ALPHABET: usize = 258;

/// Forward transform of one block: `(last column, primary index)`.
pub fn bwt_forward(block: &[u8]) -> (Vec<u8>, usize) {
    let n = block.len();
    if n == 0 {
        return (Vec::new(), 0);
    }
    let rows = sort_rotations(block);
    let last = rows.iter().map(|&r| block[(r + n - 1) % n]).collect();
    let primary = rows.iter().position(|&r| r == 0).unwrap_or(0);
    (last, primary)
}

/// Rotation start indices in sorted order, by prefix doubling. Equal
/// rotations (periodic blocks) keep ascending start order.
fn sort_rotations(block: &[u8]) -> Vec<usize> {
    let n = block.len();
    let mut rank: Vec<u32> = block.iter().map(|&b| b as u32).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut tmp = vec![0u32; n];
    let mut k = 1usize;
    loop {
        let key = |i: usize| ((rank[i] as u64) << 32) | rank[(i + k) % n] as u64;
        idx.sort_unstable_by_key(|&i| (key(i), i));
        tmp[idx[0]] = 0;
        for w in 1..n {
            let bump = (key(idx[w]) != key(idx[w - 1])) as u32;
            tmp[idx[w]] = tmp[idx[w - 1]] + bump;
        }
        std::mem::swap(&mut rank, &mut tmp);
        if rank[idx[n - 1]] as usize == n - 1 || k >= n {
            break;
        }
        k *= 2;
    }
    idx
}

/// Inverse transform via the LF mapping.
pub fn bwt_inverse(last: &[u8], primary: usize) -> Vec<u8> {
    let n = last.len();
    if n == 0 {
        return Vec::new();
    }
    let mut counts = [0usize; 256];
    for &b in last {
        counts[b as usize] += 1;
    }
    let mut starts = [0usize; 256];
    let mut acc = 0;
    for (s, c) in starts.iter_mut().zip(counts.iter()) {
        *s = acc;
        acc += c;
    }
    let mut seen = [0usize; 256];
    let lf: Vec<usize> = last
        .iter()
        .map(|&b| {
            let r = starts[b as usize] + seen[b as usize];
            seen[b as usize] += 1;
            r
        })
        .collect();
    let mut out = vec![0u8; n];
    let mut row = primary;
    for i in (0..n).rev() {
        out[i] = last[row];
        row = lf[row];
    }
    out
}

pub fn mtf_encode(data: &[u8]) -> Vec<u8> {
    let mut table: Vec<u8> = (0..=255).collect();
    data.iter()
        .map(|&b| {
            let p = table.iter().position(|&t| t == b).unwrap_or(0);
            table.remove(p);
            table.insert(0, b);
            p as u8
        })
        .collect()
}

pub fn mtf_decode(data: &[u8]) -> Vec<u8> {
    let mut table: Vec<u8> = (0..=255).collect();
    data.iter()
        .map(|&p| {
            let b = table.remove(p as usize);
            table.insert(0, b);
            b
        })
        .collect()
}

fn push_run(out: &mut Vec<u16>, mut run: usize) {
    // bijective base 2: digit 1 -> RUNA, digit 2 -> RUNB, least significant first
    while run > 0 {
        if run & 1 == 1 {
            out.push(RUNA);
            run = (run - 1) / 2;
        } else {
            out.push(RUNB);
            run = (run - 2) / 2;
        }
    }
}

/// Zero-run coding of an MTF stream, terminated by the end-of-block symbol.
pub fn rle0_encode(mtf: &[u8]) -> Vec<u16> {
    let mut out = Vec::with_capacity(mtf.len() + 1);
    let mut run = 0usize;
    for &v in mtf {
        if v == 0 {
            run += 1;
        } else {
            push_run(&mut out, run);
            run = 0;
            out.push(v as u16 + 1);
        }
    }
    push_run(&mut out, run);
    out.push(EOB);
    out
}

pub fn rle0_decode(symbols: &[u16]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut run = 0usize;
    let mut weight = 1usize;
    let flush = |out: &mut Vec<u8>, run: &mut usize, weight: &mut usize| {
        out.extend(std::iter::repeat(0u8).take(*run));
        *run = 0;
        *weight = 1;
    };
    for &s in symbols {
        match s {
            RUNA => {
                run += weight;
                weight *= 2;
            }
            RUNB => {
                run += 2 * weight;
                weight *= 2;
            }
            EOB => break,
            v => {
                flush(&mut out, &mut run, &mut weight);
                out.push((v - 1) as u8);
            }
        }
    }
    flush(&mut out, &mut run, &mut weight);
    out
}

/// Adaptive order-0 ideal code length, counts initialised to one.
fn order0_bits(symbols: &[u16]) -> f64 {
    let mut counts = vec![1u64; ALPHABET];
    let mut total = ALPHABET as u64;
    let mut bits = 0.0;
    for &s in symbols {
        bits -= (counts[s as usize] as f64 / total as f64).log2();
        counts[s as usize] += 1;
        total += 1;
    }
    bits
}

/// The symbol stream of one block ahead of entropy coding.
pub fn block_symbols(block: &[u8]) -> (Vec<u16>, usize) {
    let (last, primary) = bwt_forward(block);
    (rle0_encode(&mtf_encode(&last)), primary)
}

/// Undo [`block_symbols`].
pub fn block_decode(symbols: &[u16], primary: usize) -> Vec<u8> {
    bwt_inverse(&mtf_decode(&rle0_decode(symbols)), primary)
}

pub fn bwt_compress(data: &[u8]) -> CodeLength {
    let total: u64 = data
        .chunks(BLOCK_SIZE)
        .map(|block| {
            let (symbols, _) = block_symbols(block);
            4 + (order0_bits(&symbols) / 8.0).ceil() as u64
        })
        .sum();
    CodeLength::from_bytes(HEADER_BYTES as u64 + total)
}
