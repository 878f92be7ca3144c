//! Compressed-size measurement under several compressor families.
//!
//! Every family reports a [`CodeLength`]. The statistical family ([`ppm`])
//! reports an ideal code length in fractional bits; the dictionary ([`lz`])
//! and block-sorting ([`bwt`]) families produce an actual byte stream and
//! report its length; [`external`] pipes data through a user-supplied program.

pub mod bwt;
pub mod external;
pub mod lz;
pub mod ppm;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use ppm::{ppm_code_length, PpmModel};

/// Highest PPM context order accepted.
pub const MAX_PPM_ORDER: usize = 16;
/// PPM order used when none is given.
pub const DEFAULT_PPM_ORDER: usize = 6;

/// Which compressor measures `C(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CodecSpec {
    Ppm { order: usize },
    Lz,
    Bwt,
    External { command: String },
}

impl CodecSpec {
    pub fn ppm(order: usize) -> Result<Self> {
        let spec = CodecSpec::Ppm { order };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CodecSpec::Ppm { order } if !(1..=MAX_PPM_ORDER).contains(order) => Err(
                Error::InvalidSpec(format!("ppm order {order} outside 1..={MAX_PPM_ORDER}")),
            ),
            CodecSpec::External { command } if command.trim().is_empty() => {
                Err(Error::InvalidSpec("external command is empty".into()))
            }
            _ => Ok(()),
        }
    }
}

impl Default for CodecSpec {
    fn default() -> Self {
        CodecSpec::Ppm {
            order: DEFAULT_PPM_ORDER,
        }
    }
}

impl fmt::Display for CodecSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecSpec::Ppm { order } => write!(f, "ppm:{order}"),
            CodecSpec::Lz => f.write_str("lz"),
            CodecSpec::Bwt => f.write_str("bwt"),
            CodecSpec::External { command } => write!(f, "ext:{command}"),
        }
    }
}

impl FromStr for CodecSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = if let Some(order) = s.strip_prefix("ppm:") {
            let order = order
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidSpec(format!("bad ppm order in {s:?}")))?;
            CodecSpec::Ppm { order }
        } else if s == "ppm" {
            CodecSpec::default()
        } else if s == "lz" {
            CodecSpec::Lz
        } else if s == "bwt" {
            CodecSpec::Bwt
        } else if let Some(cmd) = s.strip_prefix("ext:") {
            CodecSpec::External {
                command: cmd.to_string(),
            }
        } else {
            return Err(Error::InvalidSpec(format!("unknown codec {s:?}")));
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Size of a compressed representation.
///
/// `bytes` is always `ceil(bits / 8)`. Stream-producing codecs report whole
/// bytes, so for them `bits == 8 * bytes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeLength {
    pub bits: f64,
    pub bytes: u64,
}

impl CodeLength {
    pub const ZERO: CodeLength = CodeLength { bits: 0.0, bytes: 0 };

    pub fn from_bits(bits: f64) -> Self {
        CodeLength {
            bits,
            bytes: (bits / 8.0).ceil() as u64,
        }
    }

    pub fn from_bytes(bytes: u64) -> Self {
        CodeLength {
            bits: bytes as f64 * 8.0,
            bytes,
        }
    }
}

/// `C(x)`: the compressed size of `data` under `codec`.
pub fn compressed_size(data: &[u8], codec: &CodecSpec) -> Result<CodeLength> {
    codec.validate()?;
    match codec {
        CodecSpec::Ppm { order } => ppm_code_length(data, *order),
        CodecSpec::Lz => Ok(lz::lz_compress(data)),
        CodecSpec::Bwt => Ok(bwt::bwt_compress(data)),
        CodecSpec::External { command } => external::external_size(data, command),
    }
}
