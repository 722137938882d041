//! Packing of ±1 values into memory words and the fused xnor/popcount kernel.
//!
//! Encoding is fixed across the crate: bit `1` stands for `+1` and bit `0`
//! for `-1`. Bit `i` of a logical vector lives in word `i / m` at position
//! `i % m`, least-significant bit first.

mod tensor;
mod vector;

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tensor::{PackedBitTensor, Shape3};
pub use vector::{signed_dot, signed_dot_unmasked_tail, PackedBitVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitpackError {
    #[error("unsupported word width {0} (expected one of 32, 64, 128, 256, 512)")]
    UnsupportedWidth(u32),
    #[error("value {value} at index {index} is not -1 or +1")]
    InvalidValue { index: usize, value: i64 },
    #[error("length mismatch: {left} vs {right} valid bits")]
    LengthMismatch { left: usize, right: usize },
    #[error("word width mismatch: {left} vs {right}")]
    WidthMismatch { left: WordWidth, right: WordWidth },
}

/// Bits per memory entry / machine word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct WordWidth(u32);

impl WordWidth {
    pub const W32: WordWidth = WordWidth(32);
    pub const W64: WordWidth = WordWidth(64);
    pub const W128: WordWidth = WordWidth(128);
    pub const W256: WordWidth = WordWidth(256);
    pub const W512: WordWidth = WordWidth(512);

    /// Every supported width, narrowest first.
    pub const ALL: [WordWidth; 5] = [
        Self::W32,
        Self::W64,
        Self::W128,
        Self::W256,
        Self::W512,
    ];

    pub fn new(bits: u32) -> Result<Self, BitpackError> {
        match bits {
            32 | 64 | 128 | 256 | 512 => Ok(WordWidth(bits)),
            other => Err(BitpackError::UnsupportedWidth(other)),
        }
    }

    #[inline]
    pub fn bits(self) -> usize {
        self.0 as usize
    }

    /// Number of m-bit entries needed to hold `bits` bits.
    #[inline]
    pub fn entries_for(self, bits: usize) -> usize {
        bits.div_ceil(self.bits())
    }

    /// Number of entries touched by the bit range `[start, start + len)`.
    pub fn entries_spanned(self, start: usize, len: usize) -> usize {
        if len == 0 {
            return 0;
        }
        let m = self.bits();
        (start + len - 1) / m - start / m + 1
    }

    pub fn doubled(self) -> Option<Self> {
        Self::new(self.0 * 2).ok()
    }
}

impl TryFrom<u32> for WordWidth {
    type Error = BitpackError;
    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        Self::new(bits)
    }
}

impl From<WordWidth> for u32 {
    fn from(w: WordWidth) -> u32 {
        w.0
    }
}

impl fmt::Display for WordWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for WordWidth {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: u32 = s
            .trim()
            .parse()
            .map_err(|_| format!("'{s}' is not an integer width"))?;
        Self::new(bits).map_err(|e| e.to_string())
    }
}

/// Deterministic sign binarization: `true` (encoding +1) iff `x >= 0`.
#[inline]
pub fn binarize<T: PartialOrd + Zero>(x: T) -> bool {
    x >= T::zero()
}

/// Sign of `x` as a ±1 integer, with `sign(0) = +1`.
#[inline]
pub fn sign<T: PartialOrd + Zero>(x: T) -> i8 {
    if binarize(x) {
        1
    } else {
        -1
    }
}

/// Number of fused xnor/popcount instructions a dot product over
/// `valid_bits` bits takes on an `m`-bit machine.
#[inline]
pub fn xnor_pcnt_instruction_count(valid_bits: usize, m: WordWidth) -> usize {
    m.entries_for(valid_bits)
}

/// Nominal operations one fused instruction accounts for (one xnor and one
/// popcount-accumulate per lane).
#[inline]
pub fn ops_per_instruction(m: WordWidth) -> usize {
    2 * m.bits()
}
