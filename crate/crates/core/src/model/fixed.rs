use std::fmt;

use num_traits::{Float, NumCast};
use serde::{Deserialize, Serialize};

use crate::bitpack::Shape3;

/// 16-bit signed Q8.8 fixed-point value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixed16(i16);

impl Fixed16 {
    pub const FRAC_BITS: u32 = 8;
    pub const SCALE: i32 = 1 << Self::FRAC_BITS;
    pub const ONE: Fixed16 = Fixed16(1 << Self::FRAC_BITS);
    pub const ZERO: Fixed16 = Fixed16(0);
    pub const MIN: Fixed16 = Fixed16(i16::MIN);
    pub const MAX: Fixed16 = Fixed16(i16::MAX);

    #[inline]
    pub const fn from_raw(raw: i16) -> Self {
        Fixed16(raw)
    }

    #[inline]
    pub const fn raw(self) -> i16 {
        self.0
    }

    /// Rounds `x` to the nearest representable value; `None` when `x` lies
    /// outside `[-128, 128)` after rounding or is not finite.
    pub fn from_real<F: Float>(x: F) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        let scale: F = NumCast::from(Self::SCALE)?;
        let scaled = (x * scale).round();
        let raw: i32 = NumCast::from(scaled)?;
        i16::try_from(raw).ok().map(Fixed16)
    }

    pub fn to_real<F: Float>(self) -> F {
        let raw: F = NumCast::from(self.0).unwrap();
        let scale: F = NumCast::from(Self::SCALE).unwrap();
        raw / scale
    }
}

impl fmt::Display for Fixed16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_real::<f64>())
    }
}

/// A full-precision input frame in channel-major layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedTensor {
    pub shape: Shape3,
    pub data: Vec<Fixed16>,
}

impl FixedTensor {
    pub fn new(shape: Shape3, data: Vec<Fixed16>) -> Self {
        assert_eq!(data.len(), shape.numel(), "data length does not match shape {shape}");
        FixedTensor { shape, data }
    }

    pub fn filled(shape: Shape3, value: Fixed16) -> Self {
        FixedTensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> Fixed16 {
        self.data[self.shape.index(c, h, w)]
    }
}
