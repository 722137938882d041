use std::fmt;

use serde::{Deserialize, Serialize};

use super::{PackedBitVector, WordWidth};

/// `(channels, height, width)` of a feature-map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape3 {
            channels,
            height,
            width,
        }
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }

    #[inline]
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    /// Channel-major logical index: channel varies fastest.
    #[inline]
    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(c < self.channels && h < self.height && w < self.width);
        (h * self.width + w) * self.channels + c
    }
}

impl fmt::Display for Shape3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A binarized feature-map or weight tensor in channel-major packed layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBitTensor {
    shape: Shape3,
    data: PackedBitVector,
}

impl PackedBitTensor {
    pub fn new(shape: Shape3, data: PackedBitVector) -> Self {
        assert_eq!(data.len(), shape.numel(), "tensor data length does not match shape {shape}");
        PackedBitTensor { shape, data }
    }

    pub fn zeros(shape: Shape3, width: WordWidth) -> Self {
        PackedBitTensor {
            shape,
            data: PackedBitVector::zeros(shape.numel(), width),
        }
    }

    /// Builds a tensor from ±1 values indexed as `f(c, h, w)`.
    pub fn from_fn(shape: Shape3, width: WordWidth, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut t = Self::zeros(shape, width);
        for h in 0..shape.height {
            for w in 0..shape.width {
                for c in 0..shape.channels {
                    if f(c, h, w) {
                        t.data.set(shape.index(c, h, w), true);
                    }
                }
            }
        }
        t
    }

    #[inline]
    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &PackedBitVector {
        &self.data
    }

    pub fn into_data(self) -> PackedBitVector {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> bool {
        self.data.get(self.shape.index(c, h, w))
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, bit: bool) {
        let i = self.shape.index(c, h, w);
        self.data.set(i, bit);
    }

    pub fn with_width(&self, width: WordWidth) -> Self {
        PackedBitTensor {
            shape: self.shape,
            data: self.data.with_width(width),
        }
    }
}
