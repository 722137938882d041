//! Binary model file format.
//!
//! Everything is little-endian; packed weight bits are stored LSB-first, so
//! files are identical across platforms. Layout:
//!
//! ```text
//! header (24 bytes)
//!   0  magic          b"BNNM"
//!   4  version        u16 = 1
//!   6  input format   u8  = 1 (Q8.8)
//!   7  reserved       u8  = 0
//!   8  input shape    u32 channels, u32 height, u32 width
//!  20  layer count    u32
//! descriptor table (36 bytes per layer)
//!   kind u8, reserved [u8; 3],
//!   in_channels, out_channels, kh, kw, sh, sw, ph, pw  (u32 each)
//! one weight block per layer, in layer order
//!   tag u8 (0 none, 1 binary, 2 Q8.8), bias count u32, weight count u64
//!   bias        i32 × bias count
//!   weights     binary: ceil(count / 8) bytes; Q8.8: i16 × count
//! ```

use thiserror::Error;

use super::{Fixed16, LayerKind, LayerSpec, LayerWeights, NetworkSpec};
use crate::bitpack::{PackedBitVector, Shape3, WordWidth};

pub const MAGIC: [u8; 4] = *b"BNNM";
pub const VERSION: u16 = 1;
pub const INPUT_FORMAT_Q8_8: u8 = 1;

pub const HEADER_BYTES: usize = 24;
pub const DESCRIPTOR_BYTES: usize = 36;
pub const BLOB_HEADER_BYTES: usize = 13;

/// Width packed weights are materialized at after loading.
pub const STORAGE_WIDTH: WordWidth = WordWidth::W64;

const TAG_NONE: u8 = 0;
const TAG_BINARY: u8 = 1;
const TAG_FIXED: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("model format error at byte {offset}: {kind}")]
pub struct FormatError {
    pub offset: usize,
    pub kind: FormatErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatErrorKind {
    #[error("bad magic number")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported input format tag {0}")]
    UnsupportedInputFormat(u8),
    #[error("truncated stream (needed {needed} more bytes)")]
    Truncated { needed: usize },
    #[error("unknown layer kind code {0}")]
    BadLayerKind(u8),
    #[error("unknown weight tag {0}")]
    BadWeightTag(u8),
    #[error("value {0} does not fit this platform")]
    TooLarge(u64),
    #[error("{0} trailing bytes after the last weight block")]
    TrailingBytes(usize),
}

pub fn serialize(net: &NetworkSpec) -> Vec<u8> {
    let mut out = Vec::with_capacity(super::packed_size_bytes(net).total() as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(INPUT_FORMAT_Q8_8);
    out.push(0);
    for d in [net.input_shape.channels, net.input_shape.height, net.input_shape.width, net.layers.len()] {
        put_u32(&mut out, d);
    }
    for layer in &net.layers {
        out.push(layer.kind.code());
        out.extend_from_slice(&[0; 3]);
        for d in [
            layer.in_channels,
            layer.out_channels,
            layer.kernel.0,
            layer.kernel.1,
            layer.stride.0,
            layer.stride.1,
            layer.pool.0,
            layer.pool.1,
        ] {
            put_u32(&mut out, d);
        }
    }
    for (layer, weights) in net.layers.iter().zip(&net.weights) {
        let (tag, count) = match weights {
            LayerWeights::None => (TAG_NONE, 0),
            LayerWeights::Binary(v) => (TAG_BINARY, v.len()),
            LayerWeights::Fixed(v) => (TAG_FIXED, v.len()),
        };
        out.push(tag);
        put_u32(&mut out, layer.bias.len());
        out.extend_from_slice(&(count as u64).to_le_bytes());
        for b in &layer.bias {
            out.extend_from_slice(&b.to_le_bytes());
        }
        match weights {
            LayerWeights::None => {}
            LayerWeights::Binary(v) => out.extend_from_slice(&v.to_le_bytes()),
            LayerWeights::Fixed(v) => {
                for w in v {
                    out.extend_from_slice(&w.raw().to_le_bytes());
                }
            }
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("dimension exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(FormatError {
                offset: self.pos,
                kind: FormatErrorKind::Truncated { needed: n - remaining },
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize32(&mut self) -> Result<usize, FormatError> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn err(&self, at: usize, kind: FormatErrorKind) -> FormatError {
        FormatError { offset: at, kind }
    }
}

/// Parses a model file. The result is structurally faithful to the bytes;
/// run [`validate`](super::validate) to check network invariants.
pub fn deserialize(bytes: &[u8]) -> Result<NetworkSpec, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(r.err(0, FormatErrorKind::BadMagic));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(r.err(4, FormatErrorKind::UnsupportedVersion(version)));
    }
    let format = r.u8()?;
    if format != INPUT_FORMAT_Q8_8 {
        return Err(r.err(6, FormatErrorKind::UnsupportedInputFormat(format)));
    }
    r.u8()?;
    let input_shape = Shape3::new(r.usize32()?, r.usize32()?, r.usize32()?);
    let layer_count = r.usize32()?;
    // each layer needs at least its descriptor and blob header
    let min_needed = layer_count.saturating_mul(DESCRIPTOR_BYTES + BLOB_HEADER_BYTES);
    if min_needed > bytes.len() - r.pos {
        return Err(r.err(
            r.pos,
            FormatErrorKind::Truncated {
                needed: min_needed - (bytes.len() - r.pos),
            },
        ));
    }

    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let at = r.pos;
        let code = r.u8()?;
        let kind = LayerKind::from_code(code).ok_or_else(|| r.err(at, FormatErrorKind::BadLayerKind(code)))?;
        r.take(3)?;
        let in_channels = r.usize32()?;
        let out_channels = r.usize32()?;
        let kernel = (r.usize32()?, r.usize32()?);
        let stride = (r.usize32()?, r.usize32()?);
        let pool = (r.usize32()?, r.usize32()?);
        layers.push(LayerSpec {
            kind,
            in_channels,
            out_channels,
            kernel,
            stride,
            pool,
            bias: Vec::new(),
        });
    }

    let mut weights = Vec::with_capacity(layer_count);
    for layer in &mut layers {
        let at = r.pos;
        let tag = r.u8()?;
        let bias_count = r.usize32()?;
        let count_at = r.pos;
        let count = r.u64()?;
        let count = usize::try_from(count).map_err(|_| r.err(count_at, FormatErrorKind::TooLarge(count)))?;
        let bias_bytes = r.take(bias_count.checked_mul(4).ok_or_else(|| r.err(at, FormatErrorKind::TooLarge(bias_count as u64)))?)?;
        layer.bias = bias_bytes
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let w = match tag {
            TAG_NONE => LayerWeights::None,
            TAG_BINARY => {
                let raw = r.take(count.div_ceil(8))?;
                LayerWeights::Binary(PackedBitVector::from_le_bytes(raw, count, STORAGE_WIDTH))
            }
            TAG_FIXED => {
                let n = count
                    .checked_mul(2)
                    .ok_or_else(|| r.err(count_at, FormatErrorKind::TooLarge(count as u64)))?;
                let raw = r.take(n)?;
                LayerWeights::Fixed(
                    raw.chunks_exact(2)
                        .map(|c| Fixed16::from_raw(i16::from_le_bytes([c[0], c[1]])))
                        .collect(),
                )
            }
            other => return Err(r.err(at, FormatErrorKind::BadWeightTag(other))),
        };
        weights.push(w);
    }
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, FormatErrorKind::TrailingBytes(bytes.len() - r.pos)));
    }
    Ok(NetworkSpec {
        input_shape,
        layers,
        weights,
    })
}
