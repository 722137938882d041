//! Network description, shape inference, validation and model files.

mod accounting;
pub mod arch;
mod fixed;
pub mod format;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitpack::{PackedBitVector, Shape3};

pub use accounting::{count_params_and_ops, layer_costs, packed_size_bytes, LayerCost, OpCount, PackedSize};
pub use arch::{generate_random, ArchError, ArchLayer, ArchSpec};
pub use fixed::{Fixed16, FixedTensor};
pub use format::{deserialize, serialize, FormatError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Full-precision input against binary weights (add/sub accumulation).
    ConvFirst,
    ConvBin,
    FcBin,
    /// Binary activations against Q8.8 weights, producing logits.
    FcLast16,
    MaxPool,
}

impl LayerKind {
    pub fn has_binary_output(self) -> bool {
        matches!(self, LayerKind::ConvFirst | LayerKind::ConvBin | LayerKind::FcBin)
    }

    pub fn is_fully_connected(self) -> bool {
        matches!(self, LayerKind::FcBin | LayerKind::FcLast16)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            LayerKind::ConvFirst => 1,
            LayerKind::ConvBin => 2,
            LayerKind::FcBin => 3,
            LayerKind::FcLast16 => 4,
            LayerKind::MaxPool => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => LayerKind::ConvFirst,
            2 => LayerKind::ConvBin,
            3 => LayerKind::FcBin,
            4 => LayerKind::FcLast16,
            5 => LayerKind::MaxPool,
            _ => return None,
        })
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::ConvFirst => "conv_first",
            LayerKind::ConvBin => "conv_bin",
            LayerKind::FcBin => "fc_bin",
            LayerKind::FcLast16 => "fc_last16",
            LayerKind::MaxPool => "max_pool",
        };
        f.write_str(s)
    }
}

/// One layer descriptor.
///
/// For fully-connected layers `in_channels` is the flattened input length and
/// `kernel`/`stride` are unused (kept at 1x1). For convolutions a filter is
/// laid out as `(dy * kw + dx) * in_channels + c`, the same order as the
/// channel-major input patch it is matched against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pool: (usize, usize),
    /// Added to the accumulator before the sign, one per output channel.
    pub bias: Vec<i32>,
}

impl LayerSpec {
    fn base(kind: LayerKind, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec {
            kind,
            in_channels,
            out_channels,
            kernel: (1, 1),
            stride: (1, 1),
            pool: (1, 1),
            bias: vec![0; out_channels],
        }
    }

    pub fn conv_first(in_channels: usize, out_channels: usize, kernel: (usize, usize), stride: (usize, usize)) -> Self {
        LayerSpec {
            kernel,
            stride,
            ..Self::base(LayerKind::ConvFirst, in_channels, out_channels)
        }
    }

    pub fn conv_bin(in_channels: usize, out_channels: usize, kernel: (usize, usize), stride: (usize, usize)) -> Self {
        LayerSpec {
            kernel,
            stride,
            ..Self::base(LayerKind::ConvBin, in_channels, out_channels)
        }
    }

    pub fn fc_bin(in_features: usize, out_features: usize) -> Self {
        Self::base(LayerKind::FcBin, in_features, out_features)
    }

    pub fn fc_last16(in_features: usize, classes: usize) -> Self {
        Self::base(LayerKind::FcLast16, in_features, classes)
    }

    pub fn max_pool(channels: usize, pool: (usize, usize)) -> Self {
        LayerSpec {
            pool,
            bias: Vec::new(),
            ..Self::base(LayerKind::MaxPool, channels, channels)
        }
    }

    pub fn with_bias(mut self, bias: Vec<i32>) -> Self {
        self.bias = bias;
        self
    }

    /// Weights feeding one output element.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::ConvFirst | LayerKind::ConvBin => self.kernel.0 * self.kernel.1 * self.in_channels,
            LayerKind::FcBin | LayerKind::FcLast16 => self.in_channels,
            LayerKind::MaxPool => 0,
        }
    }

    pub fn pool_size(&self) -> usize {
        self.pool.0 * self.pool.1
    }

    pub fn expected_weight_count(&self) -> usize {
        self.fan_in() * if self.kind == LayerKind::MaxPool { 0 } else { self.out_channels }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("kernel {kernel:?} larger than input {input}")]
    KernelTooLarge { kernel: (usize, usize), input: Shape3 },
    #[error("pool {pool:?} larger than input {input}")]
    PoolTooLarge { pool: (usize, usize), input: Shape3 },
    #[error("layer expects {expected} input channels/features, input {input} provides {actual}")]
    InputMismatch { expected: usize, actual: usize, input: Shape3 },
    #[error("zero-sized {what}")]
    ZeroDimension { what: &'static str },
}

/// Output shape of `layer` applied to `input` (valid convolution, no padding).
pub fn output_shape(layer: &LayerSpec, input: Shape3) -> Result<Shape3, ShapeError> {
    match layer.kind {
        LayerKind::ConvFirst | LayerKind::ConvBin => {
            let (kh, kw) = layer.kernel;
            let (sh, sw) = layer.stride;
            if kh == 0 || kw == 0 {
                return Err(ShapeError::ZeroDimension { what: "kernel" });
            }
            if sh == 0 || sw == 0 {
                return Err(ShapeError::ZeroDimension { what: "stride" });
            }
            if layer.out_channels == 0 {
                return Err(ShapeError::ZeroDimension { what: "output channels" });
            }
            if input.channels != layer.in_channels {
                return Err(ShapeError::InputMismatch {
                    expected: layer.in_channels,
                    actual: input.channels,
                    input,
                });
            }
            if kh > input.height || kw > input.width {
                return Err(ShapeError::KernelTooLarge {
                    kernel: layer.kernel,
                    input,
                });
            }
            Ok(Shape3::new(
                layer.out_channels,
                (input.height - kh) / sh + 1,
                (input.width - kw) / sw + 1,
            ))
        }
        LayerKind::FcBin | LayerKind::FcLast16 => {
            if layer.out_channels == 0 {
                return Err(ShapeError::ZeroDimension { what: "output features" });
            }
            if input.numel() != layer.in_channels {
                return Err(ShapeError::InputMismatch {
                    expected: layer.in_channels,
                    actual: input.numel(),
                    input,
                });
            }
            Ok(Shape3::new(layer.out_channels, 1, 1))
        }
        LayerKind::MaxPool => {
            let (ph, pw) = layer.pool;
            if ph == 0 || pw == 0 {
                return Err(ShapeError::ZeroDimension { what: "pool" });
            }
            if input.channels != layer.in_channels {
                return Err(ShapeError::InputMismatch {
                    expected: layer.in_channels,
                    actual: input.channels,
                    input,
                });
            }
            if ph > input.height || pw > input.width {
                return Err(ShapeError::PoolTooLarge {
                    pool: layer.pool,
                    input,
                });
            }
            Ok(Shape3::new(input.channels, input.height / ph, input.width / pw))
        }
    }
}

/// Weights of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerWeights {
    None,
    /// All filters back to back, filter `oc` occupying bits
    /// `[oc * fan_in, (oc + 1) * fan_in)`.
    Binary(PackedBitVector),
    /// Row-major `[class][feature]` Q8.8 weights.
    Fixed(Vec<Fixed16>),
}

impl LayerWeights {
    pub fn len(&self) -> usize {
        match self {
            LayerWeights::None => 0,
            LayerWeights::Binary(v) => v.len(),
            LayerWeights::Fixed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A complete network: descriptors plus weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_shape: Shape3,
    pub layers: Vec<LayerSpec>,
    pub weights: Vec<LayerWeights>,
}

impl NetworkSpec {
    /// Shape after each layer; `shapes()[i]` is the output of layer `i`.
    pub fn shapes(&self) -> Result<Vec<Shape3>, (usize, ShapeError)> {
        let mut shape = self.input_shape;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = output_shape(layer, shape).map_err(|e| (i, e))?;
            out.push(shape);
        }
        Ok(out)
    }

    /// Number of logits the network produces.
    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    NoLayers,
    MisplacedLayer,
    ShapeChain,
    PoolWithoutBinaryInput,
    WeightKindMismatch,
    WeightCountMismatch,
    BiasCountMismatch,
    AccumulatorOverflow,
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub layer: Option<usize>,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(i) => write!(f, "layer {i}: {}", self.message),
            None => write!(f, "network: {}", self.message),
        }
    }
}

/// Largest magnitude a Q8.8 sample or weight can contribute per term.
const FIXED_TERM_MAX: i64 = 1 << 15;

/// Checks every structural invariant and reports all violations.
pub fn validate(net: &NetworkSpec) -> Result<(), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut push = |layer: Option<usize>, kind, message: String| diags.push(Diagnostic { layer, kind, message });

    if net.layers.is_empty() {
        push(None, DiagnosticKind::NoLayers, "network has no layers".into());
    }
    if net.weights.len() != net.layers.len() {
        push(
            None,
            DiagnosticKind::WeightCountMismatch,
            format!(
                "weight count mismatch: {} weight blocks for {} layers",
                net.weights.len(),
                net.layers.len()
            ),
        );
    }
    let last = net.layers.len().saturating_sub(1);
    let mut shape = Some(net.input_shape);

    for (i, layer) in net.layers.iter().enumerate() {
        match layer.kind {
            LayerKind::ConvFirst if i != 0 => push(
                Some(i),
                DiagnosticKind::MisplacedLayer,
                "conv_first may only appear as layer 0".into(),
            ),
            LayerKind::FcLast16 if i != last => push(
                Some(i),
                DiagnosticKind::MisplacedLayer,
                "fc_last16 may only appear as the final layer".into(),
            ),
            _ => {}
        }
        if i == 0 && layer.kind != LayerKind::ConvFirst {
            push(
                Some(i),
                DiagnosticKind::MisplacedLayer,
                format!("layer 0 must be conv_first (full-precision input), found {}", layer.kind),
            );
        }
        if i == last && !matches!(layer.kind, LayerKind::FcLast16 | LayerKind::FcBin) {
            push(
                Some(i),
                DiagnosticKind::MisplacedLayer,
                format!("final layer must be fc_last16 or fc_bin, found {}", layer.kind),
            );
        }
        if layer.kind == LayerKind::MaxPool {
            let fed_by_binary = i > 0 && net.layers[i - 1].kind.has_binary_output();
            if !fed_by_binary {
                push(
                    Some(i),
                    DiagnosticKind::PoolWithoutBinaryInput,
                    "pool without preceding binary layer".into(),
                );
            }
        }

        if let Some(s) = shape {
            shape = match output_shape(layer, s) {
                Ok(next) => Some(next),
                Err(e) => {
                    push(Some(i), DiagnosticKind::ShapeChain, format!("shape chain broken: {e}"));
                    None
                }
            };
        }

        let expected_bias = if layer.kind == LayerKind::MaxPool { 0 } else { layer.out_channels };
        if layer.bias.len() != expected_bias {
            push(
                Some(i),
                DiagnosticKind::BiasCountMismatch,
                format!("expected {expected_bias} bias values, found {}", layer.bias.len()),
            );
        }

        if let Some(w) = net.weights.get(i) {
            let kind_ok = matches!(
                (layer.kind, w),
                (LayerKind::MaxPool, LayerWeights::None)
                    | (LayerKind::FcLast16, LayerWeights::Fixed(_))
                    | (LayerKind::ConvFirst | LayerKind::ConvBin | LayerKind::FcBin, LayerWeights::Binary(_))
            );
            if !kind_ok {
                push(
                    Some(i),
                    DiagnosticKind::WeightKindMismatch,
                    format!("{} layer carries the wrong kind of weights", layer.kind),
                );
            } else if w.len() != layer.expected_weight_count() {
                push(
                    Some(i),
                    DiagnosticKind::WeightCountMismatch,
                    format!(
                        "weight count mismatch: expected {}, found {}",
                        layer.expected_weight_count(),
                        w.len()
                    ),
                );
            }
        }

        let max_bias = layer.bias.iter().map(|b| (*b as i64).abs()).max().unwrap_or(0);
        let term = match layer.kind {
            LayerKind::ConvFirst | LayerKind::FcLast16 => FIXED_TERM_MAX,
            _ => 1,
        };
        if (layer.fan_in() as i64) * term + max_bias > i32::MAX as i64 {
            push(
                Some(i),
                DiagnosticKind::AccumulatorOverflow,
                format!("fan-in {} can overflow a 32-bit accumulator", layer.fan_in()),
            );
        }
    }

    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}
