//! Human-editable architecture descriptions and seeded weight generation.
//!
//! An architecture file is TOML:
//!
//! ```toml
//! name = "tiny"
//! input = { channels = 7, height = 1, width = 64 }
//!
//! [[layer]]
//! kind = "conv_first"
//! out_channels = 16
//! kernel = [1, 5]
//!
//! [[layer]]
//! kind = "max_pool"
//! pool = [1, 2]
//!
//! [[layer]]
//! kind = "fc_last16"
//! out_channels = 4
//! ```
//!
//! Input channel counts are never written; they are inferred by chaining
//! shapes from the input.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::format::STORAGE_WIDTH;
use super::{output_shape, validate, Fixed16, LayerKind, LayerSpec, LayerWeights, NetworkSpec};
use crate::bitpack::{PackedBitVector, Shape3};

/// Biases are drawn uniformly from `[-BIAS_RANGE, BIAS_RANGE]`.
pub const BIAS_RANGE: i32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchIssue {
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchError {
    pub issues: Vec<ArchIssue>,
}

impl ArchError {
    fn single(line: Option<usize>, message: impl Into<String>) -> Self {
        ArchError {
            issues: vec![ArchIssue {
                line,
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ArchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            match issue.line {
                Some(line) => write!(f, "line {line}: {}", issue.message)?,
                None => write!(f, "{}", issue.message)?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for ArchError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchLayer {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<[usize; 2]>,
}

impl ArchLayer {
    pub fn conv_first(out_channels: usize, kernel: [usize; 2]) -> Self {
        Self::conv(LayerKind::ConvFirst, out_channels, kernel)
    }

    pub fn conv_bin(out_channels: usize, kernel: [usize; 2]) -> Self {
        Self::conv(LayerKind::ConvBin, out_channels, kernel)
    }

    fn conv(kind: LayerKind, out_channels: usize, kernel: [usize; 2]) -> Self {
        ArchLayer {
            kind,
            out_channels: Some(out_channels),
            kernel: Some(kernel),
            stride: None,
            pool: None,
        }
    }

    pub fn with_stride(mut self, stride: [usize; 2]) -> Self {
        self.stride = Some(stride);
        self
    }

    pub fn fc_bin(out_features: usize) -> Self {
        ArchLayer {
            kind: LayerKind::FcBin,
            out_channels: Some(out_features),
            kernel: None,
            stride: None,
            pool: None,
        }
    }

    pub fn fc_last16(classes: usize) -> Self {
        ArchLayer {
            kind: LayerKind::FcLast16,
            ..Self::fc_bin(classes)
        }
    }

    pub fn max_pool(pool: [usize; 2]) -> Self {
        ArchLayer {
            kind: LayerKind::MaxPool,
            out_channels: None,
            kernel: None,
            stride: None,
            pool: Some(pool),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub input: Shape3,
    #[serde(rename = "layer", default)]
    pub layers: Vec<ArchLayer>,
    /// Source line of each `[[layer]]` header, when parsed from text.
    #[serde(skip)]
    layer_lines: Vec<usize>,
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].matches('\n').count() + 1
}

impl ArchSpec {
    pub fn new(input: Shape3, layers: Vec<ArchLayer>) -> Self {
        ArchSpec {
            name: None,
            input,
            layers,
            layer_lines: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ArchError> {
        let mut spec: ArchSpec = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            ArchError::single(line, e.message().to_string())
        })?;
        spec.layer_lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| l.trim_start().starts_with("[[layer]]"))
            .map(|(i, _)| i + 1)
            .collect();
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("architecture serializes")
    }

    fn line(&self, layer: usize) -> Option<usize> {
        self.layer_lines.get(layer).copied()
    }

    /// Layer descriptors with inferred input sizes and zero biases.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>, ArchError> {
        let mut issues = Vec::new();
        let mut specs = Vec::with_capacity(self.layers.len());
        let mut shape = self.input;
        for (i, l) in self.layers.iter().enumerate() {
            let line = self.line(i);
            let mut issue = |message: String| issues.push(ArchIssue { line, message });
            let need_out = || l.out_channels.filter(|&c| c > 0);
            let spec = match l.kind {
                LayerKind::ConvFirst | LayerKind::ConvBin => {
                    let Some(out) = need_out() else {
                        issue(format!("layer {i} ({}) needs a positive out_channels", l.kind));
                        break;
                    };
                    let k = l.kernel.unwrap_or([1, 1]);
                    let s = l.stride.unwrap_or([1, 1]);
                    let make = if l.kind == LayerKind::ConvFirst {
                        LayerSpec::conv_first
                    } else {
                        LayerSpec::conv_bin
                    };
                    make(shape.channels, out, (k[0], k[1]), (s[0], s[1]))
                }
                LayerKind::FcBin | LayerKind::FcLast16 => {
                    let Some(out) = need_out() else {
                        issue(format!("layer {i} ({}) needs a positive out_channels", l.kind));
                        break;
                    };
                    if l.kernel.is_some() || l.stride.is_some() || l.pool.is_some() {
                        issue(format!("layer {i} ({}) takes no kernel, stride or pool", l.kind));
                    }
                    if l.kind == LayerKind::FcBin {
                        LayerSpec::fc_bin(shape.numel(), out)
                    } else {
                        LayerSpec::fc_last16(shape.numel(), out)
                    }
                }
                LayerKind::MaxPool => {
                    let Some(p) = l.pool else {
                        issue(format!("layer {i} (max_pool) needs a pool size"));
                        break;
                    };
                    if l.out_channels.is_some() || l.kernel.is_some() || l.stride.is_some() {
                        issue(format!("layer {i} (max_pool) takes only a pool size"));
                    }
                    LayerSpec::max_pool(shape.channels, (p[0], p[1]))
                }
            };
            match output_shape(&spec, shape) {
                Ok(next) => shape = next,
                Err(e) => {
                    issue(format!("layer {i} ({}): {e}", l.kind));
                    break;
                }
            }
            specs.push(spec);
        }
        if issues.is_empty() {
            Ok(specs)
        } else {
            Err(ArchError { issues })
        }
    }
}

/// Builds a network with i.i.d. ±1 binary weights, uniform Q8.8 weights and
/// small integer biases. Deterministic in `seed`.
pub fn generate_random(arch: &ArchSpec, seed: u64) -> Result<NetworkSpec, ArchError> {
    let mut layers = arch.layer_specs()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layers.len());
    for layer in &mut layers {
        if layer.kind != LayerKind::MaxPool {
            layer.bias = (0..layer.out_channels)
                .map(|_| rng.gen_range(-BIAS_RANGE..=BIAS_RANGE))
                .collect();
        }
        let n = layer.expected_weight_count();
        weights.push(match layer.kind {
            LayerKind::MaxPool => LayerWeights::None,
            LayerKind::FcLast16 => LayerWeights::Fixed((0..n).map(|_| Fixed16::from_raw(rng.gen())).collect()),
            _ => {
                let limbs = (0..n.div_ceil(64)).map(|_| rng.gen::<u64>()).collect();
                let mut v = PackedBitVector::from_raw_parts(limbs, n, STORAGE_WIDTH);
                v.canonicalize();
                LayerWeights::Binary(v)
            }
        });
    }
    let net = NetworkSpec {
        input_shape: arch.input,
        layers,
        weights,
    };
    validate(&net).map_err(|diags| ArchError {
        issues: diags
            .into_iter()
            .map(|d| ArchIssue {
                line: d.layer.and_then(|i| arch.line(i)),
                message: d.to_string(),
            })
            .collect(),
    })?;
    Ok(net)
}

/// 32→256→512→16 binarized MLP for physical-activity data.
pub fn pamap2_mlp() -> ArchSpec {
    ArchSpec::parse(include_str!("../../assets/pamap2_mlp.toml")).expect("bundled architecture parses")
}

/// Five-conv, two-FC binarized DCNN for stress detection.
pub fn stress_dcnn() -> ArchSpec {
    ArchSpec::parse(include_str!("../../assets/stress_dcnn.toml")).expect("bundled architecture parses")
}
