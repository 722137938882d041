use serde::{Deserialize, Serialize};

use super::format::{BLOB_HEADER_BYTES, DESCRIPTOR_BYTES, HEADER_BYTES};
use super::{LayerKind, LayerWeights, NetworkSpec, ShapeError};

/// Parameter and nominal operation totals.
///
/// One operation is one add or one multiply, so every MAC is two. Max-pool
/// comparisons are kept apart from MAC operations so either counting
/// convention can be reported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub params: u64,
    pub binary_params: u64,
    pub fixed_params: u64,
    pub mac_ops: u64,
    pub pool_compare_ops: u64,
}

impl OpCount {
    pub fn total_ops(&self) -> u64 {
        self.mac_ops + self.pool_compare_ops
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub index: usize,
    pub kind: LayerKind,
    pub params: u64,
    pub mac_ops: u64,
    pub pool_compare_ops: u64,
}

/// Per-layer parameter and operation counts.
pub fn layer_costs(net: &NetworkSpec) -> Result<Vec<LayerCost>, ShapeError> {
    let shapes = net.shapes().map_err(|(_, e)| e)?;
    Ok(net
        .layers
        .iter()
        .zip(&shapes)
        .enumerate()
        .map(|(index, (layer, out))| {
            let params = layer.expected_weight_count() as u64;
            let outputs = out.numel() as u64;
            let (mac_ops, pool_compare_ops) = match layer.kind {
                LayerKind::MaxPool => (0, (layer.pool_size() as u64 - 1) * outputs),
                _ => (2 * layer.fan_in() as u64 * outputs, 0),
            };
            LayerCost {
                index,
                kind: layer.kind,
                params,
                mac_ops,
                pool_compare_ops,
            }
        })
        .collect())
}

pub fn count_params_and_ops(net: &NetworkSpec) -> Result<OpCount, ShapeError> {
    let mut total = OpCount::default();
    for cost in layer_costs(net)? {
        total.params += cost.params;
        match cost.kind {
            LayerKind::FcLast16 => total.fixed_params += cost.params,
            LayerKind::MaxPool => {}
            _ => total.binary_params += cost.params,
        }
        total.mac_ops += cost.mac_ops;
        total.pool_compare_ops += cost.pool_compare_ops;
    }
    Ok(total)
}

/// Size of the stored model: packed weight payload plus file overhead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSize {
    /// `Σ ceil(binary_bits / 8) + 2 · fixed_weights`, per layer.
    pub weight_bytes: u64,
    /// Header, layer descriptors, biases and blob headers.
    pub overhead_bytes: u64,
}

impl PackedSize {
    pub fn total(&self) -> u64 {
        self.weight_bytes + self.overhead_bytes
    }
}

/// Packed model size; `total()` equals the length of [`serialize`](super::serialize)'s output.
pub fn packed_size_bytes(net: &NetworkSpec) -> PackedSize {
    let mut weight_bytes = 0u64;
    let mut overhead = HEADER_BYTES as u64;
    for (layer, w) in net.layers.iter().zip(&net.weights) {
        overhead += DESCRIPTOR_BYTES as u64 + 4 * layer.bias.len() as u64 + BLOB_HEADER_BYTES as u64;
        weight_bytes += match w {
            LayerWeights::None => 0,
            LayerWeights::Binary(v) => v.len().div_ceil(8) as u64,
            LayerWeights::Fixed(v) => 2 * v.len() as u64,
        };
    }
    PackedSize {
        weight_bytes,
        overhead_bytes: overhead,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitpack::{PackedBitVector, Shape3, WordWidth};
    use crate::model::{Fixed16, LayerSpec};

    #[test]
    fn single_fc_counts() {
        let net = NetworkSpec {
            input_shape: Shape3::new(4, 1, 1),
            layers: vec![LayerSpec::conv_first(4, 4, (1, 1), (1, 1))],
            weights: vec![LayerWeights::Binary(PackedBitVector::zeros(16, WordWidth::W32))],
        };
        let c = count_params_and_ops(&net).unwrap();
        assert_eq!(c.params, 16);
        assert_eq!(c.total_ops(), 32);
    }

    #[test]
    fn mlp_closed_form() {
        let net = crate::model::tests::pamap2_like();
        let c = count_params_and_ops(&net).unwrap();
        assert_eq!(c.params, 147_456);
        assert_eq!(c.mac_ops, 294_912);
        assert_eq!(c.total_ops(), 2 * c.params);
        assert_eq!(c.fixed_params, 0);
        assert_eq!(c.binary_params, 147_456);
    }

    #[test]
    fn pool_compares_counted_separately() {
        let net = NetworkSpec {
            input_shape: Shape3::new(1, 1, 8),
            layers: vec![
                LayerSpec::conv_first(1, 3, (1, 3), (1, 1)),
                LayerSpec::max_pool(3, (1, 2)),
                LayerSpec::fc_last16(9, 2),
            ],
            weights: vec![
                LayerWeights::Binary(PackedBitVector::zeros(9, WordWidth::W32)),
                LayerWeights::None,
                LayerWeights::Fixed(vec![Fixed16::ZERO; 18]),
            ],
        };
        let c = count_params_and_ops(&net).unwrap();
        assert_eq!(c.mac_ops, 2 * 3 * 3 * 6 + 2 * 18);
        assert_eq!(c.pool_compare_ops, 9);
    }

    #[test]
    fn empty_network_is_header_only() {
        let net = NetworkSpec {
            input_shape: Shape3::new(1, 1, 1),
            layers: vec![],
            weights: vec![],
        };
        let s = packed_size_bytes(&net);
        assert_eq!(s.weight_bytes, 0);
        assert_eq!(s.overhead_bytes, HEADER_BYTES as u64);
    }

    #[test]
    fn weight_bytes_round_up_per_layer() {
        let net = crate::model::tests::pamap2_like();
        let s = packed_size_bytes(&net);
        assert_eq!(s.weight_bytes, 147_456 / 8);
    }
}
