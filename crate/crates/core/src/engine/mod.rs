//! Packed simulator of the accelerator: m-bit xnor/popcount execution,
//! output-channel tiling over N PEs, ping-pong feature-map buffers and an
//! or-gate max-pool with optional pool-skipping.

mod counters;
mod exec;
mod tiling;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use counters::{write_trace_csv, AccessTally, Buffer, ExecutionCounters, LayerTrace};
pub use exec::{execute_first_layer, execute_last_layer, execute_mid_layer, LayerExecution};
pub use tiling::tile_output_channels;

use crate::bitpack::{PackedBitTensor, PackedBitVector, Shape3, WordWidth};
use crate::model::{validate, Diagnostic, FixedTensor, LayerKind, LayerWeights, NetworkSpec};
use crate::reference::argmax;

pub const MAX_PES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("input shape {actual} does not match network input {expected}")]
    ShapeMismatch { expected: Shape3, actual: Shape3 },
    #[error("invalid network ({} problems)", .0.len())]
    InvalidNetwork(Vec<Diagnostic>),
    #[error("PE count {0} outside 1..=64")]
    PeCount(usize),
    #[error("clock frequency must be positive, got {0}")]
    Clock(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub m: WordWidth,
    pub n_pes: usize,
    pub clock_hz: f64,
}

impl HardwareConfig {
    pub fn new(m: WordWidth, n_pes: usize, clock_hz: f64) -> Result<Self, EngineError> {
        let hw = HardwareConfig { m, n_pes, clock_hz };
        hw.check()?;
        Ok(hw)
    }

    pub fn check(&self) -> Result<(), EngineError> {
        if !(1..=MAX_PES).contains(&self.n_pes) {
            return Err(EngineError::PeCount(self.n_pes));
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return Err(EngineError::Clock(self.clock_hz));
        }
        Ok(())
    }
}

/// Deliberate defects for checking that the differential harness bites.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Popcount whole tail words without masking the padding.
    UnmaskedTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub pool_skipping: bool,
    pub record_intermediates: bool,
    /// Run PE lanes on the rayon pool instead of one after another.
    pub parallel_lanes: bool,
    #[doc(hidden)]
    #[serde(skip)]
    pub fault: Option<Fault>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            pool_skipping: true,
            record_intermediates: false,
            parallel_lanes: false,
            fault: None,
        }
    }
}

/// A binary feature-map produced by a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub layer: usize,
    pub tensor: PackedBitTensor,
    /// Bits never evaluated because pool-skipping made them irrelevant.
    pub dont_care: Option<PackedBitVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub class_id: usize,
    pub logits: Vec<i32>,
    pub counters: ExecutionCounters,
    pub layers: Vec<LayerTrace>,
    /// One entry per binary-output or pool layer, in layer order.
    pub intermediates: Option<Vec<LayerOutput>>,
}

impl InferenceResult {
    /// Seconds at the given clock.
    pub fn latency(&self, hw: &HardwareConfig) -> f64 {
        self.counters.estimated_cycles as f64 / hw.clock_hz
    }
}

pub fn run_inference(
    net: &NetworkSpec,
    input: &FixedTensor,
    hw: &HardwareConfig,
    opts: &RunOptions,
) -> Result<InferenceResult, EngineError> {
    hw.check()?;
    validate(net).map_err(EngineError::InvalidNetwork)?;
    if input.shape != net.input_shape {
        return Err(EngineError::ShapeMismatch {
            expected: net.input_shape,
            actual: input.shape,
        });
    }

    let last = net.layers.len() - 1;
    let mut traces = Vec::with_capacity(net.layers.len());
    let mut intermediates = opts.record_intermediates.then(Vec::new);
    let mut act: Option<PackedBitTensor> = None;
    let mut logits = Vec::new();
    let mut buffer = Buffer::InputMemory;

    let mut i = 0;
    while i < net.layers.len() {
        let layer = &net.layers[i];
        let pool = net.layers.get(i + 1).filter(|l| l.kind == LayerKind::MaxPool);
        let final_index = if pool.is_some() { i + 1 } else { i };
        match (&layer.kind, &net.weights[i]) {
            (LayerKind::FcLast16, LayerWeights::Fixed(w)) => {
                let x = act.as_ref().expect("validated network starts with conv_first");
                let (l, mut trace) = execute_last_layer(i, layer, w, x, hw);
                trace.reads_from = Some(buffer);
                traces.push(trace);
                logits = l;
                i += 1;
                continue;
            }
            (LayerKind::ConvFirst | LayerKind::ConvBin | LayerKind::FcBin, LayerWeights::Binary(w)) => {
                let mut exec = if layer.kind == LayerKind::ConvFirst {
                    execute_first_layer(i, layer, w, input, pool, hw, opts)
                } else {
                    let x = act.as_ref().expect("validated network starts with conv_first");
                    execute_mid_layer(i, layer, w, x, pool, hw, opts)
                };
                exec.trace.reads_from = Some(buffer);
                if final_index == last {
                    // logits stay in the output registers
                    logits = exec.sums.clone();
                } else {
                    let bits = exec.next_input().shape().numel();
                    let entries = hw.m.entries_for(bits) as u64;
                    let c = &mut exec.trace.counters;
                    c.fmap_mem_writes = AccessTally::new(entries, bits as u64);
                    c.estimated_cycles = c.estimated_cycles.max(entries);
                    buffer = buffer.other();
                    exec.trace.writes_to = Some(buffer);
                }
                if let Some(list) = intermediates.as_mut() {
                    list.push(LayerOutput {
                        layer: i,
                        tensor: exec.output.clone(),
                        dont_care: exec.dont_care.clone(),
                    });
                    if let Some(p) = &exec.pooled {
                        list.push(LayerOutput {
                            layer: i + 1,
                            tensor: p.clone(),
                            dont_care: None,
                        });
                    }
                }
                traces.push(exec.trace.clone());
                if let Some(pt) = exec.pool_trace.clone() {
                    traces.push(pt);
                }
                act = Some(match exec.pooled {
                    Some(p) => p,
                    None => exec.output,
                });
                i = final_index + 1;
            }
            _ => unreachable!("validated network"),
        }
    }

    let mut counters = ExecutionCounters::default();
    for t in &traces {
        counters += t.counters;
    }
    Ok(InferenceResult {
        class_id: argmax(&logits),
        logits,
        counters,
        layers: traces,
        intermediates,
    })
}
