//! Bit-packed binarized neural network inference and an accelerator cost
//! simulator.
//!
//! * [`bitpack`]: ±1 vectors packed LSB-first and the chunked xnor/popcount dot product.
//! * [`model`]: layer specs, validation, op accounting, the binary model format and
//!   TOML architectures.
//! * [`reference`]: a naive integer oracle.
//! * [`engine`]: the packed simulator with PE tiling, pool-skipping and counters.
//! * [`costmodel`]: latency and energy estimates plus a (m, n) design sweep.
//!
//! The cost model is generic over the float type and the oracle over its
//! accumulator; the aliases below pick the usual instantiations.

pub mod bitpack;
pub mod costmodel;
pub mod differential;
pub mod engine;
pub mod model;
pub mod reference;

pub use bitpack::{PackedBitTensor, PackedBitVector, Shape3, WordWidth};
pub use engine::{run_inference, ExecutionCounters, HardwareConfig, InferenceResult, RunOptions};
pub use model::{Fixed16, FixedTensor, LayerKind, LayerSpec, LayerWeights, NetworkSpec};

pub type EnergyModelParams = costmodel::EnergyModelParams<f64>;
pub type EnergyModelParamsF32 = costmodel::EnergyModelParams<f32>;
pub type EnergyReport = costmodel::EnergyReport<f64>;
pub type EnergyReportF32 = costmodel::EnergyReport<f32>;
pub type SweepResult = costmodel::SweepResult<f64>;
pub type SweepResultF32 = costmodel::SweepResult<f32>;

/// Oracle output with 64-bit accumulators.
pub type RefOutput = reference::ReferenceOutput<i64>;
/// Oracle output with 32-bit accumulators, matching the engine's registers.
pub type RefOutput32 = reference::ReferenceOutput<i32>;

/// Oracle inference with 64-bit accumulators.
pub fn ref_infer(net: &NetworkSpec, input: &FixedTensor) -> Result<RefOutput, reference::ReferenceError> {
    reference::ref_infer::<i64>(net, input)
}
