//! Latency and energy estimates from engine counters.
//!
//! Energies are in pJ per access or per op, powers in mW, and reports in µJ
//! per classification. Memory energy per entry is given as a table over word
//! widths; widths between table points are interpolated geometrically
//! (linearly in log-width / log-energy space).

mod sweep;

use std::path::Path;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sweep::{sweep, LayerSkipStat, SweepError, SweepPoint, SweepResult};

use crate::engine::{ExecutionCounters, HardwareConfig, InferenceResult, LayerTrace};
use crate::model::LayerKind;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parameter file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("width {width} lies outside the table range {min}..={max}")]
    OutOfRange { width: usize, min: u32, max: u32 },
}

/// Per-entry read and write energy of a memory `width` bits wide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryPoint<F> {
    pub width: u32,
    pub read_pj: F,
    pub write_pj: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModelParams<F> {
    /// Energy of one counted operation (pJ).
    pub compute_energy_per_op_pj: F,
    /// Static power of the accelerator regardless of PE count (mW).
    pub leakage_power_mw: F,
    /// Additional static power per PE (mW).
    pub static_overhead_per_pe_mw: F,
    /// Sorted by width.
    pub memory: Vec<MemoryPoint<F>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessEnergy<F> {
    pub read: F,
    pub write: F,
}

fn cast<F: Float>(x: f64) -> F {
    F::from(x).expect("float conversion")
}

fn count<F: Float>(x: u64) -> F {
    F::from(x).expect("float conversion")
}

impl<F: Float> EnergyModelParams<F> {
    /// Checks ordering, signs and the width trend: per-entry energy
    /// strictly increasing and per-bit energy strictly decreasing in width.
    pub fn validate(&self) -> Result<(), CostError> {
        let bad = |msg: String| Err(CostError::Invalid(msg));
        let scalars = [
            ("compute_energy_per_op_pj", self.compute_energy_per_op_pj),
            ("leakage_power_mw", self.leakage_power_mw),
            ("static_overhead_per_pe_mw", self.static_overhead_per_pe_mw),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v >= F::zero()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if self.memory.is_empty() {
            return bad("memory table is empty".into());
        }
        for p in &self.memory {
            if p.width == 0 {
                return bad("memory width 0".into());
            }
            if !(p.read_pj.is_finite() && p.read_pj >= F::zero() && p.write_pj.is_finite() && p.write_pj >= F::zero()) {
                return bad(format!("width {}: energies must be finite and non-negative", p.width));
            }
        }
        for pair in self.memory.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.width <= a.width {
                return bad(format!("widths must increase ({} then {})", a.width, b.width));
            }
            let (wa, wb) = (count::<F>(a.width as u64), count::<F>(b.width as u64));
            for (what, ea, eb) in [("read", a.read_pj, b.read_pj), ("write", a.write_pj, b.write_pj)] {
                if eb <= ea {
                    return bad(format!("{what} energy per entry must increase from width {} to {}", a.width, b.width));
                }
                if eb / wb >= ea / wa {
                    return bad(format!("{what} energy per bit must decrease from width {} to {}", a.width, b.width));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CostError>
    where
        F: for<'de> Deserialize<'de>,
    {
        let p: Self = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, CostError>
    where
        F: for<'de> Deserialize<'de>,
    {
        let text = std::fs::read_to_string(path).map_err(|source| CostError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The synthetic sample parameters shipped with the crate.
    pub fn sample() -> Self
    where
        F: for<'de> Deserialize<'de>,
    {
        Self::from_toml_str(SAMPLE_PARAMS).expect("shipped parameters are valid")
    }

    /// Per-entry energies at `width`, interpolated if not tabulated.
    pub fn entry_energy(&self, width: usize) -> Result<AccessEnergy<F>, CostError> {
        let first = self.memory.first().ok_or_else(|| CostError::Invalid("memory table is empty".into()))?;
        let last = self.memory.last().expect("non-empty");
        let out_of_range = CostError::OutOfRange {
            width,
            min: first.width,
            max: last.width,
        };
        if width < first.width as usize || width > last.width as usize {
            return Err(out_of_range);
        }
        let hi = self
            .memory
            .iter()
            .position(|p| p.width as usize >= width)
            .expect("inside the table range");
        let b = &self.memory[hi];
        if b.width as usize == width {
            return Ok(AccessEnergy {
                read: b.read_pj,
                write: b.write_pj,
            });
        }
        let a = &self.memory[hi - 1];
        let t = ((width as f64).ln() - (a.width as f64).ln()) / ((b.width as f64).ln() - (a.width as f64).ln());
        Ok(AccessEnergy {
            read: geometric(a.read_pj, b.read_pj, t),
            write: geometric(a.write_pj, b.write_pj, t),
        })
    }
}

fn geometric<F: Float>(a: F, b: F, t: f64) -> F {
    let t = cast::<F>(t);
    if a > F::zero() && b > F::zero() {
        (a.ln() + t * (b.ln() - a.ln())).exp()
    } else {
        a + t * (b - a)
    }
}

pub const SAMPLE_PARAMS: &str = include_str!("../../assets/energy_sample.toml");

/// Per-entry energy divided by the width.
pub fn per_bit_energy<F: Float>(width: usize, params: &EnergyModelParams<F>) -> Result<AccessEnergy<F>, CostError> {
    let e = params.entry_energy(width)?;
    let w = count::<F>(width as u64);
    Ok(AccessEnergy {
        read: e.read / w,
        write: e.write / w,
    })
}

/// Seconds for the counted cycles at the configured clock.
pub fn estimate_latency<F: Float>(counters: &ExecutionCounters, hw: &HardwareConfig) -> F {
    count::<F>(counters.estimated_cycles) / cast(hw.clock_hz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEnergy<F> {
    pub index: usize,
    pub kind: LayerKind,
    pub memory_energy: F,
    pub compute_energy: F,
    pub leakage_energy: F,
    pub total_energy: F,
    pub latency: F,
}

/// Energies in µJ per classification, latency in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport<F> {
    pub memory_energy: F,
    pub compute_energy: F,
    pub leakage_energy: F,
    pub total_energy: F,
    pub latency: F,
    pub layers: Vec<LayerEnergy<F>>,
}

impl<F: Float> EnergyReport<F> {
    fn zero() -> Self {
        EnergyReport {
            memory_energy: F::zero(),
            compute_energy: F::zero(),
            leakage_energy: F::zero(),
            total_energy: F::zero(),
            latency: F::zero(),
            layers: Vec::new(),
        }
    }
}

struct Parts<F> {
    memory: F,
    compute: F,
    leakage: F,
    latency: F,
}

fn parts<F: Float>(c: &ExecutionCounters, hw: &HardwareConfig, e: AccessEnergy<F>, params: &EnergyModelParams<F>) -> Parts<F> {
    let pj_to_uj = cast::<F>(1e-6);
    let mj_to_uj = cast::<F>(1e3);
    let memory = (count::<F>(c.entry_reads()) * e.read + count::<F>(c.fmap_mem_writes.entries) * e.write) * pj_to_uj;
    let compute = count::<F>(c.effective_ops) * params.compute_energy_per_op_pj * pj_to_uj;
    let latency = estimate_latency::<F>(c, hw);
    let power = params.leakage_power_mw + count::<F>(hw.n_pes as u64) * params.static_overhead_per_pe_mw;
    Parts {
        memory,
        compute,
        leakage: power * latency * mj_to_uj,
        latency,
    }
}

/// Energy of one run from its aggregate counters (no per-layer breakdown).
pub fn estimate_energy<F: Float>(
    counters: &ExecutionCounters,
    hw: &HardwareConfig,
    params: &EnergyModelParams<F>,
) -> Result<EnergyReport<F>, CostError> {
    let e = params.entry_energy(hw.m.bits())?;
    let p = parts(counters, hw, e, params);
    Ok(EnergyReport {
        memory_energy: p.memory,
        compute_energy: p.compute,
        leakage_energy: p.leakage,
        total_energy: p.memory + p.compute + p.leakage,
        latency: p.latency,
        layers: Vec::new(),
    })
}

/// Energy of one run with a per-layer breakdown; totals are layer sums.
pub fn estimate_run_energy<F: Float>(
    result: &InferenceResult,
    hw: &HardwareConfig,
    params: &EnergyModelParams<F>,
) -> Result<EnergyReport<F>, CostError> {
    layer_report(&result.layers, hw, params)
}

pub(crate) fn layer_report<F: Float>(
    traces: &[LayerTrace],
    hw: &HardwareConfig,
    params: &EnergyModelParams<F>,
) -> Result<EnergyReport<F>, CostError> {
    let e = params.entry_energy(hw.m.bits())?;
    let mut r = EnergyReport::zero();
    for t in traces {
        let p = parts(&t.counters, hw, e, params);
        let total = p.memory + p.compute + p.leakage;
        r.memory_energy = r.memory_energy + p.memory;
        r.compute_energy = r.compute_energy + p.compute;
        r.leakage_energy = r.leakage_energy + p.leakage;
        r.total_energy = r.total_energy + total;
        r.latency = r.latency + p.latency;
        r.layers.push(LayerEnergy {
            index: t.index,
            kind: t.kind,
            memory_energy: p.memory,
            compute_energy: p.compute,
            leakage_energy: p.leakage,
            total_energy: total,
            latency: p.latency,
        });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitpack::WordWidth;
    use crate::engine::AccessTally;

    fn table(points: &[(u32, f64, f64)]) -> EnergyModelParams<f64> {
        EnergyModelParams {
            compute_energy_per_op_pj: 0.1,
            leakage_power_mw: 1.0,
            static_overhead_per_pe_mw: 0.5,
            memory: points
                .iter()
                .map(|&(width, read_pj, write_pj)| MemoryPoint { width, read_pj, write_pj })
                .collect(),
        }
    }

    #[test]
    fn sample_is_valid_and_decreasing_per_bit() {
        let p = EnergyModelParams::<f64>::sample();
        let bits: Vec<f64> = WordWidth::ALL
            .iter()
            .map(|w| per_bit_energy(w.bits(), &p).unwrap().read)
            .collect();
        assert!(bits.windows(2).all(|w| w[1] < w[0]));
        let p32 = EnergyModelParams::<f32>::sample();
        assert!(per_bit_energy(64, &p32).unwrap().write > 0.0);
    }

    #[test]
    fn per_bit_from_invariant() {
        let p = table(&[(32, 3.2, 4.0), (128, 8.0, 10.0)]);
        p.validate().unwrap();
        assert!(per_bit_energy(128, &p).unwrap().read < per_bit_energy(32, &p).unwrap().read);
    }

    #[test]
    fn geometric_midpoint() {
        let p = table(&[(32, 2.0, 2.0), (128, 8.0, 8.0)]);
        let e = p.entry_energy(64).unwrap();
        assert!((e.read - 4.0).abs() < 1e-12);
        assert!(matches!(p.entry_energy(16), Err(CostError::OutOfRange { .. })));
        assert!(matches!(p.entry_energy(256), Err(CostError::OutOfRange { .. })));
    }

    #[test]
    fn rejects_increasing_per_bit() {
        let p = table(&[(32, 1.0, 1.0), (64, 3.0, 3.0)]);
        assert!(matches!(p.validate(), Err(CostError::Invalid(_))));
        let p = table(&[(32, 2.0, 2.0), (64, 1.0, 1.5)]);
        assert!(p.validate().is_err());
        let p = table(&[(64, 2.0, 2.0), (32, 1.0, 1.5)]);
        assert!(p.validate().is_err());
        let mut p = table(&[(32, 1.0, 1.0)]);
        p.leakage_power_mw = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{SAMPLE_PARAMS}\nbogus = 1\n");
        assert!(matches!(EnergyModelParams::<f64>::from_toml_str(&text), Err(CostError::Parse(_))));
    }

    #[test]
    fn zero_op_run_is_leakage_only() {
        let p = table(&[(32, 1.0, 1.0), (64, 1.5, 1.5)]);
        let hw = HardwareConfig::new(WordWidth::W32, 2, 1e6).unwrap();
        let c = ExecutionCounters {
            estimated_cycles: 1000,
            ..Default::default()
        };
        let r = estimate_energy(&c, &hw, &p).unwrap();
        assert_eq!(r.memory_energy, 0.0);
        assert_eq!(r.compute_energy, 0.0);
        // (1 + 2·0.5) mW for 1 ms
        assert!((r.leakage_energy - 2.0).abs() < 1e-9);
        assert_eq!(r.total_energy, r.leakage_energy);
    }

    #[test]
    fn latency_halves_with_double_clock() {
        let c = ExecutionCounters {
            estimated_cycles: 12345,
            ..Default::default()
        };
        let a = estimate_latency::<f64>(&c, &HardwareConfig::new(WordWidth::W64, 1, 1e8).unwrap());
        let b = estimate_latency::<f64>(&c, &HardwareConfig::new(WordWidth::W64, 1, 2e8).unwrap());
        assert_eq!(a, 2.0 * b);
    }

    #[test]
    fn memory_energy_counts_entries() {
        let p = table(&[(32, 2.0, 3.0), (64, 3.0, 4.0)]);
        let hw = HardwareConfig::new(WordWidth::W32, 1, 1e6).unwrap();
        let c = ExecutionCounters {
            filter_mem_reads: AccessTally::new(10, 320),
            input_mem_reads: AccessTally::new(5, 100),
            fmap_mem_writes: AccessTally::new(2, 50),
            ..Default::default()
        };
        let r = estimate_energy(&c, &hw, &p).unwrap();
        assert!((r.memory_energy - (15.0 * 2.0 + 2.0 * 3.0) * 1e-6).abs() < 1e-15);
    }
}
