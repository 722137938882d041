use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{layer_report, CostError, EnergyModelParams, EnergyReport, LayerEnergy};
use crate::bitpack::WordWidth;
use crate::engine::{run_inference, EngineError, HardwareConfig, LayerTrace, RunOptions};
use crate::model::{FixedTensor, LayerKind, NetworkSpec};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep needs at least one word width, PE count and input")]
    Empty,
    #[error("m={m}, n={n_pes}: {source}")]
    Engine {
        m: WordWidth,
        n_pes: usize,
        source: EngineError,
    },
    #[error("m={m}: {source}")]
    Cost { m: WordWidth, source: CostError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint<F> {
    pub m: WordWidth,
    pub n_pes: usize,
    /// Mean over the corpus.
    pub report: EnergyReport<F>,
    pub mean_cycles: F,
    pub mean_effective_ops: F,
    pub mean_skipped_ops: F,
}

/// Pool-skipping statistics of one layer, averaged over the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSkipStat {
    pub layer: usize,
    pub kind: LayerKind,
    pub pool_fed: bool,
    pub nominal_ops: u64,
    pub skipped_fraction: f64,
    /// Share of pool windows whose first element was +1.
    pub first_plus_rate: f64,
    /// Share of evaluated outputs that were +1.
    pub plus_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<F> {
    /// Sorted by (m, n).
    pub points: Vec<SweepPoint<F>>,
    /// Index into `points` of the lowest total energy.
    pub argmin: usize,
    /// Energy at n = 1 (or the smallest swept n) and the optimum's m, over the optimum.
    pub serial_to_optimal_ratio: F,
    pub skip_stats: Vec<LayerSkipStat>,
}

impl<F: Float> SweepResult<F> {
    pub fn best(&self) -> &SweepPoint<F> {
        &self.points[self.argmin]
    }

    pub fn point(&self, m: WordWidth, n_pes: usize) -> Option<&SweepPoint<F>> {
        self.points.iter().find(|p| p.m == m && p.n_pes == n_pes)
    }

    /// Total energy against n for one m, in n order.
    pub fn energy_vs_n(&self, m: WordWidth) -> Vec<(usize, F)> {
        self.points
            .iter()
            .filter(|p| p.m == m)
            .map(|p| (p.n_pes, p.report.total_energy))
            .collect()
    }
}

#[derive(Serialize)]
struct CsvRow {
    m: u32,
    n_pes: usize,
    total_energy_uj: f64,
    memory_energy_uj: f64,
    compute_energy_uj: f64,
    leakage_energy_uj: f64,
    latency_s: f64,
    cycles: f64,
    effective_ops: f64,
    skipped_ops: f64,
}

impl<F: Float> SweepResult<F> {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let f = |x: F| x.to_f64().unwrap_or(f64::NAN);
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(CsvRow {
                m: p.m.into(),
                n_pes: p.n_pes,
                total_energy_uj: f(p.report.total_energy),
                memory_energy_uj: f(p.report.memory_energy),
                compute_energy_uj: f(p.report.compute_energy),
                leakage_energy_uj: f(p.report.leakage_energy),
                latency_s: f(p.report.latency),
                cycles: f(p.mean_cycles),
                effective_ops: f(p.mean_effective_ops),
                skipped_ops: f(p.mean_skipped_ops),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_report<F: Float>(reports: &[EnergyReport<F>]) -> EnergyReport<F> {
    let k = F::from(reports.len()).expect("float conversion");
    let avg = |get: &dyn Fn(&EnergyReport<F>) -> F| reports.iter().fold(F::zero(), |s, r| s + get(r)) / k;
    let layers = (0..reports[0].layers.len())
        .map(|i| {
            let first = &reports[0].layers[i];
            let lavg = |get: &dyn Fn(&LayerEnergy<F>) -> F| reports.iter().fold(F::zero(), |s, r| s + get(&r.layers[i])) / k;
            LayerEnergy {
                index: first.index,
                kind: first.kind,
                memory_energy: lavg(&|l| l.memory_energy),
                compute_energy: lavg(&|l| l.compute_energy),
                leakage_energy: lavg(&|l| l.leakage_energy),
                total_energy: lavg(&|l| l.total_energy),
                latency: lavg(&|l| l.latency),
            }
        })
        .collect();
    EnergyReport {
        memory_energy: avg(&|r| r.memory_energy),
        compute_energy: avg(&|r| r.compute_energy),
        leakage_energy: avg(&|r| r.leakage_energy),
        total_energy: avg(&|r| r.total_energy),
        latency: avg(&|r| r.latency),
        layers,
    }
}

fn skip_stats(runs: &[Vec<LayerTrace>]) -> Vec<LayerSkipStat> {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (0..runs[0].len())
        .map(|i| {
            let sum = |get: &dyn Fn(&LayerTrace) -> u64| runs.iter().map(|r| get(&r[i])).sum::<u64>();
            let t = &runs[0][i];
            LayerSkipStat {
                layer: t.index,
                kind: t.kind,
                pool_fed: t.pool_fed,
                nominal_ops: t.counters.nominal_ops,
                skipped_fraction: ratio(sum(&|t| t.counters.skipped_ops), sum(&|t| t.counters.nominal_ops)),
                first_plus_rate: ratio(sum(&|t| t.pool_first_plus), sum(&|t| t.pool_windows)),
                plus_rate: ratio(sum(&|t| t.evaluated_plus), sum(&|t| t.evaluated_outputs)),
            }
        })
        .collect()
}

/// Runs the engine over `corpus` at every (m, n) and averages the energy.
pub fn sweep<F: Float + Send + Sync>(
    net: &NetworkSpec,
    corpus: &[FixedTensor],
    m_set: &[WordWidth],
    n_set: &[usize],
    clock_hz: f64,
    params: &EnergyModelParams<F>,
    opts: &RunOptions,
) -> Result<SweepResult<F>, SweepError> {
    if m_set.is_empty() || n_set.is_empty() || corpus.is_empty() {
        return Err(SweepError::Empty);
    }
    let mut ms = m_set.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let mut ns = n_set.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let grid: Vec<(WordWidth, usize)> = ms.iter().flat_map(|&m| ns.iter().map(move |&n| (m, n))).collect();
    let opts = RunOptions {
        record_intermediates: false,
        ..*opts
    };

    let evaluated: Vec<(SweepPoint<F>, Vec<Vec<LayerTrace>>)> = grid
        .par_iter()
        .map(|&(m, n_pes)| {
            let engine_err = |source| SweepError::Engine { m, n_pes, source };
            let hw = HardwareConfig::new(m, n_pes, clock_hz).map_err(engine_err)?;
            let mut reports = Vec::with_capacity(corpus.len());
            let mut traces = Vec::with_capacity(corpus.len());
            let (mut cycles, mut eff, mut skipped) = (0u64, 0u64, 0u64);
            for x in corpus {
                let r = run_inference(net, x, &hw, &opts).map_err(engine_err)?;
                reports.push(layer_report(&r.layers, &hw, params).map_err(|source| SweepError::Cost { m, source })?);
                cycles += r.counters.estimated_cycles;
                eff += r.counters.effective_ops;
                skipped += r.counters.skipped_ops;
                traces.push(r.layers);
            }
            let k = corpus.len() as f64;
            let mean = |x: u64| F::from(x as f64 / k).expect("float conversion");
            let point = SweepPoint {
                m,
                n_pes,
                report: mean_report(&reports),
                mean_cycles: mean(cycles),
                mean_effective_ops: mean(eff),
                mean_skipped_ops: mean(skipped),
            };
            Ok((point, traces))
        })
        .collect::<Result<_, SweepError>>()?;

    let skip_stats = skip_stats(&evaluated[0].1);
    let points: Vec<SweepPoint<F>> = evaluated.into_iter().map(|(p, _)| p).collect();
    let mut argmin = 0;
    for (i, p) in points.iter().enumerate() {
        if p.report.total_energy < points[argmin].report.total_energy {
            argmin = i;
        }
    }
    let best = &points[argmin];
    let serial = points
        .iter()
        .find(|p| p.m == best.m && p.n_pes == ns[0])
        .expect("grid contains the smallest n");
    let serial_to_optimal_ratio = serial.report.total_energy / best.report.total_energy;
    Ok(SweepResult {
        points,
        argmin,
        serial_to_optimal_ratio,
        skip_stats,
    })
}
