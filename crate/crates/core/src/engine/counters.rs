use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::model::LayerKind;

/// Memory traffic in m-bit entries and in payload bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTally {
    pub entries: u64,
    pub bits: u64,
}

impl AccessTally {
    pub fn new(entries: u64, bits: u64) -> Self {
        AccessTally { entries, bits }
    }
}

impl AddAssign for AccessTally {
    fn add_assign(&mut self, rhs: Self) {
        self.entries += rhs.entries;
        self.bits += rhs.bits;
    }
}

/// Operation, memory and timing tallies of a run (or of one layer).
///
/// `nominal_ops == effective_ops + skipped_ops` always holds. Nominal
/// operations count two per weight-input pair plus max-pool comparisons and
/// do not depend on the word width or PE count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionCounters {
    pub nominal_ops: u64,
    pub effective_ops: u64,
    pub skipped_ops: u64,
    pub xnor_pcnt_instructions: u64,
    /// Add/sub operations of the first and last layers.
    pub addsub_ops: u64,
    pub pool_compare_ops: u64,
    pub filter_mem_reads: AccessTally,
    pub input_mem_reads: AccessTally,
    pub fmap_mem_writes: AccessTally,
    pub estimated_cycles: u64,
}

impl ExecutionCounters {
    pub fn is_conserved(&self) -> bool {
        self.nominal_ops == self.effective_ops + self.skipped_ops
    }

    /// Memory entries read from the filter and input memories.
    pub fn entry_reads(&self) -> u64 {
        self.filter_mem_reads.entries + self.input_mem_reads.entries
    }
}

impl AddAssign for ExecutionCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.nominal_ops += rhs.nominal_ops;
        self.effective_ops += rhs.effective_ops;
        self.skipped_ops += rhs.skipped_ops;
        self.xnor_pcnt_instructions += rhs.xnor_pcnt_instructions;
        self.addsub_ops += rhs.addsub_ops;
        self.pool_compare_ops += rhs.pool_compare_ops;
        self.filter_mem_reads += rhs.filter_mem_reads;
        self.input_mem_reads += rhs.input_mem_reads;
        self.fmap_mem_writes += rhs.fmap_mem_writes;
        self.estimated_cycles += rhs.estimated_cycles;
    }
}

/// The two feature-map buffers that swap roles between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Buffer {
    InputMemory,
    FeatureMapMemory,
}

impl Buffer {
    pub fn other(self) -> Self {
        match self {
            Buffer::InputMemory => Buffer::FeatureMapMemory,
            Buffer::FeatureMapMemory => Buffer::InputMemory,
        }
    }
}

/// Per-layer counters plus pool-skipping statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub index: usize,
    pub kind: LayerKind,
    /// Buffer the layer's PEs read activations from; `None` for a fused pool.
    pub reads_from: Option<Buffer>,
    /// Buffer the layer's output is written to; `None` when nothing is stored.
    pub writes_to: Option<Buffer>,
    /// The layer's output feeds a max-pool.
    pub pool_fed: bool,
    pub counters: ExecutionCounters,
    /// Pool windows explored (pool-fed layers only).
    pub pool_windows: u64,
    /// Pool windows whose first element binarized to +1.
    pub pool_first_plus: u64,
    /// Output elements actually evaluated, and how many of them were +1.
    pub evaluated_outputs: u64,
    pub evaluated_plus: u64,
}

impl LayerTrace {
    pub(crate) fn new(index: usize, kind: LayerKind) -> Self {
        LayerTrace {
            index,
            kind,
            reads_from: None,
            writes_to: None,
            pool_fed: false,
            counters: ExecutionCounters::default(),
            pool_windows: 0,
            pool_first_plus: 0,
            evaluated_outputs: 0,
            evaluated_plus: 0,
        }
    }

    /// Skipped share of this layer's nominal operations.
    pub fn skip_fraction(&self) -> f64 {
        if self.counters.nominal_ops == 0 {
            0.0
        } else {
            self.counters.skipped_ops as f64 / self.counters.nominal_ops as f64
        }
    }
}

#[derive(Serialize)]
struct TraceRow {
    layer: usize,
    kind: LayerKind,
    reads_from: Option<Buffer>,
    writes_to: Option<Buffer>,
    pool_fed: bool,
    nominal_ops: u64,
    effective_ops: u64,
    skipped_ops: u64,
    xnor_pcnt_instructions: u64,
    addsub_ops: u64,
    pool_compare_ops: u64,
    filter_read_entries: u64,
    filter_read_bits: u64,
    input_read_entries: u64,
    input_read_bits: u64,
    fmap_write_entries: u64,
    fmap_write_bits: u64,
    estimated_cycles: u64,
    skip_fraction: f64,
}

/// Writes one CSV row per layer.
pub fn write_trace_csv<W: std::io::Write>(layers: &[LayerTrace], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for t in layers {
        let c = &t.counters;
        w.serialize(TraceRow {
            layer: t.index,
            kind: t.kind,
            reads_from: t.reads_from,
            writes_to: t.writes_to,
            pool_fed: t.pool_fed,
            nominal_ops: c.nominal_ops,
            effective_ops: c.effective_ops,
            skipped_ops: c.skipped_ops,
            xnor_pcnt_instructions: c.xnor_pcnt_instructions,
            addsub_ops: c.addsub_ops,
            pool_compare_ops: c.pool_compare_ops,
            filter_read_entries: c.filter_mem_reads.entries,
            filter_read_bits: c.filter_mem_reads.bits,
            input_read_entries: c.input_mem_reads.entries,
            input_read_bits: c.input_mem_reads.bits,
            fmap_write_entries: c.fmap_mem_writes.entries,
            fmap_write_bits: c.fmap_mem_writes.bits,
            estimated_cycles: c.estimated_cycles,
            skip_fraction: t.skip_fraction(),
        })?;
    }
    w.flush()?;
    Ok(())
}
