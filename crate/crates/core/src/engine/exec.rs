use rayon::prelude::*;

use super::counters::{AccessTally, ExecutionCounters, LayerTrace};
use super::tiling::{round_channels, rounds, tile_output_channels};
use super::{Fault, HardwareConfig, RunOptions};
use crate::bitpack::{
    signed_dot, signed_dot_unmasked_tail, xnor_pcnt_instruction_count, PackedBitTensor, PackedBitVector, Shape3,
};
use crate::model::{output_shape, Fixed16, FixedTensor, LayerKind, LayerSpec};

/// Result of one binary-output layer, with its fused pool if any.
#[derive(Debug, Clone)]
pub struct LayerExecution {
    /// Pre-pool ±1 output. Positions skipped by pool-skipping hold 1.
    pub output: PackedBitTensor,
    /// Positions of `output` that were never evaluated.
    pub dont_care: Option<PackedBitVector>,
    pub pooled: Option<PackedBitTensor>,
    /// Accumulator plus bias per output element; 0 where skipped.
    pub sums: Vec<i32>,
    pub trace: LayerTrace,
    pub pool_trace: Option<LayerTrace>,
}

impl LayerExecution {
    /// The tensor the next layer consumes.
    pub fn next_input(&self) -> &PackedBitTensor {
        self.pooled.as_ref().unwrap_or(&self.output)
    }
}

enum Patches {
    Samples(Vec<Vec<i32>>),
    Bits(Vec<PackedBitVector>),
}

struct Kernel {
    fan_in: usize,
    filters: Vec<PackedBitVector>,
    patches: Patches,
    unmasked_tail: bool,
    /// Entries read from the input memory to gather each position's patch.
    input_entries: Vec<u64>,
    input_bits: u64,
    filter_entries: u64,
    filter_bits: u64,
    /// Compute cycles and instruction counts per output element.
    elem_cycles: u64,
    elem_instructions: u64,
    elem_addsub: u64,
}

impl Kernel {
    fn eval(&self, oc: usize, pos: usize) -> i32 {
        let filter = &self.filters[oc];
        match &self.patches {
            Patches::Samples(p) => filter
                .iter()
                .zip(&p[pos])
                .map(|(bit, &x)| if bit { x } else { -x })
                .sum(),
            Patches::Bits(p) => {
                let dot = if self.unmasked_tail {
                    signed_dot_unmasked_tail(filter, &p[pos])
                } else {
                    signed_dot(filter, &p[pos])
                };
                dot.expect("patch and filter share length and width")
            }
        }
    }
}

fn split_filters(weights: &PackedBitVector, channels: usize, fan_in: usize, hw: &HardwareConfig) -> Vec<PackedBitVector> {
    (0..channels)
        .map(|oc| {
            let mut f = PackedBitVector::with_capacity(fan_in, hw.m);
            f.extend_from_range(weights, oc * fan_in, fan_in);
            f
        })
        .collect()
}

/// First layer: add/sub of Q8.8 samples selected by weight bits, then bias and sign.
pub fn execute_first_layer(
    index: usize,
    layer: &LayerSpec,
    weights: &PackedBitVector,
    input: &FixedTensor,
    pool: Option<&LayerSpec>,
    hw: &HardwareConfig,
    opts: &RunOptions,
) -> LayerExecution {
    assert_eq!(layer.kind, LayerKind::ConvFirst);
    let s = input.shape;
    let out = output_shape(layer, s).expect("validated layer");
    let fan_in = layer.fan_in();
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let row_bits = 16 * kw * s.channels;
    let mut patches = Vec::with_capacity(out.positions());
    let mut input_entries = Vec::with_capacity(out.positions());
    for oh in 0..out.height {
        for ow in 0..out.width {
            let mut patch = Vec::with_capacity(fan_in);
            let mut entries = 0;
            for dy in 0..kh {
                let h = oh * sh + dy;
                let start = (h * s.width + ow * sw) * s.channels;
                patch.extend(input.data[start..start + kw * s.channels].iter().map(|x| x.raw() as i32));
                entries += hw.m.entries_spanned(16 * start, row_bits) as u64;
            }
            patches.push(patch);
            input_entries.push(entries);
        }
    }
    let kernel = Kernel {
        fan_in,
        filters: split_filters(weights, out.channels, fan_in, hw),
        patches: Patches::Samples(patches),
        unmasked_tail: false,
        input_entries,
        input_bits: 16 * fan_in as u64,
        filter_entries: hw.m.entries_for(fan_in) as u64,
        filter_bits: fan_in as u64,
        elem_cycles: fan_in as u64,
        elem_instructions: 0,
        elem_addsub: 2 * fan_in as u64,
    };
    run_binary_layer(index, layer, out, pool, &kernel, hw, opts)
}

/// Conv or FC layer on packed ±1 activations.
pub fn execute_mid_layer(
    index: usize,
    layer: &LayerSpec,
    weights: &PackedBitVector,
    input: &PackedBitTensor,
    pool: Option<&LayerSpec>,
    hw: &HardwareConfig,
    opts: &RunOptions,
) -> LayerExecution {
    assert!(matches!(layer.kind, LayerKind::ConvBin | LayerKind::FcBin));
    let s = input.shape();
    let out = output_shape(layer, s).expect("validated layer");
    let fan_in = layer.fan_in();
    let data = input.data();
    let (patches, input_entries) = if layer.kind == LayerKind::FcBin {
        let patch = data.with_width(hw.m);
        (vec![patch], vec![hw.m.entries_for(fan_in) as u64])
    } else {
        let (kh, kw) = layer.kernel;
        let (sh, sw) = layer.stride;
        let row = kw * s.channels;
        let mut patches = Vec::with_capacity(out.positions());
        let mut entries = Vec::with_capacity(out.positions());
        for oh in 0..out.height {
            for ow in 0..out.width {
                let mut patch = PackedBitVector::with_capacity(fan_in, hw.m);
                let mut e = 0;
                for dy in 0..kh {
                    let start = ((oh * sh + dy) * s.width + ow * sw) * s.channels;
                    patch.extend_from_range(data, start, row);
                    e += hw.m.entries_spanned(start, row) as u64;
                }
                patches.push(patch);
                entries.push(e);
            }
        }
        (patches, entries)
    };
    let instructions = xnor_pcnt_instruction_count(fan_in, hw.m) as u64;
    let kernel = Kernel {
        fan_in,
        filters: split_filters(weights, out.channels, fan_in, hw),
        patches: Patches::Bits(patches),
        unmasked_tail: opts.fault == Some(Fault::UnmaskedTail),
        input_entries,
        input_bits: fan_in as u64,
        filter_entries: hw.m.entries_for(fan_in) as u64,
        filter_bits: fan_in as u64,
        elem_cycles: instructions,
        elem_instructions: instructions,
        elem_addsub: 0,
    };
    run_binary_layer(index, layer, out, pool, &kernel, hw, opts)
}

/// Final 16-bit FC layer. Returns raw logits.
pub fn execute_last_layer(
    index: usize,
    layer: &LayerSpec,
    weights: &[Fixed16],
    input: &PackedBitTensor,
    hw: &HardwareConfig,
) -> (Vec<i32>, LayerTrace) {
    assert_eq!(layer.kind, LayerKind::FcLast16);
    let fan_in = layer.fan_in();
    let classes = layer.out_channels;
    let x = input.data();
    let logits: Vec<i32> = (0..classes)
        .map(|c| {
            let row = &weights[c * fan_in..(c + 1) * fan_in];
            row.iter()
                .zip(x.iter())
                .fold(layer.bias[c], |acc, (w, bit)| {
                    let w = w.raw() as i32;
                    if bit {
                        acc + w
                    } else {
                        acc - w
                    }
                })
        })
        .collect();

    let ops = 2 * fan_in as u64 * classes as u64;
    let filter_entries = hw.m.entries_for(16 * fan_in) as u64;
    let input_entries = hw.m.entries_for(fan_in) as u64;
    let mut cycles = 0;
    for r in 0..rounds(classes, hw.n_pes) {
        let active = round_channels(r, classes, hw.n_pes).len() as u64;
        cycles += (fan_in as u64).max(input_entries).max(active * filter_entries);
    }
    let mut trace = LayerTrace::new(index, LayerKind::FcLast16);
    trace.counters = ExecutionCounters {
        nominal_ops: ops,
        effective_ops: ops,
        addsub_ops: ops,
        filter_mem_reads: AccessTally::new(classes as u64 * filter_entries, classes as u64 * 16 * fan_in as u64),
        input_mem_reads: AccessTally::new(classes as u64 * input_entries, classes as u64 * fan_in as u64),
        estimated_cycles: cycles,
        ..Default::default()
    };
    trace.evaluated_outputs = classes as u64;
    (logits, trace)
}

struct ChannelResult {
    sums: Vec<i32>,
    bits: Vec<bool>,
    computed: Vec<bool>,
    pooled: Vec<bool>,
    evaluated: u64,
    plus: u64,
    skipped: u64,
    compares_done: u64,
    compares_skipped: u64,
    windows: u64,
    first_plus: u64,
    input_entries: u64,
}

fn process_channel(
    oc: usize,
    bias: i32,
    out: Shape3,
    pool: Option<(usize, usize)>,
    kernel: &Kernel,
    skipping: bool,
) -> ChannelResult {
    let positions = out.positions();
    let mut r = ChannelResult {
        sums: vec![0; positions],
        bits: vec![true; positions],
        computed: vec![false; positions],
        pooled: Vec::new(),
        evaluated: 0,
        plus: 0,
        skipped: 0,
        compares_done: 0,
        compares_skipped: 0,
        windows: 0,
        first_plus: 0,
        input_entries: 0,
    };
    let eval = |r: &mut ChannelResult, pos: usize| -> bool {
        let sum = kernel.eval(oc, pos) + bias;
        let bit = sum >= 0;
        r.sums[pos] = sum;
        r.bits[pos] = bit;
        r.computed[pos] = true;
        r.evaluated += 1;
        r.plus += bit as u64;
        r.input_entries += kernel.input_entries[pos];
        bit
    };

    let Some((ph, pw)) = pool else {
        for pos in 0..positions {
            eval(&mut r, pos);
        }
        return r;
    };
    let (oh_n, ow_n) = (out.height / ph, out.width / pw);
    let window = (ph * pw) as u64;
    r.pooled = vec![false; oh_n * ow_n];
    for oh in 0..oh_n {
        for ow in 0..ow_n {
            r.windows += 1;
            let mut any = false;
            let mut k = 0u64;
            'window: for dy in 0..ph {
                for dx in 0..pw {
                    let pos = (oh * ph + dy) * out.width + ow * pw + dx;
                    let bit = eval(&mut r, pos);
                    if k == 0 && bit {
                        r.first_plus += 1;
                    }
                    if k > 0 {
                        r.compares_done += 1;
                    }
                    k += 1;
                    any |= bit;
                    if any && skipping {
                        break 'window;
                    }
                }
            }
            r.skipped += window - k;
            r.compares_skipped += window - k;
            r.pooled[oh * ow_n + ow] = any;
        }
    }
    // positions outside every pool window still feed the recorded feature-map
    for h in 0..out.height {
        for w in 0..out.width {
            if h >= oh_n * ph || w >= ow_n * pw {
                eval(&mut r, h * out.width + w);
            }
        }
    }
    r
}

fn run_binary_layer(
    index: usize,
    layer: &LayerSpec,
    out: Shape3,
    pool: Option<&LayerSpec>,
    kernel: &Kernel,
    hw: &HardwareConfig,
    opts: &RunOptions,
) -> LayerExecution {
    let pool_dims = pool.map(|p| p.pool);
    let skipping = opts.pool_skipping && pool.is_some();
    let tiles = tile_output_channels(out.channels, hw.n_pes);
    let run_lane = |chs: &Vec<usize>| -> Vec<(usize, ChannelResult)> {
        chs.iter()
            .map(|&oc| (oc, process_channel(oc, layer.bias[oc], out, pool_dims, kernel, skipping)))
            .collect()
    };
    let lanes: Vec<Vec<(usize, ChannelResult)>> = if opts.parallel_lanes {
        tiles.par_iter().map(run_lane).collect()
    } else {
        tiles.iter().map(run_lane).collect()
    };
    let mut per_channel: Vec<Option<ChannelResult>> = (0..out.channels).map(|_| None).collect();
    for (oc, res) in lanes.into_iter().flatten() {
        per_channel[oc] = Some(res);
    }
    let results: Vec<ChannelResult> = per_channel.into_iter().map(|r| r.expect("every channel tiled")).collect();

    let positions = out.positions();
    let output = PackedBitTensor::from_fn(out, hw.m, |c, h, w| results[c].bits[h * out.width + w]);
    let mut sums = vec![0i32; out.numel()];
    for (c, r) in results.iter().enumerate() {
        for pos in 0..positions {
            sums[pos * out.channels + c] = r.sums[pos];
        }
    }

    let elem_nominal = 2 * kernel.fan_in as u64;
    let mut trace = LayerTrace::new(index, layer.kind);
    trace.pool_fed = pool.is_some();
    let cnt = &mut trace.counters;
    for r in &results {
        cnt.effective_ops += r.evaluated * elem_nominal;
        cnt.skipped_ops += r.skipped * elem_nominal;
        cnt.xnor_pcnt_instructions += r.evaluated * kernel.elem_instructions;
        cnt.addsub_ops += r.evaluated * kernel.elem_addsub;
        cnt.input_mem_reads += AccessTally::new(r.input_entries, r.evaluated * kernel.input_bits);
        trace.pool_windows += r.windows;
        trace.pool_first_plus += r.first_plus;
        trace.evaluated_outputs += r.evaluated;
        trace.evaluated_plus += r.plus;
    }
    cnt.nominal_ops = cnt.effective_ops + cnt.skipped_ops;
    cnt.filter_mem_reads = AccessTally::new(
        out.channels as u64 * kernel.filter_entries,
        out.channels as u64 * kernel.filter_bits,
    );

    let mut cycles = 0;
    let mut union = vec![false; positions];
    for round in 0..rounds(out.channels, hw.n_pes) {
        let chs = round_channels(round, out.channels, hw.n_pes);
        union.iter_mut().for_each(|u| *u = false);
        let mut compute = 0;
        for c in chs.clone() {
            compute = compute.max(results[c].evaluated * kernel.elem_cycles);
            for (u, &done) in union.iter_mut().zip(&results[c].computed) {
                *u |= done;
            }
        }
        let input_port: u64 = union
            .iter()
            .zip(&kernel.input_entries)
            .filter(|(u, _)| **u)
            .map(|(_, &e)| e)
            .sum();
        let filter_port = chs.len() as u64 * kernel.filter_entries;
        cycles += compute.max(input_port).max(filter_port);
    }
    cnt.estimated_cycles = cycles;

    let (dont_care, pooled, pool_trace) = match pool {
        None => (None, None, None),
        Some(p) => {
            let pooled_shape = output_shape(p, out).expect("validated layer");
            let pw = pooled_shape.width;
            let pooled =
                PackedBitTensor::from_fn(pooled_shape, hw.m, |c, h, w| results[c].pooled[h * pw + w]);
            let mut mask = PackedBitVector::zeros(out.numel(), hw.m);
            let mut any_skipped = false;
            for (c, r) in results.iter().enumerate() {
                for (pos, &done) in r.computed.iter().enumerate() {
                    if !done {
                        mask.set(pos * out.channels + c, true);
                        any_skipped = true;
                    }
                }
            }
            let mut pt = LayerTrace::new(index + 1, LayerKind::MaxPool);
            let done: u64 = results.iter().map(|r| r.compares_done).sum();
            let skipped: u64 = results.iter().map(|r| r.compares_skipped).sum();
            pt.counters = ExecutionCounters {
                nominal_ops: done + skipped,
                effective_ops: done,
                skipped_ops: skipped,
                pool_compare_ops: done,
                ..Default::default()
            };
            pt.pool_windows = trace.pool_windows;
            pt.pool_first_plus = trace.pool_first_plus;
            (any_skipped.then_some(mask), Some(pooled), Some(pt))
        }
    };

    LayerExecution {
        output,
        dont_care,
        pooled,
        sums,
        trace,
        pool_trace,
    }
}
