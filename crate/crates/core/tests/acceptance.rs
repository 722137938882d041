//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use bnnsim::bitpack::{PackedBitVector, Shape3, WordWidth};
use bnnsim::costmodel::{estimate_energy, estimate_latency, per_bit_energy, sweep, EnergyModelParams, MemoryPoint};
use bnnsim::differential::first_mismatch;
use bnnsim::engine::{run_inference, HardwareConfig, InferenceResult, RunOptions};
use bnnsim::model::arch::{pamap2_mlp, stress_dcnn};
use bnnsim::model::{
    count_params_and_ops, deserialize, generate_random, packed_size_bytes, serialize, ArchLayer, ArchSpec, FixedTensor,
    LayerKind,
};
use bnnsim::reference::{maxpool_signs, ref_infer, ref_maxpool_before_sign, sign_tensor, IntTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const CASES: u64 = 1000;
const PES: [usize; 3] = [1, 4, 8];

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol * target
}

fn opts(skip: bool) -> RunOptions {
    RunOptions {
        pool_skipping: skip,
        record_intermediates: true,
        ..Default::default()
    }
}

/// Runs every case of the oracle sweep once and checks criteria 1 and 4 together.
fn oracle_and_soundness() -> (Outcome, Outcome) {
    let start = Instant::now();
    let (mut runs, mut kinds) = (0u64, std::collections::HashSet::new());
    let mut equivalence: Option<String> = None;
    let mut soundness: Option<String> = None;
    let mut skipped_total = 0u64;
    for seed in 0..CASES {
        let (net, input) = common::random_case(seed);
        kinds.extend(net.layers.iter().map(|l| l.kind));
        let oracle = ref_infer::<i64>(&net, &input).expect("oracle runs");
        for m in WordWidth::ALL {
            for n in PES {
                let hw = HardwareConfig::new(m, n, 1e8).unwrap();
                let run = |skip| run_inference(&net, &input, &hw, &opts(skip)).expect("engine runs");
                let (on, off): (InferenceResult, InferenceResult) = (run(true), run(false));
                runs += 2;
                skipped_total += on.counters.skipped_ops;
                for (r, skip) in [(&on, true), (&off, false)] {
                    if let (None, Some(mm)) = (&equivalence, first_mismatch(r, &oracle)) {
                        equivalence = Some(format!("seed {seed}, m={m}, n={n}, skip={skip}: {mm}"));
                    }
                    if soundness.is_none() && !r.counters.is_conserved() {
                        soundness = Some(format!("seed {seed}, m={m}, n={n}: counters not conserved"));
                    }
                }
                if soundness.is_none() && (on.logits != off.logits || on.class_id != off.class_id) {
                    soundness = Some(format!("seed {seed}, m={m}, n={n}: skipping changed the output"));
                }
                if soundness.is_none() && off.counters.skipped_ops != 0 {
                    soundness = Some(format!("seed {seed}: skipped ops with skipping disabled"));
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let all_kinds = kinds.len() == 5;
    let c1 = match equivalence {
        Some(e) => Err(e),
        None => check(
            all_kinds && elapsed < 120.0,
            format!(
                "{CASES} random (model, input) pairs x 5 widths x {PES:?} PEs x skip on/off = {runs} runs, \
                 logits/class/feature-maps exact, {} layer kinds, {elapsed:.1}s",
                kinds.len()
            ),
        ),
    };
    let c4 = match soundness {
        Some(e) => Err(e),
        None => check(
            skipped_total > 0,
            format!("skip on/off identical on all {runs} runs, nominal == effective + skipped everywhere, {skipped_total} ops skipped in total"),
        ),
    };
    (c1, c4)
}

fn pool_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 10_000;
    for t in 0..trials {
        let [ph, pw] = common::POOLS[t % common::POOLS.len()];
        let shape = Shape3::new(rng.gen_range(1..=4), ph * rng.gen_range(1..=4), pw * rng.gen_range(1..=4));
        let pre = IntTensor {
            shape,
            data: (0..shape.numel()).map(|_| rng.gen_range(-20i64..=20)).collect(),
        };
        let signs = sign_tensor(&pre);
        let lhs = maxpool_signs(&signs, (ph, pw));
        let rhs = ref_maxpool_before_sign(&pre, (ph, pw));
        if lhs != rhs {
            return Err(format!("trial {t}: MP(sign(Y)) != sign(MP(Y)) for pool {ph}x{pw}"));
        }
        // {0,1} encoding: the pool max is the or of the window bits
        let bits = signs.to_packed(WordWidth::W64);
        for c in 0..shape.channels {
            for oh in 0..shape.height / ph {
                for ow in 0..shape.width / pw {
                    let mut or = false;
                    let mut max = 0u8;
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let b = bits.get(c, oh * ph + dy, ow * pw + dx);
                            or |= b;
                            max = max.max(b as u8);
                        }
                    }
                    if (max == 1) != or || or != (lhs.get(c, oh, ow) == 1) {
                        return Err(format!("trial {t}: pool max differs from or"));
                    }
                }
            }
        }
    }
    Ok(format!("{trials} random integer tensors over pools 1x2, 2x2, 1x3: MP(sign(Y)) == sign(MP(Y)) and max == or"))
}

fn skip_statistics() -> Outcome {
    let arch = stress_dcnn();
    let runs = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut nominal, mut skipped) = (0u64, 0u64);
    let (mut fed_nominal, mut fed_skipped) = (0u64, 0u64);
    let (mut windows, mut first_plus) = (0u64, 0u64);
    let mut pooled_conv_layers = 0;
    for i in 0..runs {
        let net = generate_random(&arch, 1000 + i).unwrap();
        let input = common::balanced_input(net.input_shape, &mut rng);
        let hw = HardwareConfig::new(WordWidth::W64, 8, 1e8).unwrap();
        let r = run_inference(&net, &input, &hw, &RunOptions::default()).unwrap();
        nominal += r.counters.nominal_ops;
        skipped += r.counters.skipped_ops;
        pooled_conv_layers = 0;
        for t in r.layers.iter().filter(|t| t.pool_fed) {
            pooled_conv_layers += (t.kind == LayerKind::ConvBin) as usize;
            fed_nominal += t.counters.nominal_ops;
            fed_skipped += t.counters.skipped_ops;
            windows += t.pool_windows;
            first_plus += t.pool_first_plus;
        }
    }
    let share = fed_nominal as f64 / nominal as f64;
    let fed_fraction = fed_skipped as f64 / fed_nominal as f64;
    let total = skipped as f64 / nominal as f64;
    let p = first_plus as f64 / windows as f64;
    check(
        pooled_conv_layers >= 3 && share >= 0.70 && (fed_fraction - 0.25).abs() <= 0.03 && total >= 0.18 && windows >= 100_000,
        format!(
            "stress net, {runs} random nets/inputs, {windows} pools: pool-fed conv share {:.1}%, skip within pool-fed layers \
             {:.2}% (target 25% +/- 3%, measured first-element p(+1) = {p:.3}), total reduction {:.2}% (>= 18%)",
            100.0 * share,
            100.0 * fed_fraction,
            100.0 * total
        ),
    )
}

fn accounting() -> Outcome {
    let mlp = generate_random(&pamap2_mlp(), 0).unwrap();
    let c = count_params_and_ops(&mlp).unwrap();
    let stress = generate_random(&stress_dcnn(), 0).unwrap();
    let s = count_params_and_ops(&stress).unwrap();
    let size = packed_size_bytes(&stress);
    let mlp_ok = c.mac_ops == 2 * c.params && within(c.params as f64, 145e3, 0.03) && within(c.total_ops() as f64, 0.29e6, 0.03);
    let stress_ok = within(size.weight_bytes as f64, 13e3, 0.10) && within(s.total_ops() as f64, 7.32e6, 0.10);
    check(
        mlp_ok && stress_ok,
        format!(
            "mlp: {} params (145K +/- 3%), {} ops = 2 x params (0.29M +/- 3%), {} weight bytes; stress: {} packed weight bytes \
             ({} with headers and biases; 13KB +/- 10%), {} ops (7.32M +/- 10%)",
            c.params,
            c.total_ops(),
            packed_size_bytes(&mlp).weight_bytes,
            size.weight_bytes,
            size.total(),
            s.total_ops()
        ),
    )
}

fn scaling() -> Outcome {
    // per dot product instruction counts on mid layers, skipping off
    for seed in 0..200 {
        let (net, input) = common::random_case(seed);
        let per_element = |m: WordWidth| -> Vec<(u64, u64)> {
            let hw = HardwareConfig::new(m, 4, 1e8).unwrap();
            let r = run_inference(&net, &input, &hw, &opts(false)).unwrap();
            r.layers
                .iter()
                .filter(|t| matches!(t.kind, LayerKind::ConvBin | LayerKind::FcBin))
                .map(|t| (t.counters.xnor_pcnt_instructions, t.evaluated_outputs))
                .collect()
        };
        for m in &WordWidth::ALL[..4] {
            for ((k, e), (k2, e2)) in per_element(*m).into_iter().zip(per_element(m.doubled().unwrap())) {
                if e != e2 || k2 / e2 != (k / e).div_ceil(2) || k % e != 0 {
                    return Err(format!("seed {seed}, m={m}: {k}/{e} instructions became {k2}/{e2}"));
                }
            }
        }
    }
    let net = generate_random(&stress_dcnn(), 1).unwrap();
    let input = common::balanced_input(net.input_shape, &mut ChaCha8Rng::seed_from_u64(4));
    let c = run_inference(&net, &input, &HardwareConfig::new(WordWidth::W64, 8, 1e8).unwrap(), &RunOptions::default())
        .unwrap()
        .counters;
    let l1 = estimate_latency::<f64>(&c, &HardwareConfig::new(WordWidth::W64, 8, 1e8).unwrap());
    let l2 = estimate_latency::<f64>(&c, &HardwareConfig::new(WordWidth::W64, 8, 2e8).unwrap());
    if l1 != 2.0 * l2 {
        return Err(format!("latency {l1} at f, {l2} at 2f"));
    }
    let addsub = ArchSpec::new(
        Shape3::new(6, 1, 40),
        vec![ArchLayer::conv_first(32, [1, 5]), ArchLayer::fc_last16(5)],
    );
    let net = generate_random(&addsub, 2).unwrap();
    let input = common::balanced_input(net.input_shape, &mut ChaCha8Rng::seed_from_u64(5));
    let cycles: Vec<u64> = WordWidth::ALL
        .iter()
        .map(|&m| {
            run_inference(&net, &input, &HardwareConfig::new(m, 1, 1e8).unwrap(), &RunOptions::default())
                .unwrap()
                .counters
                .estimated_cycles
        })
        .collect();
    check(
        cycles.windows(2).all(|w| w[0] == w[1]),
        format!(
            "200 random nets: instructions per dot product at 2m == ceil(count at m / 2); latency halves when f doubles; \
             add/sub-only net takes {} cycles at every width",
            cycles[0]
        ),
    )
}

fn energy_model() -> Outcome {
    let sample = EnergyModelParams::<f64>::sample();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for t in 0..200 {
        let mut memory = vec![MemoryPoint {
            width: 32,
            read_pj: rng.gen_range(0.5..5.0),
            write_pj: rng.gen_range(0.5..5.0),
        }];
        for i in 0..4 {
            let prev: MemoryPoint<f64> = memory[i];
            memory.push(MemoryPoint {
                width: prev.width * 2,
                read_pj: prev.read_pj * rng.gen_range(1.01..1.99),
                write_pj: prev.write_pj * rng.gen_range(1.01..1.99),
            });
        }
        let params = EnergyModelParams {
            memory,
            ..sample.clone()
        };
        if params.validate().is_err() {
            return Err(format!("table {t} unexpectedly rejected"));
        }
        for p in [&params, &sample] {
            let e: Vec<f64> = (32..=512).map(|w| per_bit_energy(w, p).unwrap().read).collect();
            if !e.windows(2).all(|w| w[1] < w[0]) {
                return Err(format!("table {t}: per-bit energy not strictly decreasing"));
            }
        }
    }

    let flat = EnergyModelParams {
        compute_energy_per_op_pj: 0.03,
        leakage_power_mw: 0.0,
        static_overhead_per_pe_mw: 0.0,
        memory: WordWidth::ALL
            .iter()
            .map(|w| MemoryPoint {
                width: w.bits() as u32,
                read_pj: 0.1 * w.bits() as f64,
                write_pj: 0.15 * w.bits() as f64,
            })
            .collect(),
    };
    for seed in 0..100 {
        let (net, input) = common::random_case(seed);
        for m in WordWidth::ALL {
            let energies: Vec<f64> = [1, 2, 4, 8, 16, 64]
                .iter()
                .map(|&n| {
                    let hw = HardwareConfig::new(m, n, 1e8).unwrap();
                    let r = run_inference(&net, &input, &hw, &RunOptions::default()).unwrap();
                    estimate_energy(&r.counters, &hw, &flat).unwrap().total_energy
                })
                .collect();
            if energies.iter().any(|e| (e - energies[0]).abs() > 1e-12 * energies[0]) {
                return Err(format!("seed {seed}, m={m}: flat energy varies with n: {energies:?}"));
            }
        }
    }

    let ns = [1, 2, 4, 8, 16];
    let net = generate_random(&stress_dcnn(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let corpus: Vec<FixedTensor> = (0..4).map(|_| common::balanced_input(net.input_shape, &mut rng)).collect();
    let r = sweep(&net, &corpus, &WordWidth::ALL, &ns, 1e8, &sample, &RunOptions::default()).unwrap();
    for m in WordWidth::ALL {
        let curve: Vec<f64> = r.energy_vs_n(m).into_iter().map(|(_, e)| e).collect();
        let argmin = (0..curve.len()).min_by(|&a, &b| curve[a].total_cmp(&curve[b])).unwrap();
        let unimodal = curve[..=argmin].windows(2).all(|w| w[1] < w[0]) && curve[argmin..].windows(2).all(|w| w[1] > w[0]);
        if !unimodal || argmin == 0 || argmin == curve.len() - 1 {
            return Err(format!("m={m}: energy vs n {curve:?} is not unimodal with an interior minimum"));
        }
    }
    let mlp = generate_random(&pamap2_mlp(), 11).unwrap();
    let mlp_corpus: Vec<FixedTensor> = (0..4).map(|_| common::balanced_input(mlp.input_shape, &mut rng)).collect();
    let rm = sweep(&mlp, &mlp_corpus, &WordWidth::ALL, &ns, 1e8, &sample, &RunOptions::default()).unwrap();
    Ok(format!(
        "200 random valid tables and the sample file have strictly decreasing per-bit energy; flat per-bit energy with no \
         leakage is n-invariant on 100 nets x 5 widths; sample params: stress energy vs n unimodal with interior argmin at \
         every width, optimum (m={}, n={}), serial/optimal {:.2}x; mlp optimum (m={}, n={})",
        r.best().m,
        r.best().n_pes,
        r.serial_to_optimal_ratio,
        rm.best().m,
        rm.best().n_pes
    ))
}

fn round_trips() -> Outcome {
    for seed in 0..100 {
        let (net, _) = common::random_case(seed);
        let bytes = serialize(&net);
        let back = deserialize(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
        if back != net || serialize(&back) != bytes {
            return Err(format!("seed {seed}: model round trip differs"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(0..2000);
        let v: Vec<i8> = (0..len).map(|_| if rng.gen() { 1 } else { -1 }).collect();
        for m in WordWidth::ALL {
            let p = PackedBitVector::pack(&v, m).unwrap();
            if p.unpack() != v || PackedBitVector::from_le_bytes(&p.to_le_bytes(), len, m) != p {
                return Err(format!("seed {seed}, m={m}: pack/unpack differs"));
            }
        }
    }
    for arch in [pamap2_mlp(), stress_dcnn()] {
        for seed in 0..100 {
            let a = serialize(&generate_random(&arch, seed).unwrap());
            let b = serialize(&generate_random(&arch, seed).unwrap());
            if a != b {
                return Err(format!("seed {seed}: generation not byte-identical"));
            }
        }
    }
    Ok("100 seeds: model serialize/deserialize exact, pack/unpack exact at every width, same-seed generation byte-identical".into())
}

fn main() -> ExitCode {
    let (c1, c4) = oracle_and_soundness();
    let results = [
        ("oracle equivalence", c1),
        ("max-pool / sign identity", pool_identity()),
        ("pool-skipping statistics", skip_statistics()),
        ("pool-skipping soundness", c4),
        ("model accounting", accounting()),
        ("throughput scaling", scaling()),
        ("energy model", energy_model()),
        ("round trips", round_trips()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS - {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL - {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
