use std::path::{Path, PathBuf};

use bnnsim::bitpack::WordWidth;
use bnnsim::costmodel::{estimate_run_energy, sweep as run_sweep, EnergyModelParams, EnergyReport, LayerSkipStat, SweepError};
use bnnsim::differential::first_mismatch;
use bnnsim::engine::{run_inference, EngineError, ExecutionCounters, Fault, HardwareConfig, LayerTrace, RunOptions};
use bnnsim::model::{
    count_params_and_ops, deserialize, generate_random, packed_size_bytes, serialize, validate, ArchSpec, Fixed16,
    FixedTensor, LayerKind, NetworkSpec,
};
use bnnsim::reference::ref_infer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::input::{frame, frame_count, read_rows, write_frame};
use crate::report::{output_dir, report_path, write_json, RunManifest};
use crate::{CompareArgs, GenArgs, InferArgs, SweepArgs};

const COMPARE_PES: [usize; 3] = [1, 4, 8];

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn load_model(path: &Path) -> CliResult<NetworkSpec> {
    let net = deserialize(&read(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    validate(&net).map_err(|diags| {
        CliError::Validation(diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    Ok(net)
}

fn load_params(path: &Option<PathBuf>) -> CliResult<EnergyModelParams<f64>> {
    match path {
        None => Ok(EnergyModelParams::sample()),
        Some(p) => EnergyModelParams::load(p).map_err(|e| match e {
            bnnsim::costmodel::CostError::Io { .. } => CliError::io(p, e),
            bnnsim::costmodel::CostError::Invalid(_) => CliError::Validation(format!("{}: {e}", p.display())),
            _ => CliError::Parse(format!("{}: {e}", p.display())),
        }),
    }
}

fn params_label(path: &Option<PathBuf>) -> String {
    path.as_ref()
        .map_or_else(|| "built-in synthetic sample".to_string(), |p| p.display().to_string())
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::InvalidNetwork(d) => {
            CliError::Validation(d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
        }
        other => CliError::Contract(other.to_string()),
    }
}

fn hardware(m: WordWidth, pes: usize, freq: f64) -> CliResult<HardwareConfig> {
    HardwareConfig::new(m, pes, freq).map_err(engine_error)
}

pub fn gen(a: &GenArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.arch).map_err(|e| CliError::io(&a.arch, e))?;
    let arch = ArchSpec::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", a.arch.display())))?;
    let net = generate_random(&arch, a.seed).map_err(|e| CliError::Validation(format!("{}: {e}", a.arch.display())))?;
    let bytes = serialize(&net);
    std::fs::write(&a.out, &bytes).map_err(|e| CliError::io(&a.out, e))?;
    let ops = count_params_and_ops(&net).expect("validated network");
    let size = packed_size_bytes(&net);
    println!(
        "params: {} ({} binary, {} 16-bit)",
        ops.params, ops.binary_params, ops.fixed_params
    );
    println!("packed size: {} weight bytes, {} bytes on disk", size.weight_bytes, bytes.len());
    println!(
        "nominal ops: {} ({:.3}M; {} multiply-accumulate, {} pool compares)",
        ops.total_ops(),
        ops.total_ops() as f64 / 1e6,
        ops.mac_ops,
        ops.pool_compare_ops
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct InferReport {
    manifest: RunManifest,
    class_id: usize,
    logits: Vec<i32>,
    counters: ExecutionCounters,
    latency_s: f64,
    energy_params: String,
    energy: EnergyReport<f64>,
    layers: Vec<LayerTrace>,
}

pub fn infer(a: &InferArgs) -> CliResult<()> {
    let net = load_model(&a.model)?;
    let hw = hardware(a.m, a.pes, a.freq)?;
    let rows = read_rows(&a.input)?;
    let x = frame(&rows, net.input_shape, a.frame, &a.input)?;
    let params = load_params(&a.params)?;
    let opts = RunOptions {
        pool_skipping: a.pool_skip.enabled(),
        ..Default::default()
    };
    let r = run_inference(&net, &x, &hw, &opts).map_err(engine_error)?;
    let energy = estimate_run_energy(&r, &hw, &params).map_err(|e| CliError::Contract(e.to_string()))?;
    let latency = r.latency(&hw);

    println!("class: {}", r.class_id);
    println!(
        "ops: {} nominal, {} effective, {} skipped; {} cycles, {:.6} ms; {:.4} uJ",
        r.counters.nominal_ops,
        r.counters.effective_ops,
        r.counters.skipped_ops,
        r.counters.estimated_cycles,
        latency * 1e3,
        energy.total_energy
    );

    let report = report_path(&a.report, "infer.json");
    let mut manifest = RunManifest::new("infer", &a.model);
    manifest.inputs = vec![format!("{}#frame{}", a.input.display(), a.frame)];
    manifest.hardware = json!(hw);
    manifest.options = json!({ "pool_skipping": opts.pool_skipping, "energy_params": params_label(&a.params) });
    manifest.outputs = report.iter().chain(&a.trace).map(|p| p.display().to_string()).collect();

    if let Some(path) = &a.trace {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        bnnsim::engine::write_trace_csv(&r.layers, file).map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = report {
        write_json(
            &path,
            &InferReport {
                manifest,
                class_id: r.class_id,
                logits: r.logits,
                counters: r.counters,
                latency_s: latency,
                energy_params: params_label(&a.params),
                energy,
                layers: r.layers,
            },
        )?;
        println!("report: {}", path.display());
    }
    Ok(())
}

fn random_input(net: &NetworkSpec, rng: &mut ChaCha8Rng) -> FixedTensor {
    let shape = net.input_shape;
    FixedTensor::new(shape, (0..shape.numel()).map(|_| Fixed16::from_raw(rng.gen())).collect())
}

pub fn compare(a: &CompareArgs) -> CliResult<()> {
    let net = load_model(&a.model)?;
    let mut manifest = RunManifest::new("compare", &a.model);
    manifest.seed = Some(a.seed);
    manifest.hardware = json!({ "m": WordWidth::ALL, "pes": COMPARE_PES });
    manifest.options = json!({ "inputs": a.n, "pool_skipping": [true, false] });
    if a.n == 0 {
        eprintln!("warning: no inputs requested, nothing was compared");
    }
    let fault = a.inject_tail_mask_bug.then_some(Fault::UnmaskedTail);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut runs = 0u64;
    for i in 0..a.n {
        let x = random_input(&net, &mut rng);
        let oracle = ref_infer::<i64>(&net, &x).map_err(|e| CliError::Contract(e.to_string()))?;
        for m in WordWidth::ALL {
            for pes in COMPARE_PES {
                for skip in [true, false] {
                    let hw = hardware(m, pes, 1e8)?;
                    let opts = RunOptions {
                        pool_skipping: skip,
                        record_intermediates: true,
                        fault,
                        ..Default::default()
                    };
                    let r = run_inference(&net, &x, &hw, &opts).map_err(engine_error)?;
                    runs += 1;
                    if let Some(mm) = first_mismatch(&r, &oracle) {
                        let dir = output_dir(&a.dump_dir);
                        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                        let input_path = dir.join("compare-mismatch-input.csv");
                        let json_path = dir.join("compare-mismatch.json");
                        write_frame(&x, &input_path)?;
                        manifest.outputs = vec![input_path.display().to_string(), json_path.display().to_string()];
                        write_json(
                            &json_path,
                            &json!({
                                "manifest": manifest,
                                "input_index": i,
                                "input_csv": input_path.display().to_string(),
                                "m": m,
                                "pes": pes,
                                "pool_skipping": skip,
                                "mismatch": mm.to_string(),
                                "engine_logits": r.logits,
                                "oracle_logits": oracle.logits,
                            }),
                        )?;
                        return Err(CliError::Mismatch(format!(
                            "input {i} at m={m}, pes={pes}, pool-skip={}: {mm}; reproducer in {}",
                            if skip { "on" } else { "off" },
                            json_path.display()
                        )));
                    }
                }
            }
        }
    }
    println!(
        "pass: {} inputs x {} widths x {} PE counts x 2 skip settings = {runs} runs bit-identical to the oracle",
        a.n,
        WordWidth::ALL.len(),
        COMPARE_PES.len()
    );
    if let Some(path) = report_path(&a.report, "compare.json") {
        manifest.outputs = vec![path.display().to_string()];
        write_json(&path, &json!({ "manifest": manifest, "runs": runs, "result": "pass" }))?;
    }
    Ok(())
}

fn load_corpus(a: &SweepArgs, net: &NetworkSpec) -> CliResult<(Vec<FixedTensor>, Vec<String>)> {
    if let Some(dir) = &a.corpus {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let mut corpus = Vec::new();
        for f in &files {
            let rows = read_rows(f)?;
            for i in 0..frame_count(&rows, net.input_shape) {
                corpus.push(frame(&rows, net.input_shape, i, f)?);
            }
        }
        return Ok((corpus, files.iter().map(|f| f.display().to_string()).collect()));
    }
    let n = a.random.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let shape = net.input_shape;
    let corpus = (0..n)
        .map(|_| {
            FixedTensor::new(
                shape,
                (0..shape.numel()).map(|_| Fixed16::from_raw(rng.gen_range(-1024..=1024))).collect(),
            )
        })
        .collect();
    Ok((corpus, vec![format!("{n} balanced random inputs")]))
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    manifest: RunManifest,
    energy_params: String,
    argmin: serde_json::Value,
    serial_to_optimal_ratio: f64,
    points: serde_json::Value,
    skip_table: &'a [LayerSkipStat],
}

pub fn sweep(a: &SweepArgs) -> CliResult<()> {
    let net = load_model(&a.model)?;
    let params = load_params(&a.params)?;
    let (corpus, inputs) = load_corpus(a, &net)?;
    if corpus.is_empty() {
        return Err(CliError::Contract(
            "empty corpus: give --corpus DIR with at least one whole frame, or --random N with N > 0".into(),
        ));
    }
    let opts = RunOptions {
        pool_skipping: a.pool_skip.enabled(),
        ..Default::default()
    };
    let r = run_sweep(&net, &corpus, &a.m_set, &a.n_set, a.freq, &params, &opts).map_err(|e| match e {
        SweepError::Engine { source, .. } => engine_error(source),
        other => CliError::Contract(other.to_string()),
    })?;

    let dir = output_dir(&a.out);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let (csv_path, json_path, skip_path) = (dir.join("sweep.csv"), dir.join("sweep.json"), dir.join("skip_table.csv"));
    let file = std::fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    r.write_csv(file).map_err(|e| CliError::io(&csv_path, e))?;
    let mut w = csv::Writer::from_path(&skip_path).map_err(|e| CliError::io(&skip_path, e))?;
    for s in &r.skip_stats {
        w.serialize(s).map_err(|e| CliError::io(&skip_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&skip_path, e))?;

    let best = r.best();
    let mut manifest = RunManifest::new("sweep", &a.model);
    manifest.inputs = inputs;
    manifest.seed = a.corpus.is_none().then_some(a.seed);
    manifest.hardware = json!({ "m_set": a.m_set, "n_set": a.n_set, "clock_hz": a.freq });
    manifest.options = json!({ "pool_skipping": opts.pool_skipping, "corpus_size": corpus.len() });
    manifest.outputs = [&csv_path, &json_path, &skip_path].iter().map(|p| p.display().to_string()).collect();
    let points: Vec<serde_json::Value> = r
        .points
        .iter()
        .map(|p| {
            json!({
                "m": p.m, "n_pes": p.n_pes,
                "total_energy_uj": p.report.total_energy,
                "memory_energy_uj": p.report.memory_energy,
                "compute_energy_uj": p.report.compute_energy,
                "leakage_energy_uj": p.report.leakage_energy,
                "latency_s": p.report.latency,
            })
        })
        .collect();
    write_json(
        &json_path,
        &SweepSummary {
            manifest,
            energy_params: params_label(&a.params),
            argmin: json!({
                "m": best.m, "n_pes": best.n_pes,
                "total_energy_uj": best.report.total_energy,
                "latency_s": best.report.latency,
            }),
            serial_to_optimal_ratio: r.serial_to_optimal_ratio,
            points: json!(points),
            skip_table: &r.skip_stats,
        },
    )?;

    println!(
        "optimum: m={} n={} at {:.4} uJ, {:.3}x less than serial",
        best.m, best.n_pes, best.report.total_energy, r.serial_to_optimal_ratio
    );
    println!("{:>5}  {:<10} {:>12} {:>9} {:>9}", "layer", "kind", "nominal_ops", "skipped", "p(+1)");
    for s in &r.skip_stats {
        let p = match s.kind {
            LayerKind::MaxPool => "-".to_string(),
            _ if s.pool_fed => format!("{:.3}", s.first_plus_rate),
            _ => format!("{:.3}", s.plus_rate),
        };
        println!(
            "{:>5}  {:<10} {:>12} {:>8.2}% {:>9}",
            s.layer,
            s.kind.to_string(),
            s.nominal_ops,
            100.0 * s.skipped_fraction,
            p
        );
    }
    println!("wrote {}, {}, {}", csv_path.display(), json_path.display(), skip_path.display());
    Ok(())
}
