mod commands;
mod error;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use bnnsim::bitpack::WordWidth;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bnnsim", version, about = "Bit-packed BNN inference engine and accelerator cost simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random-weight model from a TOML architecture.
    Gen(GenArgs),
    /// Classify one input frame on the simulated accelerator.
    Infer(InferArgs),
    /// Check the engine against the reference oracle on random inputs.
    Compare(CompareArgs),
    /// Sweep word width and PE count and report energy.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Architecture file.
    pub arch: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model file.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn enabled(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Args)]
pub struct InferArgs {
    pub model: PathBuf,
    /// CSV with one row per sample and one column per channel.
    pub input: PathBuf,
    /// Which frame of the CSV to classify, counting from 0.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Memory word width in bits.
    #[arg(long, default_value = "64")]
    pub m: WordWidth,
    #[arg(long, default_value_t = 1)]
    pub pes: usize,
    /// Clock frequency in Hz.
    #[arg(long, default_value_t = 100e6)]
    pub freq: f64,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub pool_skip: OnOff,
    /// Energy parameter file; the built-in synthetic sample if omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// JSON report path. Defaults to $BNNSIM_REPORT_DIR/infer.json when that is set.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-layer counter CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    pub model: PathBuf,
    /// Number of random inputs.
    #[arg(short, long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where a failing input and its configuration are written.
    /// Defaults to $BNNSIM_REPORT_DIR, else the current directory.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_tail_mask_bug: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    pub model: PathBuf,
    /// Directory of input CSV files; every whole frame is used.
    #[arg(long, conflicts_with = "random")]
    pub corpus: Option<PathBuf>,
    /// Use this many balanced random inputs instead of a corpus.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512")]
    pub m_set: Vec<WordWidth>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub n_set: Vec<usize>,
    #[arg(long, default_value_t = 100e6)]
    pub freq: f64,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub pool_skip: OnOff,
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Output directory for sweep.csv, sweep.json and skip_table.csv.
    /// Defaults to $BNNSIM_REPORT_DIR, else the current directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
