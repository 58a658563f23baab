//! Command-line front end: run a configured sweep and report where the
//! CSVs landed.
//!
//! ```text
//! armac-sim run --config sweep.json --out results --trace
//! ```
//!
//! Exit codes: 0 on success, 1 for configuration or I/O problems, 2 when
//! the sweep ran but one or more cells aborted (their reasons go to
//! stderr and `aborted.txt`; the CSVs hold the cells that finished).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use armac_sim::config::{ProtocolChoice, ScalarOrVec, SimConfig};
use armac_sim::sweep::{run_sweep, SweepOptions};

/// Status lines must never turn a finished sweep into a panic: when the
/// consumer closes the pipe early (`armac-sim run ... | head`) the write
/// fails with a broken pipe, and the right response is silence, not an
/// abort — the CSVs are already on disk and the exit code still stands.
macro_rules! status {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Same tolerance for diagnostics on stderr.
macro_rules! note {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stderr(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "armac-sim",
    version,
    about = "Deterministic energy/traffic simulator for a reservation MAC and its CSMA baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (protocol, error rate, seed) cell of a configured sweep.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON sweep configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory for runs.csv / summary.csv (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Write a per-cell event trace next to the CSVs.
    #[arg(long)]
    trace: bool,

    /// Run only this protocol, overriding the configuration.
    #[arg(long, value_parser = ["armac", "csma", "both"])]
    protocol: Option<String>,

    /// Run only these seeds (comma-separated), overriding the
    /// configuration.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Worker threads (0 = ARMAC_SIM_THREADS or machine parallelism).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn run(args: &RunArgs) -> ExitCode {
    let mut cfg = match SimConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            note!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(protocol) = &args.protocol {
        cfg.protocol = match protocol.as_str() {
            "armac" => ProtocolChoice::Armac,
            "csma" => ProtocolChoice::Csma,
            _ => ProtocolChoice::Both,
        };
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = ScalarOrVec(seeds.clone());
    }
    if let Err(e) = cfg.validate() {
        note!("error: {e}");
        return ExitCode::from(1);
    }
    let opts = SweepOptions {
        out_dir: args.out.clone(),
        threads: args.threads,
        trace: args.trace,
    };
    let summary = match run_sweep(&cfg, &opts) {
        Ok(summary) => summary,
        Err(e) => {
            note!("error: {e}");
            return ExitCode::from(1);
        }
    };
    status!(
        "ran {} cells ({} nodes, {} measured frames each)",
        summary.cells_run, cfg.n_nodes, cfg.n_cycles
    );
    status!("runs:    {}", summary.runs_csv.display());
    status!("summary: {}", summary.summary_csv.display());
    if !summary.aborted.is_empty() {
        for line in &summary.aborted {
            note!("aborted: {line}");
        }
        note!(
            "{} of {} cells aborted; see aborted.txt",
            summary.aborted.len(),
            summary.cells_run
        );
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => run(args),
    }
}
