//! Sweep executor: every (protocol, error rate, seed) cell, in
//! parallel, into CSV.
//!
//! Cells are fully independent simulations, so they are dealt out to a
//! scoped thread pool from a shared counter and written back into a
//! slot per cell; the output order is the enumeration order no matter
//! which thread finished first, and a sweep is byte-reproducible for a
//! given configuration. Thread count comes from `SweepOptions::threads`,
//! falling back to the `ARMAC_SIM_THREADS` environment variable, then
//! to the machine's parallelism.
//!
//! Outputs land in the chosen directory:
//! - `runs.csv` — one row per node per completed cell, energy split by
//!   term plus traffic counters.
//! - `summary.csv` — mean/stddev of total and per-node energy, grouped
//!   by error rate and protocol.
//! - `aborted.txt` — one line per cell that could not finish (only
//!   written when something aborted).
//! - `trace_<protocol>_per<rate>_seed<seed>.txt` — per-cell event
//!   traces, when tracing is on.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::config::SimConfig;
use crate::report::{self, CellResult, Protocol};
use crate::{armac, baseline};

/// How a sweep should run.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Where the CSVs (and traces) go; created if missing.
    pub out_dir: PathBuf,
    /// Worker threads; 0 picks `ARMAC_SIM_THREADS` or the machine's
    /// parallelism.
    pub threads: usize,
    /// Write a per-cell event trace next to the CSVs.
    pub trace: bool,
}

/// What a finished sweep produced.
#[derive(Debug)]
pub struct SweepSummary {
    pub cells_run: usize,
    /// One `protocol per seed: reason` line per aborted cell.
    pub aborted: Vec<String>,
    pub runs_csv: PathBuf,
    pub summary_csv: PathBuf,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<(), SweepError> {
    let mut file = std::fs::File::create(path).map_err(|source| SweepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(contents.as_bytes())
        .map_err(|source| SweepError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn worker_count(requested: usize, cells: usize) -> usize {
    let fallback = || {
        std::env::var("ARMAC_SIM_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            })
    };
    let n = if requested > 0 { requested } else { fallback() };
    n.max(1).min(cells.max(1))
}

/// One cell's computed outputs: the result row plus its trace.
struct CellOutput {
    cell: CellResult,
    trace: Vec<String>,
}

fn run_cell(cfg: &SimConfig, protocol: Protocol, per: f64, seed: u64, trace: bool) -> CellOutput {
    match protocol {
        Protocol::Armac => {
            let out = armac::run(&cfg.armac_cell(per, seed, trace));
            CellOutput {
                cell: out.cell,
                trace: out.trace,
            }
        }
        Protocol::Csma => {
            let out = baseline::run(&cfg.csma_cell(per, seed, trace));
            CellOutput {
                cell: out.cell,
                trace: out.trace,
            }
        }
    }
}

/// Run every cell of the sweep and write the outputs.
///
/// Aborted cells still appear in the returned summary (and in
/// `aborted.txt`), but never in the CSVs — a partially joined network
/// has no honest energy figure.
pub fn run_sweep(cfg: &SimConfig, opts: &SweepOptions) -> Result<SweepSummary, SweepError> {
    std::fs::create_dir_all(&opts.out_dir).map_err(|source| SweepError::Io {
        path: opts.out_dir.display().to_string(),
        source,
    })?;
    let cells = cfg.cells();
    let n_workers = worker_count(opts.threads, cells.len());
    let results: Mutex<Vec<Option<CellOutput>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= cells.len() {
                    break;
                }
                let (protocol, per, seed) = cells[idx];
                let output = run_cell(cfg, protocol, per, seed, opts.trace);
                results.lock().expect("no panicked worker")[idx] = Some(output);
            });
        }
    });

    let outputs: Vec<CellOutput> = results
        .into_inner()
        .expect("no panicked worker")
        .into_iter()
        .map(|slot| slot.expect("every cell was dealt out"))
        .collect();

    let mut aborted = Vec::new();
    for ((protocol, per, seed), output) in cells.iter().zip(&outputs) {
        if let Some(reason) = &output.cell.aborted {
            aborted.push(format!("{} per={} seed={}: {}", protocol.label(), per, seed, reason));
        }
        if opts.trace {
            let name = format!("trace_{}_per{}_seed{}.txt", protocol.label(), per, seed);
            let mut text = output.trace.join("\n");
            if !text.is_empty() {
                text.push('\n');
            }
            write_file(&opts.out_dir.join(name), &text)?;
        }
    }

    let mut rows: Vec<CellResult> = outputs.into_iter().map(|o| o.cell).collect();
    report::sort_cells(&mut rows);
    let runs_csv = opts.out_dir.join("runs.csv");
    write_file(&runs_csv, &report::render_runs_csv(&rows))?;
    let summary_csv = opts.out_dir.join("summary.csv");
    write_file(&summary_csv, &report::render_summary_csv(&rows))?;
    if !aborted.is_empty() {
        let mut text = aborted.join("\n");
        text.push('\n');
        write_file(&opts.out_dir.join("aborted.txt"), &text)?;
    }

    Ok(SweepSummary {
        cells_run: cells.len(),
        aborted,
        runs_csv,
        summary_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(json: &str) -> SimConfig {
        SimConfig::from_json_str(json).unwrap()
    }

    #[test]
    fn a_small_sweep_writes_both_csvs_in_cell_order() {
        let cfg = small_config(
            r#"{
                "protocol": "both",
                "n_nodes": 2,
                "n_cycles": 5,
                "per_percent": [0, 10],
                "seeds": [1, 2]
            }"#,
        );
        let dir = tempfile::tempdir().unwrap();
        let opts = SweepOptions {
            out_dir: dir.path().to_path_buf(),
            threads: 3,
            trace: false,
        };
        let summary = run_sweep(&cfg, &opts).unwrap();
        assert_eq!(summary.cells_run, 8);
        assert!(summary.aborted.is_empty());

        let runs = std::fs::read_to_string(summary.runs_csv).unwrap();
        let lines: Vec<&str> = runs.lines().collect();
        assert_eq!(lines.len(), 1 + 8 * 2, "header plus 2 nodes × 8 cells");
        assert!(lines[0].starts_with("protocol,per_percent,seed,node,"));
        assert!(lines[1].starts_with("armac,0,1,0,"));
        assert!(lines.last().unwrap().starts_with("csma,10,2,1,"));

        let summary_text = std::fs::read_to_string(summary.summary_csv).unwrap();
        let summary_lines: Vec<&str> = summary_text.lines().collect();
        assert_eq!(summary_lines.len(), 1 + 4, "2 rates × 2 protocols");
        assert!(summary_lines[1].starts_with("0,armac,"));
        assert!(!dir.path().join("aborted.txt").exists());
    }

    #[test]
    fn sweeps_are_reproducible_across_thread_counts() {
        let cfg = small_config(
            r#"{"n_nodes": 3, "n_cycles": 10, "per_percent": [5, 15], "seeds": [1, 2, 3]}"#,
        );
        let mut outputs = Vec::new();
        for threads in [1, 4] {
            let dir = tempfile::tempdir().unwrap();
            let opts = SweepOptions {
                out_dir: dir.path().to_path_buf(),
                threads,
                trace: false,
            };
            let summary = run_sweep(&cfg, &opts).unwrap();
            outputs.push(std::fs::read_to_string(summary.runs_csv).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "thread count must not change results");
    }

    #[test]
    fn aborted_cells_are_reported_and_kept_out_of_the_csvs() {
        // A dead channel: the network can never join, every cell aborts.
        let cfg = small_config(
            r#"{
                "protocol": "armac",
                "n_nodes": 2,
                "n_cycles": 5,
                "per_percent": 100,
                "seeds": 1,
                "max_join_frames": 3
            }"#,
        );
        let dir = tempfile::tempdir().unwrap();
        let opts = SweepOptions {
            out_dir: dir.path().to_path_buf(),
            threads: 1,
            trace: false,
        };
        let summary = run_sweep(&cfg, &opts).unwrap();
        assert_eq!(summary.aborted.len(), 1);
        assert!(summary.aborted[0].contains("armac per=100 seed=1"));
        let runs = std::fs::read_to_string(summary.runs_csv).unwrap();
        assert_eq!(runs.lines().count(), 1, "only the header remains");
        let aborted = std::fs::read_to_string(dir.path().join("aborted.txt")).unwrap();
        assert!(aborted.contains("join incomplete"));
    }

    #[test]
    fn tracing_writes_one_file_per_cell() {
        let cfg = small_config(
            r#"{"n_nodes": 2, "n_cycles": 4, "per_percent": 0, "seeds": 7, "skew_ppm": 200}"#,
        );
        let dir = tempfile::tempdir().unwrap();
        let opts = SweepOptions {
            out_dir: dir.path().to_path_buf(),
            threads: 2,
            trace: true,
        };
        run_sweep(&cfg, &opts).unwrap();
        let armac_trace = dir.path().join("trace_armac_per0_seed7.txt");
        let csma_trace = dir.path().join("trace_csma_per0_seed7.txt");
        assert!(armac_trace.exists());
        assert!(csma_trace.exists());
        let text = std::fs::read_to_string(armac_trace).unwrap();
        assert!(text.contains("arm"), "the trace should mark the window: {text}");
    }
}
