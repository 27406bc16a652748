//! Command-line front end: `simulate`, `verify` and `sweep`.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{DeltaSpec, RunConfig};
use crate::ensemble::{doob_audit, run_ensemble, ConcentrationReport, DoobReport, EnsembleResult, StatsRow};
use crate::error::Error;
use crate::lyapunov::LyapunovParams;
use crate::verify::{run_suite, SuiteOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_LEAKAGE: i32 = 3;

pub const WORKERS_ENV: &str = "FOCKSTAB_WORKERS";

pub const STATS_COLUMNS: [&str; 7] = [
    "step",
    "mean_V",
    "se_V",
    "mean_fidelity",
    "conv_fraction",
    "fock_fraction",
    "mean_leakage",
];

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "traj_id",
    "step",
    "outcome",
    "p_g",
    "alpha",
    "v_before",
    "v_half",
    "v_after",
    "fidelity",
    "leakage",
];

pub const SWEEP_COLUMNS: [&str; 16] = [
    "cell",
    "delta",
    "alpha_bar",
    "n_max",
    "steps",
    "status",
    "step",
    "mean_V",
    "se_V",
    "mean_fidelity",
    "conv_fraction",
    "fock_fraction",
    "mean_leakage",
    "initial_target_population",
    "target_mass",
    "note",
];

#[derive(Parser, Debug)]
#[command(name = "fockstab", version, about = "Feedback stabilization of photon-number states")]
pub struct Cli {
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Falls back to FOCKSTAB_WORKERS.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the trajectory ensemble and write statistics.
    Simulate { config: PathBuf },
    /// Run the deterministic identity checks.
    Verify {
        config: PathBuf,
        /// Adds 1e-9 to the weight of this level before checking.
        #[arg(long, hide = true)]
        tamper_sigma: Option<usize>,
    },
    /// Run a grid of configurations and write one summary row per cell.
    Sweep { spec: PathBuf },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    let result = worker_count(cli).and_then(|workers| match &cli.command {
        Command::Simulate { config } => cmd_simulate(cli, config, workers),
        Command::Verify { config, tamper_sigma } => cmd_verify(cli, config, *tamper_sigma),
        Command::Sweep { spec } => cmd_sweep(cli, spec, workers),
    });
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

/// The `--workers` flag, else the environment variable, else 0.
fn worker_count(cli: &Cli) -> Result<usize, Failure> {
    if let Some(w) = cli.workers {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Failure {
            code: EXIT_INVALID,
            message: format!("{WORKERS_ENV} must be a nonnegative integer (got '{v}')"),
        }),
        Err(_) => Ok(0),
    }
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::LeakageBudget { .. } | Error::EnsembleAborted { .. } => EXIT_LEAKAGE,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: format!("{}: {e}", path.display()),
    }
}

/// Fixed 17-significant-digit rendering.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn stats_record(row: &StatsRow) -> [String; 7] {
    [
        row.step.to_string(),
        fmt_float(row.mean_v),
        fmt_float(row.se_v),
        fmt_float(row.mean_fidelity),
        fmt_float(row.conv_fraction),
        fmt_float(row.fock_fraction),
        fmt_float(row.mean_leakage),
    ]
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| io_failure(path, e))
}

pub fn write_stats_csv(path: &Path, rows: &[StatsRow]) -> std::result::Result<(), String> {
    write_stats(path, rows).map_err(|f| f.message)
}

fn write_stats(path: &Path, rows: &[StatsRow]) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    w.write_record(STATS_COLUMNS).map_err(|e| io_failure(path, e))?;
    for row in rows {
        w.write_record(stats_record(row)).map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn write_trajectories(path: &Path, result: &EnsembleResult) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    w.write_record(TRAJECTORY_COLUMNS).map_err(|e| io_failure(path, e))?;
    for t in &result.trajectories {
        for r in &t.records {
            w.write_record([
                t.index.to_string(),
                r.step_index.to_string(),
                r.outcome.label().to_string(),
                fmt_float(r.p_g),
                fmt_float(r.alpha),
                fmt_float(r.v_before),
                fmt_float(r.v_half),
                fmt_float(r.v_after),
                fmt_float(r.fidelity),
                fmt_float(r.leakage),
            ])
            .map_err(|e| io_failure(path, e))?;
        }
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| io_failure(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_failure(path, e))
}

fn load_config(cli: &Cli, path: &Path) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub delta: f64,
    pub initial_value: f64,
    pub initial_target_population: f64,
    pub final_stats: StatsRow,
    pub aborted: usize,
    pub concentration: ConcentrationReport,
    pub doob: DoobReport,
}

/// Ratio `gamma / V(x)` used by the summary's maximal-inequality audit.
pub const DOOB_GAMMA_RATIO: f64 = 10.0;

/// Runs one configuration end to end.
pub fn run_config(cfg: &RunConfig, workers: usize) -> crate::error::Result<(EnsembleResult, RunSummary)> {
    let resolved = cfg.resolve()?;
    let sys = &resolved.system;
    let result = run_ensemble(
        &resolved.ensemble,
        sys,
        &resolved.initial,
        workers,
        cfg.trajectory_file.is_some(),
    )?;
    let initial_value = sys.value(&resolved.initial);
    let summary = RunSummary {
        delta: sys.lyapunov.delta,
        initial_value,
        initial_target_population: resolved.initial.population(sys.model.n_bar),
        final_stats: result.stats.final_row().clone(),
        aborted: result.stats.aborted,
        concentration: result.concentration(),
        doob: doob_audit(&result, initial_value, DOOB_GAMMA_RATIO * initial_value),
    };
    Ok((result, summary))
}

fn cmd_simulate(cli: &Cli, path: &Path, workers: usize) -> Result<i32, Failure> {
    let cfg = load_config(cli, path)?;
    let (result, summary) = run_config(&cfg, workers)?;
    write_stats(&cli.out_dir.join(&cfg.stats_file), &result.stats.rows)?;
    if let Some(name) = &cfg.trajectory_file {
        write_trajectories(&cli.out_dir.join(name), &result)?;
    }
    write_text(&cli.out_dir.join("effective_config.json"), &cfg.to_json())?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&cli.out_dir.join("summary.json"), &json)?;

    let f = &summary.final_stats;
    println!(
        "steps {}  trajectories {}  aborted {}",
        cfg.steps, cfg.trajectories, summary.aborted
    );
    println!(
        "final mean V {:.6e} (se {:.2e})  fidelity {:.4}  converged {:.3}  fock {:.3}",
        f.mean_v, f.se_v, f.mean_fidelity, f.conv_fraction, f.fock_fraction
    );
    println!(
        "target mass {:.3}  doob {}/{} >= {:.3e} (bound {:.3})",
        summary.concentration.target_mass,
        summary.doob.exceedances,
        summary.doob.trajectories,
        summary.doob.gamma,
        summary.doob.bound
    );
    Ok(EXIT_OK)
}

fn cmd_verify(cli: &Cli, path: &Path, tamper_sigma: Option<usize>) -> Result<i32, Failure> {
    let cfg = load_config(cli, path)?;
    let mut sys = cfg.resolve()?.system;
    if let Some(n) = tamper_sigma {
        let mut sigma = sys.lyapunov.sigma.clone();
        let slot = sigma.get_mut(n).ok_or_else(|| Failure {
            code: EXIT_INVALID,
            message: format!("no weight for level {n}"),
        })?;
        *slot += 1e-9;
        sys.lyapunov = LyapunovParams::from_parts(&sys.model, sys.lyapunov.delta, sigma);
    }
    let opts = SuiteOptions {
        seed: cfg.master_seed,
        ..SuiteOptions::default()
    };
    let report = run_suite(&sys, &opts)?;
    println!("{report}");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&cli.out_dir.join("verify_report.json"), &json)?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub const DEFAULT_MAX_CELLS: usize = 64;

/// Grid description for `sweep`. Missing axes take the base value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "empty_object")]
    pub base: serde_json::Value,
    #[serde(default)]
    pub delta: Vec<DeltaSpec>,
    #[serde(default)]
    pub alpha_bar: Vec<f64>,
    #[serde(default)]
    pub n_max: Vec<usize>,
    #[serde(default)]
    pub steps: Vec<usize>,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
    #[serde(default = "default_sweep_file")]
    pub output_file: String,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

fn default_max_cells() -> usize {
    DEFAULT_MAX_CELLS
}

fn default_sweep_file() -> String {
    "sweep.csv".into()
}

impl SweepSpec {
    /// Cell configurations in lexicographic order over
    /// `(delta, alpha_bar, n_max, steps)`.
    pub fn cells(&self, base: &RunConfig) -> Vec<RunConfig> {
        fn axis<T: Clone>(values: &[T], default: T) -> Vec<T> {
            if values.is_empty() {
                vec![default]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for delta in axis(&self.delta, base.delta) {
            for alpha_bar in axis(&self.alpha_bar, base.alpha_bar) {
                for n_max in axis(&self.n_max, base.n_max) {
                    for steps in axis(&self.steps, base.steps) {
                        let mut cfg = base.clone();
                        cfg.delta = delta;
                        cfg.alpha_bar = alpha_bar;
                        cfg.refine_tol = Some(alpha_bar * 1e-6);
                        cfg.n_max = n_max;
                        cfg.steps = steps;
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        [self.delta.len(), self.alpha_bar.len(), self.n_max.len(), self.steps.len()]
            .iter()
            .map(|&n| n.max(1))
            .product()
    }
}

fn cmd_sweep(cli: &Cli, path: &Path, workers: usize) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let spec: SweepSpec = serde_json::from_str(&text).map_err(|e| io_failure(path, e))?;
    if spec.size() > spec.max_cells {
        return Err(Failure {
            code: EXIT_INVALID,
            message: format!("sweep grid has {} cells, cap is {}", spec.size(), spec.max_cells),
        });
    }
    let mut base = RunConfig::from_json(&spec.base.to_string())?;
    if let Some(seed) = cli.seed {
        base.master_seed = seed;
    }
    // refine_tol follows alpha_bar per cell unless the base pins it
    let base_pins_tol = spec.base.get("refine_tol").is_some();

    let out_path = cli.out_dir.join(&spec.output_file);
    let mut w = csv_writer(&out_path)?;
    w.write_record(SWEEP_COLUMNS).map_err(|e| io_failure(&out_path, e))?;
    for (i, mut cfg) in spec.cells(&base).into_iter().enumerate() {
        if base_pins_tol {
            cfg.refine_tol = base.refine_tol;
        }
        let head = [
            i.to_string(),
            cfg.delta.to_string(),
            fmt_float(cfg.alpha_bar),
            cfg.n_max.to_string(),
            cfg.steps.to_string(),
        ];
        let (status, tail, note): (&str, Vec<String>, String) = match run_config(&cfg, workers) {
            Ok((_, s)) => {
                let mut tail = stats_record(&s.final_stats).to_vec();
                tail.push(fmt_float(s.initial_target_population));
                tail.push(fmt_float(s.concentration.target_mass));
                ("ok", tail, String::new())
            }
            Err(e @ (Error::LeakageBudget { .. } | Error::EnsembleAborted { .. })) => {
                ("aborted", vec![String::new(); 9], e.to_string())
            }
            Err(e) => ("skipped", vec![String::new(); 9], e.to_string()),
        };
        eprintln!("cell {i}: {status} {note}");
        let mut record: Vec<String> = head.to_vec();
        record.push(status.into());
        record.extend(tail);
        record.push(note);
        w.write_record(&record).map_err(|e| io_failure(&out_path, e))?;
    }
    w.flush().map_err(|e| io_failure(&out_path, e))?;
    Ok(EXIT_OK)
}
