//! Command-line front end. Exit codes: 0 success, 1 usage or validation
//! error, 2 runtime failure (including golden-file drift).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use vcg_core::{compute_regrets, run_vcg_linmdp, vcg_benchmark, Estimate, Schedule};

use crate::config::{parse_config, parse_instance_spec, ConfigError, InstanceSpec, Overrides};
use crate::harness::{run_experiment, ExperimentSummary};
use crate::io::{self, BenchmarkView};
use crate::plot::{render_svg, PlotSeries};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "VCG_SIM_OUT";
const DEFAULT_OUT: &str = "vcg-out";
const GOLDEN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(format!("config error at {e}"))
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn runtime_chain(e: anyhow::Error) -> CliError {
    CliError::Runtime(format!("{e:#}"))
}

#[derive(Debug, Parser)]
#[command(name = "vcg-sim", version, about = "Simulate and audit a learned dynamic VCG mechanism")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment grid and write summary.json and series.csv.
    Run(RunArgs),
    /// Print the exact VCG benchmark of the configured instance.
    Bench(BenchArgs),
    /// Recompute regrets from a saved run log.
    Replay(ReplayArgs),
    /// Render mean welfare regret against T as a log-log SVG.
    Plot(PlotArgs),
    /// Re-check golden benchmark files.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Zeta1 {
    Etc,
    Ewc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZetaEst {
    Opt,
    Pes,
}

impl From<ZetaEst> for Estimate {
    fn from(z: ZetaEst) -> Self {
        match z {
            ZetaEst::Opt => Estimate::Optimistic,
            ZetaEst::Pes => Estimate::Pessimistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Comma-separated list of horizons T.
    #[arg(long = "T", value_delimiter = ',')]
    pub rounds: Option<Vec<usize>>,
    /// Number of exploration rounds K.
    #[arg(long = "K")]
    pub explore_rounds: Option<usize>,
    #[arg(long, value_enum)]
    pub zeta1: Option<Zeta1>,
    #[arg(long, value_enum)]
    pub zeta2: Option<ZetaEst>,
    #[arg(long, value_enum)]
    pub zeta3: Option<ZetaEst>,
    #[arg(long = "beta-scale")]
    pub beta_scale: Option<f64>,
    /// Also write each run's log as JSON lines under `logs/`.
    #[arg(long)]
    pub save_logs: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Run log written by `run --save-logs`.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// One or more summary.json files; each becomes one curve.
    #[arg(long, required = true, num_args = 1..)]
    pub summary: Vec<PathBuf>,
    /// Output SVG path; defaults to `regret.svg` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/golden"))]
    pub golden: PathBuf,
    /// Rewrite the stored benchmark values instead of checking them.
    #[arg(long)]
    pub bless: bool,
}

/// Golden file: an instance and its expected benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFile {
    pub name: String,
    pub instance: InstanceSpec,
    pub benchmark: BenchmarkView,
}

/// Regret totals of a replayed log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub rounds: usize,
    pub explore_rounds: usize,
    pub seed: u64,
    pub welfare_regret: f64,
    pub seller_regret: f64,
    pub agent_regret: Vec<f64>,
    pub sharp_regret: f64,
    pub y: f64,
    pub z: f64,
    pub agent_utility: Vec<f64>,
    pub seller_utility: f64,
    pub mean_price: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Run(a) => cmd_run(a, stdout),
        Command::Bench(a) => cmd_bench(a, stdout),
        Command::Replay(a) => cmd_replay(a, stdout),
        Command::Plot(a) => cmd_plot(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Validation(format!("output directory {} is not writable: {e}", dir.display())))
}

fn cmd_run(a: RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut config = parse_config(&read_text(&a.config)?)?;
    let overrides = Overrides {
        rounds: a.rounds,
        seeds: a.seeds,
        schedule: a.zeta1.map(|z| match z {
            Zeta1::Etc => Schedule::Etc,
            Zeta1::Ewc => Schedule::Ewc,
        }),
        fictitious_estimate: a.zeta2.map(Into::into),
        deployed_estimate: a.zeta3.map(Into::into),
        c_beta: a.beta_scale,
        explore_rounds: a.explore_rounds,
    };
    overrides.apply(&mut config)?;
    ensure_dir(&a.out)?;
    let output = run_experiment(&config).map_err(runtime_chain)?;
    write_file(
        &a.out.join("summary.json"),
        io::to_json(&output.summary).map_err(runtime_chain)?.as_bytes(),
    )?;
    if let Some(series) = &output.series {
        write_file(&a.out.join("series.csv"), series.as_bytes())?;
    }
    if a.save_logs {
        save_logs(&config, &a.out.join("logs"))?;
    }
    let _ = writeln!(
        stdout,
        "{} cells ({} failed) written to {}",
        output.summary.cells.len(),
        output.summary.failures.len(),
        a.out.display()
    );
    if let Some(fit) = output.summary.welfare_fit {
        let _ = writeln!(stdout, "welfare regret slope {:.4}", fit.slope);
    }
    Ok(())
}

fn save_logs(config: &crate::config::ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let instance = config.instance.build().map_err(runtime)?;
    for &t in &config.experiment.rounds {
        for seed in config.seeds() {
            let log = run_vcg_linmdp(&instance, &config.experiment.strategies, &config.mechanism.config(t, seed))
                .map_err(runtime)?;
            let mut buf = Vec::new();
            io::write_runlog_jsonl(&mut buf, &instance, &log).map_err(runtime_chain)?;
            write_file(&dir.join(format!("runlog_T{t}_seed{seed}.jsonl")), &buf)?;
        }
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = parse_instance_spec(&read_text(&a.config)?)?;
    let instance = spec.build().map_err(|e| CliError::Validation(e.to_string()))?;
    let view = BenchmarkView::new(&vcg_benchmark(&instance).map_err(runtime)?);
    let text = match a.format {
        Format::Json => io::to_json(&view).map_err(runtime_chain)?,
        Format::Csv => view.to_csv(),
    };
    stdout.write_all(text.as_bytes()).map_err(runtime)
}

fn cmd_replay(a: ReplayArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (instance, log) =
        io::read_runlog_file(&a.log).map_err(|e| CliError::Validation(format!("{e:#}")))?;
    let bench = vcg_benchmark(&instance).map_err(runtime)?;
    let report = compute_regrets(&log, &bench, &instance).map_err(runtime)?;
    let text = match a.format {
        Format::Json => io::to_json(&ReplayReport {
            rounds: log.rounds.len(),
            explore_rounds: log.explore_rounds,
            seed: log.config.seed,
            welfare_regret: report.welfare,
            seller_regret: report.seller,
            agent_regret: report.agent.clone(),
            sharp_regret: report.sharp,
            y: report.y,
            z: report.z,
            agent_utility: report.agent_utility.clone(),
            seller_utility: report.seller_utility,
            mean_price: report.mean_price,
        })
        .map_err(runtime_chain)?,
        Format::Csv => {
            io::series_header(log.agents) + &io::series_rows(log.rounds.len(), log.config.seed, &report)
        }
    };
    match a.out {
        Some(path) => write_file(&path, text.as_bytes()),
        None => stdout.write_all(text.as_bytes()).map_err(runtime),
    }
}

fn cmd_plot(a: PlotArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut series = Vec::new();
    for path in &a.summary {
        let summary: ExperimentSummary =
            io::read_json(path).map_err(|e| CliError::Validation(format!("{e:#}")))?;
        series.push(PlotSeries::from_summary(&summary));
    }
    let out = match a.out {
        Some(p) => p,
        None => {
            let dir = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_OUT.into());
            ensure_dir(&dir)?;
            dir.join("regret.svg")
        }
    };
    write_file(&out, render_svg(&series).as_bytes())?;
    let _ = writeln!(stdout, "wrote {}", out.display());
    Ok(())
}

fn golden_paths(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Validation(format!("cannot read golden directory {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Validation(format!("no golden files in {}", dir.display())));
    }
    Ok(paths)
}

/// Differences between a stored and a recomputed benchmark.
pub fn golden_drift(expected: &BenchmarkView, actual: &BenchmarkView) -> Vec<String> {
    let mut drift = Vec::new();
    if expected.instance_digest != actual.instance_digest {
        drift.push(format!(
            "instance digest {} != {}",
            actual.instance_digest, expected.instance_digest
        ));
    }
    if expected.optimal_policy != actual.optimal_policy {
        drift.push("optimal policy changed".into());
    }
    let (e, a) = (expected.numbers(), actual.numbers());
    if e.len() != a.len() {
        drift.push(format!("{} values stored, {} recomputed", e.len(), a.len()));
        return drift;
    }
    for ((name, want), (_, got)) in e.iter().zip(&a) {
        if (want - got).abs() > GOLDEN_TOLERANCE || !got.is_finite() {
            drift.push(format!("{name}: stored {want}, recomputed {got}"));
        }
    }
    drift
}

fn cmd_verify(a: VerifyArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut failures = 0;
    for path in golden_paths(&a.golden)? {
        let mut golden: GoldenFile =
            io::read_json(&path).map_err(|e| CliError::Validation(format!("{e:#}")))?;
        let instance = golden
            .instance
            .build()
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let actual = BenchmarkView::new(&vcg_benchmark(&instance).map_err(runtime)?);
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if a.bless {
            golden.benchmark = actual;
            io::write_json(&path, &golden).map_err(runtime_chain)?;
            let _ = writeln!(stdout, "blessed {name}");
            continue;
        }
        let drift = golden_drift(&golden.benchmark, &actual);
        if drift.is_empty() {
            let _ = writeln!(stdout, "ok    {name}");
        } else {
            failures += 1;
            let _ = writeln!(stdout, "DRIFT {name}");
            for d in drift {
                let _ = writeln!(stdout, "      {d}");
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} golden file(s) drifted")));
    }
    Ok(())
}
