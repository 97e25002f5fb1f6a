//! Experiment orchestration: runs every `(T, seed)` cell, computes regrets
//! against the oracle, aggregates over seeds and fits scaling exponents.

use anyhow::Context;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vcg_core::{
    compute_regrets, fit_exponent, run_vcg_linmdp, vcg_benchmark, ExponentFit, LinearMdpInstance,
    RegretReport, VcgBenchmark,
};

use crate::config::ExperimentConfig;
use crate::io::{series_header, series_rows, BenchmarkView};

/// Totals of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub rounds: usize,
    pub seed: u64,
    pub explore_rounds: usize,
    pub beta: f64,
    pub welfare_regret: f64,
    pub seller_regret: f64,
    pub agent_regret: Vec<f64>,
    pub sharp_regret: f64,
    pub y: f64,
    pub z: f64,
    pub agent_utility: Vec<f64>,
    pub seller_utility: f64,
    pub mean_price: f64,
    pub sharp_residual: f64,
    pub seller_residual: f64,
    /// `(Ũ_iT − U_iT) / T` for the configured deviator, if any.
    pub deviation_gain: Option<f64>,
}

impl CellResult {
    fn from_report(rounds: usize, seed: u64, explore_rounds: usize, beta: f64, r: &RegretReport) -> Self {
        CellResult {
            rounds,
            seed,
            explore_rounds,
            beta,
            welfare_regret: r.welfare,
            seller_regret: r.seller,
            agent_regret: r.agent.clone(),
            sharp_regret: r.sharp,
            y: r.y,
            z: r.z,
            agent_utility: r.agent_utility.clone(),
            seller_utility: r.seller_utility,
            mean_price: r.mean_price,
            sharp_residual: r.sharp_residual(),
            seller_residual: r.seller_residual(),
            deviation_gain: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub rounds: usize,
    pub seed: u64,
    pub error: String,
}

/// Sample mean with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                half_width: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, half_width, n }
    }
}

/// Across-seed statistics at one `T`; utilities and regrets are per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rounds: usize,
    pub welfare_regret: Stat,
    pub welfare_regret_per_round: Stat,
    pub seller_regret_per_round: Stat,
    pub agent_utility_per_round: Vec<Stat>,
    pub seller_utility_per_round: Stat,
    pub mean_price: Stat,
    pub z: Stat,
    pub deviation_gain: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub config: ExperimentConfig,
    pub benchmark: BenchmarkView,
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub aggregates: Vec<Aggregate>,
    /// Log-log slope of mean welfare regret against `T`.
    pub welfare_fit: Option<ExponentFit>,
    pub notes: Vec<String>,
}

pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    /// Per-round regret CSV over all successful cells, if requested.
    pub series: Option<String>,
}

struct CellOutput {
    result: CellResult,
    series: Option<String>,
}

fn run_cell(
    config: &ExperimentConfig,
    instance: &LinearMdpInstance,
    bench: &VcgBenchmark,
    rounds: usize,
    seed: u64,
) -> anyhow::Result<CellOutput> {
    let exp = &config.experiment;
    let mcfg = config.mechanism.config(rounds, seed);
    let log = run_vcg_linmdp(instance, &exp.strategies, &mcfg)?;
    let report = compute_regrets(&log, bench, instance)?;
    let mut result = CellResult::from_report(rounds, seed, log.explore_rounds, log.beta, &report);
    let series = config.series.then(|| series_rows(rounds, seed, &report));
    drop(log);
    if let Some(dev) = &exp.deviation {
        let i = exp.deviator - 1;
        let mut strategies = exp.strategies.clone();
        strategies[i] = dev.clone();
        let dev_log = run_vcg_linmdp(instance, &strategies, &mcfg)?;
        let dev_report = compute_regrets(&dev_log, bench, instance)?;
        result.deviation_gain =
            Some((dev_report.agent_utility[i] - report.agent_utility[i]) / rounds as f64);
    }
    info!("T={rounds} seed={seed} Reg_W={:.4}", result.welfare_regret);
    Ok(CellOutput { result, series })
}

fn aggregate(rounds: usize, cells: &[&CellResult], agents: usize) -> Aggregate {
    let t = rounds as f64;
    let pick = |f: &dyn Fn(&CellResult) -> f64| Stat::of(&cells.iter().map(|c| f(c)).collect::<Vec<_>>());
    let gains: Vec<f64> = cells.iter().filter_map(|c| c.deviation_gain).collect();
    Aggregate {
        rounds,
        welfare_regret: pick(&|c| c.welfare_regret),
        welfare_regret_per_round: pick(&|c| c.welfare_regret / t),
        seller_regret_per_round: pick(&|c| c.seller_regret / t),
        agent_utility_per_round: (0..agents).map(|i| pick(&|c| c.agent_utility[i] / t)).collect(),
        seller_utility_per_round: pick(&|c| c.seller_utility / t),
        mean_price: pick(&|c| c.mean_price),
        z: pick(&|c| c.z),
        deviation_gain: (!gains.is_empty()).then(|| Stat::of(&gains)),
    }
}

/// Runs every `(T, seed)` cell on the rayon pool. Results are reduced in
/// sorted `(T, seed)` order, so the output does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> anyhow::Result<ExperimentOutput> {
    let instance = config.instance.build().context("building instance")?;
    let bench = vcg_benchmark(&instance).context("computing benchmark")?;
    let agents = instance.agents();

    let mut grid: Vec<usize> = config.experiment.rounds.clone();
    grid.sort_unstable();
    grid.dedup();
    let mut seeds: Vec<u64> = config.seeds().collect();
    seeds.sort_unstable();
    seeds.dedup();
    let cells: Vec<(usize, u64)> = grid
        .iter()
        .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
        .collect();

    let outcomes: Vec<((usize, u64), anyhow::Result<CellOutput>)> = cells
        .par_iter()
        .map(|&(t, s)| ((t, s), run_cell(config, &instance, &bench, t, s)))
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut series = config.series.then(|| series_header(agents));
    for ((rounds, seed), outcome) in outcomes {
        match outcome {
            Ok(out) => {
                if let (Some(buf), Some(rows)) = (series.as_mut(), out.series) {
                    buf.push_str(&rows);
                }
                results.push(out.result);
            }
            Err(e) => {
                warn!("T={rounds} seed={seed} failed: {e:#}");
                failures.push(CellFailure {
                    rounds,
                    seed,
                    error: format!("{e:#}"),
                });
            }
        }
    }

    let aggregates: Vec<Aggregate> = grid
        .iter()
        .filter_map(|&t| {
            let at: Vec<&CellResult> = results.iter().filter(|c| c.rounds == t).collect();
            (!at.is_empty()).then(|| aggregate(t, &at, agents))
        })
        .collect();

    let mut notes = Vec::new();
    let welfare_fit = if aggregates.len() >= 3 {
        let points: Vec<(f64, f64)> = aggregates
            .iter()
            .map(|a| (a.rounds as f64, a.welfare_regret.mean))
            .collect();
        match fit_exponent(&points) {
            Ok(fit) => {
                if fit.dropped > 0 {
                    warn!("exponent fit dropped {} nonpositive points", fit.dropped);
                    notes.push(format!("exponent fit dropped {} nonpositive points", fit.dropped));
                }
                Some(fit)
            }
            Err(e) => {
                warn!("exponent fit skipped: {e}");
                notes.push(format!("exponent fit skipped: {e}"));
                None
            }
        }
    } else {
        None
    };

    Ok(ExperimentOutput {
        summary: ExperimentSummary {
            name: config.experiment.name.clone(),
            config: config.clone(),
            benchmark: BenchmarkView::new(&bench),
            cells: results,
            failures,
            aggregates,
            welfare_fit,
            notes,
        },
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn config(extra: &str) -> ExperimentConfig {
        parse_config(&format!(
            "[instance]\nstates = 3\nactions = 2\nhorizon = 3\nagents = 2\nseed = 4\n[experiment]\n{extra}\n"
        ))
        .unwrap()
    }

    #[test]
    fn single_cell() {
        let out = run_experiment(&config("rounds = 50")).unwrap();
        assert_eq!(out.summary.cells.len(), 1);
        assert_eq!(out.summary.aggregates.len(), 1);
        assert_eq!(out.summary.aggregates[0].welfare_regret.half_width, 0.0);
        assert_eq!(out.series.unwrap().lines().count(), 51);
        assert!(out.summary.welfare_fit.is_none());
    }

    #[test]
    fn series_rows_per_seed_and_round() {
        let out = run_experiment(&config("rounds = 40\nseeds = 2")).unwrap();
        assert_eq!(out.series.unwrap().lines().count(), 2 * 40 + 1);
    }

    #[test]
    fn deterministic_and_seed_order_invariant() {
        let a = run_experiment(&config("rounds = 30, 60, 120\nseeds = 3")).unwrap();
        let b = run_experiment(&config("rounds = 120, 30, 60\nseeds = 3")).unwrap();
        assert_eq!(a.summary.cells, b.summary.cells);
        assert_eq!(a.summary.aggregates, b.summary.aggregates);
        assert_eq!(a.series, b.series);
        assert!(a.summary.welfare_fit.is_some());
        for c in &a.summary.cells {
            assert!(c.sharp_residual <= 1e-9 && c.seller_residual <= 1e-9);
        }
    }

    #[test]
    fn deviation_gain_is_paired() {
        let out = run_experiment(&config("rounds = 60\nseeds = 2\ndeviation = truthful")).unwrap();
        for c in &out.summary.cells {
            assert_eq!(c.deviation_gain, Some(0.0));
        }
        let lie = run_experiment(&config("rounds = 60\ndeviation = complement")).unwrap();
        assert!(lie.summary.aggregates[0].deviation_gain.is_some());
    }

    #[test]
    fn stat_half_width() {
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.half_width - 1.96 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of(&[5.0]).half_width, 0.0);
    }
}
