//! File formats: JSON documents, JSON-lines logs and CSV projections.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use vcg_core::mechanism::RoundRecord;
use vcg_core::{
    Dataset, Episode, LinearMdpInstance, MechanismConfig, Phase, PolicyTable, RegretReport,
    ReportingStrategy, RunLog, VcgBenchmark,
};

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, to_json(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Rounds to 12 decimal places so that printed benchmark values are stable
/// across platforms with different last-bit rounding.
pub fn round12(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBenchmarkView {
    pub agent: usize,
    /// Optimal value of the reward without this agent.
    pub v_star_without: f64,
    /// Value of the reward without this agent under the welfare-optimal policy.
    pub v_opt_policy_without: f64,
    pub own_value: f64,
    pub price: f64,
    pub utility: f64,
}

/// Printable benchmark with values rounded to 12 decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkView {
    pub instance_digest: String,
    #[serde(rename = "V_star_R")]
    pub v_star: f64,
    pub seller_value: f64,
    pub seller_utility: f64,
    pub optimal_policy: Vec<usize>,
    pub agents: Vec<AgentBenchmarkView>,
}

impl BenchmarkView {
    pub fn new(b: &VcgBenchmark) -> Self {
        BenchmarkView {
            instance_digest: format!("{:016x}", b.instance_digest),
            v_star: round12(b.optimal_welfare),
            seller_value: round12(b.seller_value),
            seller_utility: round12(b.seller_utility),
            optimal_policy: b.optimal_policy.actions().to_vec(),
            agents: b
                .agents
                .iter()
                .enumerate()
                .map(|(i, a)| AgentBenchmarkView {
                    agent: i + 1,
                    v_star_without: round12(a.value_without),
                    v_opt_policy_without: round12(a.others_at_optimum),
                    own_value: round12(a.own_value),
                    price: round12(a.price),
                    utility: round12(a.utility),
                })
                .collect(),
        }
    }

    /// Numeric fields in a fixed order with their names.
    pub fn numbers(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("V_star_R".to_string(), self.v_star),
            ("seller_value".into(), self.seller_value),
            ("seller_utility".into(), self.seller_utility),
        ];
        for a in &self.agents {
            let i = a.agent;
            out.push((format!("agents[{i}].v_star_without"), a.v_star_without));
            out.push((format!("agents[{i}].v_opt_policy_without"), a.v_opt_policy_without));
            out.push((format!("agents[{i}].own_value"), a.own_value));
            out.push((format!("agents[{i}].price"), a.price));
            out.push((format!("agents[{i}].utility"), a.utility));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,value\n");
        for (name, v) in self.numbers() {
            out.push_str(&format!("{name},{v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Header {
        instance: LinearMdpInstance,
        config: MechanismConfig,
        strategies: Vec<ReportingStrategy>,
        agents: usize,
        horizon: usize,
        explore_rounds: usize,
        beta: f64,
        bonus_cap: f64,
        instance_digest: u64,
        rounds: usize,
        policies: usize,
    },
    Policy {
        id: usize,
        policy: PolicyTable,
    },
    Round(RoundRecord),
}

/// Writes a run log as JSON lines: one header carrying the instance, then
/// one line per distinct policy, then one line per round.
pub fn write_runlog_jsonl<W: Write>(out: W, instance: &LinearMdpInstance, log: &RunLog) -> anyhow::Result<()> {
    let mut out = BufWriter::new(out);
    let header = LogLine::Header {
        instance: instance.clone(),
        config: log.config.clone(),
        strategies: log.strategies.clone(),
        agents: log.agents,
        horizon: log.horizon,
        explore_rounds: log.explore_rounds,
        beta: log.beta,
        bonus_cap: log.bonus_cap,
        instance_digest: log.instance_digest,
        rounds: log.rounds.len(),
        policies: log.policies.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for (id, policy) in log.policies.iter().enumerate() {
        serde_json::to_writer(&mut out, &LogLine::Policy { id, policy: policy.clone() })?;
        out.write_all(b"\n")?;
    }
    for r in &log.rounds {
        serde_json::to_writer(&mut out, &LogLine::Round(r.clone()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_runlog_jsonl<R: BufRead>(input: R) -> anyhow::Result<(LinearMdpInstance, RunLog)> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| anyhow!("run log is empty"))?;
    let LogLine::Header {
        instance,
        config,
        strategies,
        agents,
        horizon,
        explore_rounds,
        beta,
        bonus_cap,
        instance_digest,
        rounds: round_count,
        policies: policy_count,
    } = serde_json::from_str(&first?).context("line 1: invalid header")?
    else {
        bail!("line 1: expected a header line");
    };
    if instance.digest() != instance_digest {
        bail!("header digest does not match the embedded instance");
    }
    let mut policies = Vec::with_capacity(policy_count);
    let mut rounds = Vec::with_capacity(round_count);
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        match serde_json::from_str(&line).with_context(|| format!("line {lineno}: invalid record"))? {
            LogLine::Header { .. } => bail!("line {lineno}: repeated header"),
            LogLine::Policy { id, policy } => {
                if id != policies.len() || !rounds.is_empty() {
                    bail!("line {lineno}: policy {id} out of order");
                }
                policies.push(policy);
            }
            LogLine::Round(r) => rounds.push(r),
        }
    }
    if policies.len() != policy_count || rounds.len() != round_count {
        bail!(
            "run log truncated: expected {policy_count} policies and {round_count} rounds, found {} and {}",
            policies.len(),
            rounds.len()
        );
    }
    Ok((
        instance,
        RunLog {
            config,
            strategies,
            agents,
            horizon,
            explore_rounds,
            beta,
            bonus_cap,
            instance_digest,
            policies,
            rounds,
        },
    ))
}

pub fn read_runlog_file(path: &Path) -> anyhow::Result<(LinearMdpInstance, RunLog)> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_runlog_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Explore => "explore",
        Phase::Exploit => "exploit",
    }
}

/// Per-round projection of a run log: prices and both value estimates.
pub fn runlog_csv(log: &RunLog) -> String {
    let n = log.agents;
    let mut out = String::from("t,phase,policy,dataset_size");
    for prefix in ["price", "F", "G"] {
        for i in 1..=n {
            out.push_str(&format!(",{prefix}_{i}"));
        }
    }
    out.push('\n');
    for r in &log.rounds {
        out.push_str(&format!("{},{},{},{}", r.t, phase_name(r.phase), r.policy, r.dataset_size));
        for col in [&r.prices, &r.fictitious_values, &r.deployed_values] {
            for v in col.iter() {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push('\n');
    }
    out
}

pub fn series_header(agents: usize) -> String {
    let mut out = String::from("T,seed,t,phase,reg_W,reg_0");
    for i in 1..=agents {
        out.push_str(&format!(",reg_{i}"));
    }
    for i in 1..=agents {
        out.push_str(&format!(",price_{i}"));
    }
    out.push_str(",Z_running\n");
    out
}

/// Per-round regret rows of one run, without header.
pub fn series_rows(rounds: usize, seed: u64, report: &RegretReport) -> String {
    let mut out = String::new();
    for r in &report.rounds {
        out.push_str(&format!("{rounds},{seed},{},{},{},{}", r.t, phase_name(r.phase), r.reg_w, r.reg_0));
        for v in r.reg_agents.iter().chain(&r.prices) {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", r.z_running));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum DatasetLine {
    Dataset {
        horizon: usize,
        agents: usize,
        num_states: usize,
        num_actions: usize,
        exploration_episodes: usize,
        episodes: usize,
    },
    Episode(Episode),
}

pub fn write_dataset_jsonl<W: Write>(out: W, data: &Dataset) -> anyhow::Result<()> {
    let mut out = BufWriter::new(out);
    let header = DatasetLine::Dataset {
        horizon: data.horizon,
        agents: data.agents,
        num_states: data.num_states,
        num_actions: data.num_actions,
        exploration_episodes: data.exploration_episodes,
        episodes: data.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for ep in &data.episodes {
        serde_json::to_writer(&mut out, &DatasetLine::Episode(ep.clone()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset_jsonl<R: BufRead>(input: R) -> anyhow::Result<Dataset> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| anyhow!("dataset is empty"))??;
    let DatasetLine::Dataset {
        horizon,
        agents,
        num_states,
        num_actions,
        exploration_episodes,
        episodes: count,
    } = serde_json::from_str(&first).context("line 1: invalid header")?
    else {
        bail!("line 1: expected a dataset header");
    };
    let mut episodes = Vec::with_capacity(count);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).with_context(|| format!("line {}: invalid episode", idx + 2))? {
            DatasetLine::Episode(ep) => episodes.push(ep),
            DatasetLine::Dataset { .. } => bail!("line {}: repeated header", idx + 2),
        }
    }
    let data = Dataset {
        horizon,
        agents,
        num_states,
        num_actions,
        exploration_episodes,
        episodes,
    };
    if data.len() != count {
        bail!("dataset truncated: expected {count} episodes, found {}", data.len());
    }
    data.validate()?;
    Ok(data)
}

/// The learner's dataset recorded in a run log (reported rewards).
pub fn dataset_from_log(log: &RunLog, instance: &LinearMdpInstance) -> anyhow::Result<Dataset> {
    let mut data = Dataset::new(instance);
    for r in &log.rounds {
        if r.phase == Phase::Exploit && log.config.schedule == vcg_core::Schedule::Etc {
            break;
        }
        data.push(Episode {
            index: r.t,
            states: r.states.clone(),
            actions: r.actions.clone(),
            rewards: r.reported_rewards.clone(),
        })?;
    }
    data.exploration_episodes = log.explore_rounds.min(data.len());
    Ok(data)
}
