//! Experiment configuration.
//!
//! The primary format is sectioned `key = value` text:
//!
//! ```text
//! # comments start with '#'
//! [instance]
//! kind = tabular
//! states = 5
//!
//! [experiment]
//! rounds = 4096, 16384
//! ```
//!
//! A JSON object with one nested object per section and the same keys is
//! accepted as well. Lists may be JSON arrays there. Every key is checked
//! against the schema below and errors name the offending `section.key`.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `instance.kind` | `tabular`, `hard` | `tabular` |
//! | `instance.states`, `instance.actions`, `instance.horizon`, `instance.agents` | integers ≥ 1 | 5, 3, 5, 2 |
//! | `instance.r_max` | positive number (tabular only) | 1 |
//! | `instance.seed` | integer (tabular only) | 0 |
//! | `instance.transitions` | `stochastic`, `deterministic` (tabular only) | `stochastic` |
//! | `instance.noise` | `bernoulli`, `deterministic` | `bernoulli` |
//! | `instance.variant` | `theta0`, `theta1` (hard only) | `theta0` |
//! | `instance.delta` | number (hard `theta1` only) | 0.1 |
//! | `mechanism.schedule` | `etc`, `ewc` | `etc` |
//! | `mechanism.zeta2`, `mechanism.zeta3` | `opt`, `pes` | `opt`, `pes` |
//! | `mechanism.explore_rounds` | `auto` or integer | `auto` |
//! | `mechanism.delta` | number in (0, 1) | 0.1 |
//! | `mechanism.lambda` | positive number | 1 |
//! | `mechanism.c_beta` | nonnegative number | 0.1 |
//! | `mechanism.beta_form` | `agents`, `agents_plus_seller` | `agents` |
//! | `experiment.name` | text | `experiment` |
//! | `experiment.rounds` | list of integers | required |
//! | `experiment.seeds` | integer ≥ 1 | 1 |
//! | `experiment.seed_base` | integer | 0 |
//! | `experiment.strategies` | list of strategies, one per agent | all `truthful` |
//! | `experiment.deviation` | strategy for a paired deviation run | none |
//! | `experiment.deviator` | agent index in `1..=n` | 1 |
//! | `output.series` | `true`, `false` | `true` |
//!
//! Strategies are `truthful`, `zero`, `one`, `complement`, `scale:<c>` or
//! `switch:<round>:<strategy>`, the last being untruthful before `round`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use vcg_core::exploration::BetaForm;
use vcg_core::{
    make_hard_instance, make_onehot_tabular, Estimate, HardVariant, LinearMdpInstance,
    MechanismConfig, NoiseModel, ReportingStrategy, Schedule, TabularSpec, Transform,
    TransitionKind,
};

/// A configuration problem tied to one key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InstanceSpec {
    Tabular(TabularSpec),
    Hard {
        agents: usize,
        horizon: usize,
        actions: usize,
        variant: HardVariant,
        noise: NoiseModel,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> vcg_core::Result<LinearMdpInstance> {
        match self {
            InstanceSpec::Tabular(spec) => make_onehot_tabular(spec),
            InstanceSpec::Hard {
                agents,
                horizon,
                actions,
                variant,
                noise,
            } => make_hard_instance(*agents, *horizon, *actions, *variant, *noise),
        }
    }

    pub fn agents(&self) -> usize {
        match self {
            InstanceSpec::Tabular(spec) => spec.agents,
            InstanceSpec::Hard { agents, .. } => *agents,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSettings {
    pub schedule: Schedule,
    pub fictitious_estimate: Estimate,
    pub deployed_estimate: Estimate,
    pub explore_rounds: Option<usize>,
    pub delta: f64,
    pub lambda: f64,
    pub c_beta: f64,
    pub beta_form: BetaForm,
}

impl Default for MechanismSettings {
    fn default() -> Self {
        let base = MechanismConfig::new(1, 0);
        MechanismSettings {
            schedule: base.schedule,
            fictitious_estimate: base.fictitious_estimate,
            deployed_estimate: base.deployed_estimate,
            explore_rounds: None,
            delta: base.delta,
            lambda: base.lambda,
            c_beta: base.c_beta,
            beta_form: base.beta_form,
        }
    }
}

impl MechanismSettings {
    pub fn config(&self, rounds: usize, seed: u64) -> MechanismConfig {
        MechanismConfig {
            rounds,
            explore_rounds: self.explore_rounds,
            schedule: self.schedule,
            fictitious_estimate: self.fictitious_estimate,
            deployed_estimate: self.deployed_estimate,
            delta: self.delta,
            lambda: self.lambda,
            c_beta: self.c_beta,
            beta_form: self.beta_form,
            seed,
            allow_all_exploration: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub name: String,
    pub rounds: Vec<usize>,
    pub seeds: usize,
    pub seed_base: u64,
    pub strategies: Vec<ReportingStrategy>,
    pub deviation: Option<ReportingStrategy>,
    pub deviator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub mechanism: MechanismSettings,
    pub experiment: ExperimentSettings,
    pub series: bool,
}

impl ExperimentConfig {
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.experiment.seeds as u64).map(|j| self.experiment.seed_base.wrapping_add(j))
    }

    /// Cross-field checks that cannot be done key by key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.instance.agents();
        let e = &self.experiment;
        if e.rounds.is_empty() {
            return Err(ConfigError::new("experiment.rounds", "at least one value is required"));
        }
        if e.seeds == 0 {
            return Err(ConfigError::new("experiment.seeds", "must be >= 1"));
        }
        if e.strategies.len() != n {
            return Err(ConfigError::new(
                "experiment.strategies",
                format!("expected {n} entries (one per agent), got {}", e.strategies.len()),
            ));
        }
        if e.deviation.is_some() && !(1..=n).contains(&e.deviator) {
            return Err(ConfigError::new(
                "experiment.deviator",
                format!("must lie in 1..={n}, got {}", e.deviator),
            ));
        }
        self.instance
            .build()
            .map_err(|err| ConfigError::new("instance", err.to_string()))?;
        let m = &self.mechanism;
        if !(m.delta > 0.0 && m.delta < 1.0) {
            return Err(ConfigError::new("mechanism.delta", format!("must lie in (0, 1), got {}", m.delta)));
        }
        if !(m.lambda > 0.0 && m.lambda.is_finite()) {
            return Err(ConfigError::new("mechanism.lambda", format!("must be positive, got {}", m.lambda)));
        }
        if !(m.c_beta >= 0.0 && m.c_beta.is_finite()) {
            return Err(ConfigError::new("mechanism.c_beta", format!("must be nonnegative, got {}", m.c_beta)));
        }
        if m.explore_rounds == Some(0) {
            return Err(ConfigError::new("mechanism.explore_rounds", "must be >= 1"));
        }
        for &t in &e.rounds {
            self.mechanism
                .config(t, 0)
                .validate()
                .map_err(|err| ConfigError::new("experiment.rounds", format!("T = {t}: {err}")))?;
        }
        Ok(())
    }
}

/// Parses `truthful`, `zero`, `one`, `complement`, `scale:<c>` and
/// `switch:<round>:<strategy>`.
pub fn parse_strategy(text: &str) -> Result<ReportingStrategy, String> {
    let text = text.trim();
    let transform = |t: &str| -> Result<Transform, String> {
        match t {
            "zero" => Ok(Transform::Zero),
            "one" => Ok(Transform::One),
            "complement" => Ok(Transform::Complement),
            _ => match t.strip_prefix("scale:") {
                Some(c) => c
                    .parse::<f64>()
                    .ok()
                    .filter(|c| c.is_finite())
                    .map(Transform::Scale)
                    .ok_or_else(|| format!("invalid scale factor `{c}`")),
                None => Err(format!("unknown strategy `{t}`")),
            },
        }
    };
    if text == "truthful" {
        return Ok(ReportingStrategy::Truthful);
    }
    if let Some(rest) = text.strip_prefix("switch:") {
        let (round, inner) = rest
            .split_once(':')
            .ok_or_else(|| "expected `switch:<round>:<strategy>`".to_string())?;
        let round = round
            .parse()
            .map_err(|_| format!("invalid switch round `{round}`"))?;
        return Ok(ReportingStrategy::Switch {
            round,
            transform: transform(inner)?,
        });
    }
    transform(text).map(ReportingStrategy::Untruthful)
}

pub fn format_strategy(strategy: &ReportingStrategy) -> String {
    fn tr(t: &Transform) -> String {
        match t {
            Transform::Zero => "zero".into(),
            Transform::One => "one".into(),
            Transform::Complement => "complement".into(),
            Transform::Scale(c) => format!("scale:{c}"),
            Transform::Bid(_) => "bid".into(),
        }
    }
    match strategy {
        ReportingStrategy::Truthful => "truthful".into(),
        ReportingStrategy::Untruthful(t) => tr(t),
        ReportingStrategy::Switch { round, transform } => format!("switch:{round}:{}", tr(transform)),
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: Option<usize>,
}

/// Parsed keys addressed as `section.key`.
#[derive(Debug, Clone, Default)]
struct RawConfig {
    entries: BTreeMap<String, Entry>,
    used: BTreeSet<String>,
}

const SCHEMA: &[&str] = &[
    "instance.kind",
    "instance.states",
    "instance.actions",
    "instance.horizon",
    "instance.agents",
    "instance.r_max",
    "instance.seed",
    "instance.transitions",
    "instance.noise",
    "instance.variant",
    "instance.delta",
    "mechanism.schedule",
    "mechanism.zeta2",
    "mechanism.zeta3",
    "mechanism.explore_rounds",
    "mechanism.delta",
    "mechanism.lambda",
    "mechanism.c_beta",
    "mechanism.beta_form",
    "experiment.name",
    "experiment.rounds",
    "experiment.seeds",
    "experiment.seed_base",
    "experiment.strategies",
    "experiment.deviation",
    "experiment.deviator",
    "output.series",
];

impl RawConfig {
    fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    ConfigError::new(format!("line {lineno}"), "unterminated section header")
                })?;
                section = Some(name.trim().to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(format!("line {lineno}"), "expected `key = value`")
            })?;
            let sec = section.as_deref().ok_or_else(|| {
                ConfigError::new(format!("line {lineno}"), "key outside of any [section]")
            })?;
            raw.insert(format!("{sec}.{}", key.trim()), value.trim().to_string(), Some(lineno))?;
        }
        Ok(raw)
    }

    fn from_json(text: &str) -> Result<Self, ConfigError> {
        let root: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ConfigError::new(format!("line {}", e.line()), format!("invalid JSON: {e}")))?;
        let sections = root
            .as_object()
            .ok_or_else(|| ConfigError::new("<root>", "expected a JSON object"))?;
        let mut raw = RawConfig::default();
        for (sec, body) in sections {
            let keys = body
                .as_object()
                .ok_or_else(|| ConfigError::new(sec.clone(), "expected an object of keys"))?;
            for (key, value) in keys {
                let path = format!("{sec}.{key}");
                let text = json_scalar(value).ok_or_else(|| {
                    ConfigError::new(path.clone(), "expected a string, number, boolean or list of those")
                })?;
                raw.insert(path, text, None)?;
            }
        }
        Ok(raw)
    }

    fn insert(&mut self, path: String, value: String, line: Option<usize>) -> Result<(), ConfigError> {
        if !SCHEMA.contains(&path.as_str()) {
            return Err(ConfigError::new(path, "unknown key"));
        }
        if self.entries.contains_key(&path) {
            return Err(ConfigError::new(path, "key given twice"));
        }
        self.entries.insert(path, Entry { value, line });
        Ok(())
    }

    fn location(&self, path: &str) -> String {
        match self.entries.get(path).and_then(|e| e.line) {
            Some(line) => format!("{path} (line {line})"),
            None => path.to_string(),
        }
    }

    fn get(&mut self, path: &str) -> Option<String> {
        self.used.insert(path.to_string());
        self.entries.get(path).map(|e| e.value.clone())
    }

    fn has(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    fn parse<T: FromStr>(&mut self, path: &str, default: T, what: &str) -> Result<T, ConfigError> {
        match self.get(path) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::new(self.location(path), format!("expected {what}, got `{v}`"))),
        }
    }

    fn choice<T: Copy>(&mut self, path: &str, default: T, options: &[(&str, T)]) -> Result<T, ConfigError> {
        match self.get(path) {
            None => Ok(default),
            Some(v) => options
                .iter()
                .find(|(name, _)| v.eq_ignore_ascii_case(name))
                .map(|(_, t)| *t)
                .ok_or_else(|| {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    ConfigError::new(
                        self.location(path),
                        format!("expected one of {}, got `{v}`", names.join("|")),
                    )
                }),
        }
    }

    fn list(&mut self, path: &str) -> Option<Vec<String>> {
        self.get(path).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    /// Rejects keys that were given but not consumed by the selected
    /// instance kind.
    fn ensure_all_used(&self) -> Result<(), ConfigError> {
        match self.entries.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(ConfigError::new(self.location(k), "key does not apply to this configuration")),
            None => Ok(()),
        }
    }
}

fn json_scalar(value: &serde_json::Value) -> Option<String> {
    use serde_json::Value;
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => {
            let parts: Option<Vec<String>> = items
                .iter()
                .map(|v| match v {
                    Value::Array(_) | Value::Object(_) | Value::Null => None,
                    other => json_scalar(other),
                })
                .collect();
            parts.map(|p| p.join(", "))
        }
        Value::Object(_) | Value::Null => None,
    }
}

const NOISE: &[(&str, NoiseModel)] = &[
    ("bernoulli", NoiseModel::Bernoulli),
    ("deterministic", NoiseModel::Deterministic),
];
const ESTIMATES: &[(&str, Estimate)] = &[("opt", Estimate::Optimistic), ("pes", Estimate::Pessimistic)];
const SCHEDULES: &[(&str, Schedule)] = &[("etc", Schedule::Etc), ("ewc", Schedule::Ewc)];

fn build_instance(raw: &mut RawConfig) -> Result<InstanceSpec, ConfigError> {
    let kind = raw.choice("instance.kind", 0u8, &[("tabular", 0), ("hard", 1)])?;
    let agents = raw.parse("instance.agents", 2usize, "an integer")?;
    let horizon = raw.parse("instance.horizon", 5usize, "an integer")?;
    let noise = raw.choice("instance.noise", NoiseModel::Bernoulli, NOISE)?;
    let instance = if kind == 0 {
        InstanceSpec::Tabular(TabularSpec {
            states: raw.parse("instance.states", 5usize, "an integer")?,
            actions: raw.parse("instance.actions", 3usize, "an integer")?,
            horizon,
            agents,
            r_max: raw.parse("instance.r_max", 1.0f64, "a number")?,
            seed: raw.parse("instance.seed", 0u64, "an integer")?,
            transitions: raw.choice(
                "instance.transitions",
                TransitionKind::Stochastic,
                &[
                    ("stochastic", TransitionKind::Stochastic),
                    ("deterministic", TransitionKind::Deterministic),
                ],
            )?,
            noise,
        })
    } else {
        let theta1 = raw.choice("instance.variant", false, &[("theta0", false), ("theta1", true)])?;
        let variant = if theta1 {
            HardVariant::Theta1 {
                delta: raw.parse("instance.delta", 0.1f64, "a number")?,
            }
        } else {
            HardVariant::Theta0
        };
        InstanceSpec::Hard {
            agents,
            horizon,
            actions: raw.parse("instance.actions", agents + 2, "an integer")?,
            variant,
            noise,
        }
    };
    Ok(instance)
}

fn build(mut raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let instance = build_instance(&mut raw)?;
    let defaults = MechanismSettings::default();
    let explore_rounds = match raw.get("mechanism.explore_rounds") {
        None => None,
        Some(v) if v == "auto" => None,
        Some(v) => Some(v.parse().map_err(|_| {
            ConfigError::new(
                raw.location("mechanism.explore_rounds"),
                format!("expected `auto` or an integer, got `{v}`"),
            )
        })?),
    };
    let mechanism = MechanismSettings {
        schedule: raw.choice("mechanism.schedule", defaults.schedule, SCHEDULES)?,
        fictitious_estimate: raw.choice("mechanism.zeta2", defaults.fictitious_estimate, ESTIMATES)?,
        deployed_estimate: raw.choice("mechanism.zeta3", defaults.deployed_estimate, ESTIMATES)?,
        explore_rounds,
        delta: raw.parse("mechanism.delta", defaults.delta, "a number")?,
        lambda: raw.parse("mechanism.lambda", defaults.lambda, "a number")?,
        c_beta: raw.parse("mechanism.c_beta", defaults.c_beta, "a number")?,
        beta_form: raw.choice(
            "mechanism.beta_form",
            defaults.beta_form,
            &[("agents", BetaForm::Agents), ("agents_plus_seller", BetaForm::AgentsPlusSeller)],
        )?,
    };

    if !raw.has("experiment.rounds") {
        return Err(ConfigError::new("experiment.rounds", "required key is missing"));
    }
    let rounds = raw
        .list("experiment.rounds")
        .unwrap_or_default()
        .iter()
        .map(|v| v.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| ConfigError::new(raw.location("experiment.rounds"), "expected a list of integers"))?;
    let strategies = match raw.list("experiment.strategies") {
        None => vec![ReportingStrategy::Truthful; instance.agents()],
        Some(items) => items
            .iter()
            .map(|s| parse_strategy(s))
            .collect::<Result<_, _>>()
            .map_err(|e| ConfigError::new(raw.location("experiment.strategies"), e))?,
    };
    let deviation = match raw.get("experiment.deviation") {
        None => None,
        Some(v) => Some(
            parse_strategy(&v).map_err(|e| ConfigError::new(raw.location("experiment.deviation"), e))?,
        ),
    };
    let experiment = ExperimentSettings {
        name: raw.get("experiment.name").unwrap_or_else(|| "experiment".into()),
        rounds,
        seeds: raw.parse("experiment.seeds", 1usize, "an integer")?,
        seed_base: raw.parse("experiment.seed_base", 0u64, "an integer")?,
        strategies,
        deviation,
        deviator: raw.parse("experiment.deviator", 1usize, "an integer")?,
    };
    let series = raw.parse("output.series", true, "true or false")?;
    raw.ensure_all_used()?;
    let config = ExperimentConfig {
        instance,
        mechanism,
        experiment,
        series,
    };
    config.validate()?;
    Ok(config)
}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    if text.trim_start().starts_with('{') {
        RawConfig::from_json(text)
    } else {
        RawConfig::from_text(text)
    }
}

/// Parses either format; JSON is detected by a leading `{`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    build(parse_raw(text)?)
}

/// Reads only the `[instance]` section; other sections are ignored.
pub fn parse_instance_spec(text: &str) -> Result<InstanceSpec, ConfigError> {
    let mut raw = parse_raw(text)?;
    let spec = build_instance(&mut raw)?;
    if let Some(k) = raw
        .entries
        .keys()
        .find(|k| k.starts_with("instance.") && !raw.used.contains(*k))
    {
        return Err(ConfigError::new(raw.location(k), "key does not apply to this configuration"));
    }
    spec.build()
        .map_err(|err| ConfigError::new("instance", err.to_string()))?;
    Ok(spec)
}

/// Command-line overrides applied on top of a parsed file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub rounds: Option<Vec<usize>>,
    pub seeds: Option<usize>,
    pub schedule: Option<Schedule>,
    pub fictitious_estimate: Option<Estimate>,
    pub deployed_estimate: Option<Estimate>,
    pub c_beta: Option<f64>,
    pub explore_rounds: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<(), ConfigError> {
        if let Some(r) = &self.rounds {
            config.experiment.rounds = r.clone();
        }
        if let Some(s) = self.seeds {
            config.experiment.seeds = s;
        }
        if let Some(s) = self.schedule {
            config.mechanism.schedule = s;
        }
        if let Some(e) = self.fictitious_estimate {
            config.mechanism.fictitious_estimate = e;
        }
        if let Some(e) = self.deployed_estimate {
            config.mechanism.deployed_estimate = e;
        }
        if let Some(c) = self.c_beta {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(ConfigError::new("--beta-scale", format!("must be a nonnegative number, got {c}")));
            }
            config.mechanism.c_beta = c;
        }
        if let Some(k) = self.explore_rounds {
            config.mechanism.explore_rounds = Some(k);
        }
        config.validate()
    }
}

impl fmt::Display for InstanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceSpec::Tabular(s) => write!(
                f,
                "tabular S={} A={} H={} n={} seed={}",
                s.states, s.actions, s.horizon, s.agents, s.seed
            ),
            InstanceSpec::Hard {
                agents,
                horizon,
                variant,
                ..
            } => write!(f, "hard n={agents} H={horizon} {variant:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "
# regret run
[instance]
kind = tabular
states = 3
actions = 2
horizon = 3
agents = 2
seed = 9

[mechanism]
zeta2 = pes
zeta3 = opt
c_beta = 0.05

[experiment]
rounds = 40, 80
seeds = 3
strategies = complement, truthful
";

    #[test]
    fn text_config_round_trip() {
        let cfg = parse_config(TEXT).unwrap();
        assert_eq!(cfg.experiment.rounds, vec![40, 80]);
        assert_eq!(cfg.mechanism.fictitious_estimate, Estimate::Pessimistic);
        assert_eq!(cfg.mechanism.c_beta, 0.05);
        assert_eq!(
            cfg.experiment.strategies[0],
            ReportingStrategy::Untruthful(Transform::Complement)
        );
        assert_eq!(cfg.seeds().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(cfg.series);
    }

    #[test]
    fn json_matches_text() {
        let json = r#"{
            "instance": {"kind": "tabular", "states": 3, "actions": 2, "horizon": 3, "agents": 2, "seed": 9},
            "mechanism": {"zeta2": "pes", "zeta3": "opt", "c_beta": 0.05},
            "experiment": {"rounds": [40, 80], "seeds": 3, "strategies": ["complement", "truthful"]}
        }"#;
        assert_eq!(parse_config(json).unwrap(), parse_config(TEXT).unwrap());
    }

    #[test]
    fn errors_name_the_key() {
        let bad = TEXT.replace("c_beta = 0.05", "c_beta = lots");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.location.starts_with("mechanism.c_beta"), "{err}");
        let unknown = TEXT.replace("seeds = 3", "seedz = 3");
        assert_eq!(parse_config(&unknown).unwrap_err().location, "experiment.seedz");
        let misplaced = TEXT.replace("seed = 9", "seed = 9\nvariant = theta1");
        assert!(parse_config(&misplaced).unwrap_err().location.starts_with("instance.variant"));
        let wrong_count = TEXT.replace("complement, truthful", "truthful");
        assert_eq!(parse_config(&wrong_count).unwrap_err().location, "experiment.strategies");
        let zeta = TEXT.replace("zeta3 = opt", "zeta3 = maybe");
        let err = parse_config(&zeta).unwrap_err();
        assert!(err.message.contains("opt|pes"));
        let missing = TEXT.replace("rounds = 40, 80", "");
        assert_eq!(parse_config(&missing).unwrap_err().location, "experiment.rounds");
        let small = TEXT.replace("rounds = 40, 80", "rounds = 1");
        assert_eq!(parse_config(&small).unwrap_err().location, "experiment.rounds");
    }

    #[test]
    fn hard_instance_section() {
        let text = "[instance]\nkind = hard\nagents = 3\nhorizon = 2\n[experiment]\nrounds = 10\n";
        let cfg = parse_config(text).unwrap();
        let inst = cfg.instance.build().unwrap();
        assert_eq!(inst.num_states(), 6);
        assert_eq!(inst.num_actions(), 5);
    }

    #[test]
    fn instance_only_parse() {
        let spec = parse_instance_spec("[instance]\nkind = hard\nagents = 3\nhorizon = 2\n").unwrap();
        assert_eq!(spec.agents(), 3);
        let bad = parse_instance_spec("[instance]\nkind = hard\nagents = 3\nhorizon = 1\n").unwrap_err();
        assert_eq!(bad.location, "instance");
    }

    #[test]
    fn strategy_syntax() {
        for s in ["truthful", "zero", "one", "complement", "scale:0.5", "switch:100:complement"] {
            assert_eq!(format_strategy(&parse_strategy(s).unwrap()), s);
        }
        assert!(parse_strategy("switch:x:zero").is_err());
        assert!(parse_strategy("lie").is_err());
    }

    #[test]
    fn overrides_revalidate() {
        let mut cfg = parse_config(TEXT).unwrap();
        let ov = Overrides {
            rounds: Some(vec![500]),
            c_beta: Some(1.0),
            ..Default::default()
        };
        ov.apply(&mut cfg).unwrap();
        assert_eq!(cfg.experiment.rounds, vec![500]);
        let bad = Overrides {
            c_beta: Some(-1.0),
            ..Default::default()
        };
        assert_eq!(bad.apply(&mut cfg).unwrap_err().location, "--beta-scale");
    }
}
