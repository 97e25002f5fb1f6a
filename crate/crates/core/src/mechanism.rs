//! The online mechanism: reward-free exploration for `K` rounds without
//! charging, then per round a welfare-greedy optimistic policy, Clarke-pivot
//! price estimates `p_i = F_i − G_i`, execution and charging.
//!
//! `F_i` is the planned value of the reward without agent `i` and `G_i` the
//! evaluated value of the deployed policy under the same reward; each is
//! optimistic or pessimistic per the configured [`Estimate`].

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Episode};
use crate::error::bail_arg;
use crate::exploitation::{Estimate, LsviParams, Planner, RewardSelector, Schedule};
use crate::exploration::{beta, BetaForm, Explorer};
use crate::instance::LinearMdpInstance;
use crate::policy::PolicyTable;
use crate::rng::{seeded, SimRng};
use crate::Result;

/// How an untruthful agent maps what happened to what it reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Zero,
    One,
    /// `x ↦ 1 − x`
    Complement,
    /// `x ↦ c·x`
    Scale(f64),
    /// Reports a fixed bid `b(h, s, a)` regardless of the realized reward;
    /// the table is indexed `[(h * S + s) * A + a]`.
    Bid(Vec<f64>),
}

impl Transform {
    fn apply(&self, h: usize, s: usize, a: usize, realized: f64, shape: (usize, usize)) -> f64 {
        let (s_len, a_len) = shape;
        match self {
            Transform::Zero => 0.0,
            Transform::One => 1.0,
            Transform::Complement => 1.0 - realized,
            Transform::Scale(c) => c * realized,
            Transform::Bid(table) => table[(h * s_len + s) * a_len + a],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportingStrategy {
    Truthful,
    Untruthful(Transform),
    /// Misreports via `transform` in rounds `t < round`, truthful afterwards.
    Switch { round: usize, transform: Transform },
}

impl ReportingStrategy {
    fn is_truthful_at(&self, t: usize) -> bool {
        match self {
            ReportingStrategy::Truthful => true,
            ReportingStrategy::Untruthful(_) => false,
            ReportingStrategy::Switch { round, .. } => t >= *round,
        }
    }

    fn validate(&self, instance: &LinearMdpInstance) -> Result<()> {
        let transform = match self {
            ReportingStrategy::Truthful => return Ok(()),
            ReportingStrategy::Untruthful(tr) | ReportingStrategy::Switch { transform: tr, .. } => tr,
        };
        match transform {
            Transform::Scale(c) if !c.is_finite() => bail_arg!("scale factor must be finite"),
            Transform::Bid(table) => {
                let len = instance.horizon() * instance.num_states() * instance.num_actions();
                if table.len() != len {
                    bail_arg!("bid table has {} entries, expected {len}", table.len());
                }
                if table.iter().any(|b| !(0.0..=1.0).contains(b)) {
                    bail_arg!("bids must lie in [0, 1]");
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Reward reported by an agent in round `t` for the realized reward at
/// `(h, s, a)`; always clipped to `[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn reported_reward(
    strategy: &ReportingStrategy,
    t: usize,
    h: usize,
    s: usize,
    a: usize,
    realized: f64,
    shape: (usize, usize),
) -> f64 {
    let raw = if strategy.is_truthful_at(t) {
        realized
    } else {
        match strategy {
            ReportingStrategy::Untruthful(tr) | ReportingStrategy::Switch { transform: tr, .. } => {
                tr.apply(h, s, a, realized, shape)
            }
            ReportingStrategy::Truthful => realized,
        }
    };
    raw.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub rounds: usize,
    /// Exploration rounds; `None` means `⌈T^{2/3}⌉`.
    pub explore_rounds: Option<usize>,
    pub schedule: Schedule,
    /// Estimate used for the no-`i` planned values `F`.
    pub fictitious_estimate: Estimate,
    /// Estimate used for the deployed-policy values `G`.
    pub deployed_estimate: Estimate,
    pub delta: f64,
    pub lambda: f64,
    pub c_beta: f64,
    pub beta_form: BetaForm,
    pub seed: u64,
    /// Permits `K = T` (no exploitation rounds); only meant for tests.
    #[serde(default)]
    pub allow_all_exploration: bool,
}

/// Theory-scale bonus constant.
pub const THEORY_C_BETA: f64 = 1.0;
/// Bonus constant for desk-scale regret experiments.
pub const PRACTICAL_C_BETA: f64 = 0.1;

impl MechanismConfig {
    pub fn new(rounds: usize, seed: u64) -> Self {
        MechanismConfig {
            rounds,
            explore_rounds: None,
            schedule: Schedule::Etc,
            fictitious_estimate: Estimate::Optimistic,
            deployed_estimate: Estimate::Pessimistic,
            delta: 0.1,
            lambda: 1.0,
            c_beta: PRACTICAL_C_BETA,
            beta_form: BetaForm::Agents,
            seed,
            allow_all_exploration: false,
        }
    }

    pub fn exploration_rounds(&self) -> usize {
        self.explore_rounds.unwrap_or_else(|| default_explore_rounds(self.rounds))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.exploration_rounds();
        if self.rounds == 0 {
            bail_arg!("rounds must be >= 1");
        }
        if k == 0 {
            bail_arg!("exploration rounds must be >= 1");
        }
        if k > self.rounds || (k == self.rounds && !self.allow_all_exploration) {
            bail_arg!("exploration rounds {k} must be < total rounds {}", self.rounds);
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail_arg!("delta must lie in (0, 1), got {}", self.delta);
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            bail_arg!("lambda must be positive, got {}", self.lambda);
        }
        if !(self.c_beta >= 0.0 && self.c_beta.is_finite()) {
            bail_arg!("c_beta must be nonnegative, got {}", self.c_beta);
        }
        Ok(())
    }

    pub fn lsvi_params(&self, instance: &LinearMdpInstance) -> LsviParams {
        let b = beta(
            instance,
            self.c_beta,
            self.beta_form,
            self.exploration_rounds(),
            self.delta,
        );
        LsviParams::new(instance, self.lambda, b)
    }
}

/// `⌈T^{2/3}⌉` in exact integer arithmetic: the least `K` with `K³ ≥ T²`.
pub fn default_explore_rounds(rounds: usize) -> usize {
    let target = (rounds as u128) * (rounds as u128);
    let mut k = libm::cbrt(target as f64) as u128;
    while k * k * k < target {
        k += 1;
    }
    while k > 0 && (k - 1) * (k - 1) * (k - 1) >= target {
        k -= 1;
    }
    k as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    Exploit,
}

/// One round of the mechanism. Reward vectors are flattened
/// `[h * (n + 1) + i]` with the seller at `i = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub phase: Phase,
    /// Index into [`RunLog::policies`].
    pub policy: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub true_rewards: Vec<f64>,
    pub reported_rewards: Vec<f64>,
    /// `p_{it}` for agents `1..=n`.
    pub prices: Vec<f64>,
    /// `F_t^{-i}`
    pub fictitious_values: Vec<f64>,
    /// `G_t^{-i}`
    pub deployed_values: Vec<f64>,
    /// Learner's dataset size when the round was planned.
    pub dataset_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: MechanismConfig,
    pub strategies: Vec<ReportingStrategy>,
    pub agents: usize,
    pub horizon: usize,
    pub explore_rounds: usize,
    pub beta: f64,
    pub bonus_cap: f64,
    pub instance_digest: u64,
    /// Distinct executed policies.
    pub policies: Vec<PolicyTable>,
    pub rounds: Vec<RoundRecord>,
}

impl RunLog {
    pub fn total_charged(&self) -> f64 {
        self.rounds.iter().flat_map(|r| r.prices.iter()).sum()
    }
}

struct Reporter<'a> {
    strategies: &'a [ReportingStrategy],
    shape: (usize, usize),
    width: usize,
}

impl Reporter<'_> {
    /// Reported copy of an episode's rewards; the seller's stream is kept.
    fn report(&self, ep: &Episode) -> Vec<f64> {
        let mut out = ep.rewards.clone();
        for h in 0..ep.actions.len() {
            let (s, a) = (ep.states[h], ep.actions[h]);
            for (j, strat) in self.strategies.iter().enumerate() {
                let idx = h * self.width + j + 1;
                out[idx] = reported_reward(strat, ep.index, h, s, a, ep.rewards[idx], self.shape);
            }
        }
        out
    }
}

struct Prices {
    policy: PolicyTable,
    fictitious: Vec<f64>,
    deployed: Vec<f64>,
    prices: Vec<f64>,
}

fn exploit_prices(planner: &Planner<'_>, config: &MechanismConfig, agents: usize) -> Result<Prices> {
    let welfare = planner.plan(&RewardSelector::Total, Estimate::Optimistic)?;
    let mut fictitious = Vec::with_capacity(agents);
    let mut deployed = Vec::with_capacity(agents);
    let mut prices = Vec::with_capacity(agents);
    for i in 1..=agents {
        let sel = RewardSelector::WithoutAgent(i);
        let f = planner.plan(&sel, config.fictitious_estimate)?.v1;
        let g = planner
            .evaluate(&sel, config.deployed_estimate, &welfare.policy)?
            .v1;
        fictitious.push(f);
        deployed.push(g);
        prices.push(f - g);
    }
    Ok(Prices {
        policy: welfare.policy,
        fictitious,
        deployed,
        prices,
    })
}

/// Runs the mechanism for `config.rounds` rounds on a fresh stream seeded by
/// `config.seed`.
pub fn run_vcg_linmdp(
    instance: &LinearMdpInstance,
    strategies: &[ReportingStrategy],
    config: &MechanismConfig,
) -> Result<RunLog> {
    config.validate()?;
    let n = instance.agents();
    if strategies.len() != n {
        bail_arg!("expected {n} reporting strategies, got {}", strategies.len());
    }
    for s in strategies {
        s.validate(instance)?;
    }
    let k_explore = config.exploration_rounds();
    let params = config.lsvi_params(instance);
    let reporter = Reporter {
        strategies,
        shape: (instance.num_states(), instance.num_actions()),
        width: n + 1,
    };
    let mut rng: SimRng = seeded(config.seed);
    let mut dataset = Dataset::new(instance);
    let mut policies: Vec<PolicyTable> = Vec::new();
    let mut rounds = Vec::with_capacity(config.rounds);
    let zeros = vec![0.0; n];

    let mut explorer = Explorer::new(instance, params)?;
    for t in 1..=k_explore {
        let (policy, _) = explorer.next_policy()?;
        let episode = instance.rollout(t, &policy, &mut rng);
        let reported = reporter.report(&episode);
        let logged = Episode {
            rewards: reported.clone(),
            ..episode.clone()
        };
        explorer.record(&logged)?;
        dataset.push(logged)?;
        let policy_id = intern(&mut policies, policy);
        rounds.push(RoundRecord {
            t,
            phase: Phase::Explore,
            policy: policy_id,
            states: episode.states,
            actions: episode.actions,
            true_rewards: episode.rewards,
            reported_rewards: reported,
            prices: zeros.clone(),
            fictitious_values: zeros.clone(),
            deployed_values: zeros.clone(),
            dataset_size: t - 1,
        });
    }
    dataset.exploration_episodes = k_explore;
    let mut summary = explorer.into_summary();

    let mut cached: Option<(Prices, usize)> = None;
    for t in k_explore + 1..=config.rounds {
        let fresh = match config.schedule {
            Schedule::Etc => cached.is_none(),
            Schedule::Ewc => true,
        };
        if fresh {
            let planner = Planner::new(instance, &summary, params)?;
            let prices = exploit_prices(&planner, config, n)?;
            let id = intern(&mut policies, prices.policy.clone());
            cached = Some((prices, id));
        }
        let (prices, policy_id) = cached.as_ref().expect("prices computed above");
        let episode = instance.rollout(t, &prices.policy, &mut rng);
        let reported = reporter.report(&episode);
        rounds.push(RoundRecord {
            t,
            phase: Phase::Exploit,
            policy: *policy_id,
            states: episode.states.clone(),
            actions: episode.actions.clone(),
            true_rewards: episode.rewards.clone(),
            reported_rewards: reported.clone(),
            prices: prices.prices.clone(),
            fictitious_values: prices.fictitious.clone(),
            deployed_values: prices.deployed.clone(),
            dataset_size: dataset.len(),
        });
        if config.schedule == Schedule::Ewc {
            let logged = Episode {
                rewards: reported,
                ..episode
            };
            summary.add_episode(instance, &logged)?;
            dataset.push(logged)?;
        }
    }

    Ok(RunLog {
        config: config.clone(),
        strategies: strategies.to_vec(),
        agents: n,
        horizon: instance.horizon(),
        explore_rounds: k_explore,
        beta: params.beta,
        bonus_cap: params.bonus_cap,
        instance_digest: instance.digest(),
        policies,
        rounds,
    })
}

/// Reuses the id of an identical, most recently added policy.
fn intern(policies: &mut Vec<PolicyTable>, policy: PolicyTable) -> usize {
    if let Some(last) = policies.last() {
        if *last == policy {
            return policies.len() - 1;
        }
    }
    policies.push(policy);
    policies.len() - 1
}
