//! Finite episodic linear-MDP instances.
//!
//! Step indices are 0-based throughout the crate (`0..horizon`); the initial
//! state is fixed. Agent index 0 is the seller, `1..=agents` are the bidders.
//! Tables are stored flattened row-major so that an instance dumps to a flat
//! JSON document unchanged.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::dataset::Episode;
use crate::error::bail_arg;
use crate::policy::PolicyTable;
use crate::rng::{self, SimRng};
use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-12;

/// How realized rewards are drawn around their means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Agents: `Bernoulli(mean)`. Seller: `r_max * Bernoulli(mean / r_max)`.
    Bernoulli,
    /// Realized reward equals the mean.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceTables")]
pub struct LinearMdpInstance {
    horizon: usize,
    agents: usize,
    r_max: f64,
    num_states: usize,
    num_actions: usize,
    initial_state: usize,
    dim: usize,
    /// `[(s * A + a) * d + k]`
    features: Vec<f64>,
    /// `[((h * S + s) * A + a) * S + s']`
    transitions: Vec<f64>,
    /// `[((i * H + h) * S + s) * A + a]`
    mean_rewards: Vec<f64>,
    noise: NoiseModel,
}

/// Unvalidated mirror of [`LinearMdpInstance`], used for deserialization.
#[derive(Debug, Clone, Deserialize)]
pub struct InstanceTables {
    pub horizon: usize,
    pub agents: usize,
    pub r_max: f64,
    pub num_states: usize,
    pub num_actions: usize,
    pub initial_state: usize,
    pub dim: usize,
    pub features: Vec<f64>,
    pub transitions: Vec<f64>,
    pub mean_rewards: Vec<f64>,
    pub noise: NoiseModel,
}

impl TryFrom<InstanceTables> for LinearMdpInstance {
    type Error = Error;

    fn try_from(t: InstanceTables) -> Result<Self> {
        let inst = LinearMdpInstance {
            horizon: t.horizon,
            agents: t.agents,
            r_max: t.r_max,
            num_states: t.num_states,
            num_actions: t.num_actions,
            initial_state: t.initial_state,
            dim: t.dim,
            features: t.features,
            transitions: t.transitions,
            mean_rewards: t.mean_rewards,
            noise: t.noise,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl LinearMdpInstance {
    pub fn from_tables(tables: InstanceTables) -> Result<Self> {
        Self::try_from(tables)
    }

    /// Checks every structural invariant: table sizes, feature norms, row
    /// sums and reward ranges.
    pub fn validate(&self) -> Result<()> {
        let (h, n, s, a, d) = (
            self.horizon,
            self.agents,
            self.num_states,
            self.num_actions,
            self.dim,
        );
        if h == 0 || n == 0 || s == 0 || a == 0 || d == 0 {
            bail_arg!("instance sizes must be >= 1 (H={h}, n={n}, S={s}, A={a}, d={d})");
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            bail_arg!("r_max must be positive and finite, got {}", self.r_max);
        }
        if self.initial_state >= s {
            bail_arg!("initial state {} out of range 0..{s}", self.initial_state);
        }
        if self.features.len() != s * a * d {
            bail_arg!("feature table has {} entries, expected {}", self.features.len(), s * a * d);
        }
        if self.transitions.len() != h * s * a * s {
            bail_arg!(
                "transition table has {} entries, expected {}",
                self.transitions.len(),
                h * s * a * s
            );
        }
        if self.mean_rewards.len() != (n + 1) * h * s * a {
            bail_arg!(
                "reward table has {} entries, expected {}",
                self.mean_rewards.len(),
                (n + 1) * h * s * a
            );
        }
        for (idx, phi) in self.features.chunks_exact(d).enumerate() {
            let norm2: f64 = phi.iter().map(|x| x * x).sum();
            if !norm2.is_finite() || norm2 > 1.0 + NORM_TOL {
                bail_arg!("feature of pair {idx} has norm^2 {norm2} > 1");
            }
        }
        for (idx, row) in self.transitions.chunks_exact(s).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                bail_arg!("transition row {idx} is not a probability vector (sum {sum})");
            }
        }
        for (idx, &m) in self.mean_rewards.iter().enumerate() {
            let agent = idx / (h * s * a);
            let hi = self.reward_upper(agent);
            if !(0.0..=hi).contains(&m) {
                bail_arg!("mean reward {m} of agent index {agent} outside [0, {hi}]");
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn agents(&self) -> usize {
        self.agents
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// Upper end of the reward range of agent index `i` (seller is 0).
    pub fn reward_upper(&self, i: usize) -> f64 {
        if i == 0 {
            self.r_max
        } else {
            1.0
        }
    }

    fn check_pair(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.num_states || a >= self.num_actions {
            bail_arg!(
                "state/action ({s}, {a}) out of range ({}, {})",
                self.num_states,
                self.num_actions
            );
        }
        Ok(())
    }

    fn check_step(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon {
            bail_arg!("step {h} out of range 0..{}", self.horizon);
        }
        self.check_pair(s, a)
    }

    pub fn feature(&self, s: usize, a: usize) -> Result<&[f64]> {
        self.check_pair(s, a)?;
        Ok(self.phi(s, a))
    }

    #[inline]
    pub(crate) fn phi(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.dim;
        &self.features[start..start + self.dim]
    }

    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = ((h * self.num_states + s) * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn mean_reward(&self, i: usize, h: usize, s: usize, a: usize) -> f64 {
        self.mean_rewards[((i * self.horizon + h) * self.num_states + s) * self.num_actions + a]
    }

    /// Draws the successor state and the `agents + 1` realized rewards.
    pub fn sample_step<R: RngCore + ?Sized>(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<(usize, Vec<f64>)> {
        self.check_step(h, s, a)?;
        let mut rewards = vec![0.0; self.agents + 1];
        let next = self.sample_into(h, s, a, rng, &mut rewards);
        Ok((next, rewards))
    }

    /// Unchecked core of [`sample_step`](Self::sample_step). Draw order is
    /// fixed: successor first, then rewards for agent indices `0..=n`.
    pub(crate) fn sample_into<R: RngCore + ?Sized>(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut R,
        rewards: &mut [f64],
    ) -> usize {
        let next = rng::categorical(rng, self.transition_row(h, s, a));
        for (i, r) in rewards.iter_mut().enumerate() {
            let mean = self.mean_reward(i, h, s, a);
            *r = match self.noise {
                NoiseModel::Deterministic => mean,
                NoiseModel::Bernoulli => {
                    let hi = self.reward_upper(i);
                    if rng::bernoulli(rng, mean / hi) {
                        hi
                    } else {
                        0.0
                    }
                }
            };
        }
        next
    }

    /// Rolls out one episode under a deterministic policy table.
    pub fn rollout(&self, index: usize, policy: &PolicyTable, rng: &mut SimRng) -> Episode {
        let h_len = self.horizon;
        let width = self.agents + 1;
        let mut states = Vec::with_capacity(h_len + 1);
        let mut actions = Vec::with_capacity(h_len);
        let mut rewards = vec![0.0; h_len * width];
        let mut s = self.initial_state;
        states.push(s);
        for h in 0..h_len {
            let a = policy.action(h, s);
            let next = self.sample_into(h, s, a, rng, &mut rewards[h * width..(h + 1) * width]);
            actions.push(a);
            states.push(next);
            s = next;
        }
        Episode {
            index,
            states,
            actions,
            rewards,
        }
    }

    /// FNV-1a digest over sizes and the bit patterns of every table; used to
    /// detect benchmark/instance mismatches.
    pub fn digest(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for x in [
            self.horizon,
            self.agents,
            self.num_states,
            self.num_actions,
            self.initial_state,
            self.dim,
        ] {
            eat(x as u64);
        }
        eat(self.r_max.to_bits());
        for t in [&self.features, &self.transitions, &self.mean_rewards] {
            for x in t.iter() {
                eat(x.to_bits());
            }
        }
        hash
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    /// Dirichlet(1) rows.
    Stochastic,
    /// One uniformly chosen successor per `(h, s, a)`.
    Deterministic,
}

/// Parameters of the one-hot tabular family (`d = |S||A|`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSpec {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub agents: usize,
    pub r_max: f64,
    pub seed: u64,
    pub transitions: TransitionKind,
    pub noise: NoiseModel,
}

impl TabularSpec {
    pub fn new(states: usize, actions: usize, horizon: usize, agents: usize, seed: u64) -> Self {
        TabularSpec {
            states,
            actions,
            horizon,
            agents,
            r_max: 1.0,
            seed,
            transitions: TransitionKind::Stochastic,
            noise: NoiseModel::Bernoulli,
        }
    }
}

/// One-hot features represent any tabular MDP, so the linear factorization
/// holds exactly.
pub fn make_onehot_tabular(spec: &TabularSpec) -> Result<LinearMdpInstance> {
    let TabularSpec {
        states: s_len,
        actions: a_len,
        horizon: h_len,
        agents: n,
        r_max,
        ..
    } = *spec;
    if s_len == 0 || a_len == 0 || h_len == 0 || n == 0 {
        bail_arg!("tabular sizes must be >= 1");
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        bail_arg!("r_max must be positive, got {r_max}");
    }
    let d = s_len * a_len;
    let mut features = vec![0.0; s_len * a_len * d];
    for pair in 0..d {
        features[pair * d + pair] = 1.0;
    }

    let mut rng = rng::seeded(spec.seed);
    let mut transitions = vec![0.0; h_len * s_len * a_len * s_len];
    for row in transitions.chunks_exact_mut(s_len) {
        match spec.transitions {
            TransitionKind::Deterministic => {
                let next = ((rng::uniform(&mut rng) * s_len as f64) as usize).min(s_len - 1);
                row[next] = 1.0;
            }
            TransitionKind::Stochastic => {
                for p in row.iter_mut() {
                    *p = -libm::log(1.0 - rng::uniform(&mut rng));
                }
                let total: f64 = row.iter().sum();
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
        }
    }
    let block = h_len * s_len * a_len;
    let mut mean_rewards = vec![0.0; (n + 1) * block];
    for (idx, m) in mean_rewards.iter_mut().enumerate() {
        let hi = if idx < block { r_max } else { 1.0 };
        *m = rng::uniform(&mut rng) * hi;
    }
    let inst = LinearMdpInstance {
        horizon: h_len,
        agents: n,
        r_max,
        num_states: s_len,
        num_actions: a_len,
        initial_state: 0,
        dim: d,
        features,
        transitions,
        mean_rewards,
        noise: spec.noise,
    };
    inst.validate()?;
    Ok(inst)
}

/// The two lower-bound problems: `Theta0` has Bernoulli(1/2) rewards for the
/// other agents at each agent state, `Theta1` raises them to `1/2 + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum HardVariant {
    Theta0,
    Theta1 { delta: f64 },
}

/// Lower-bound instance with states `x_0..=x_{n+2}` (index = subscript) and
/// actions `b_1..=b_A` (index = subscript − 1). From `x_0`, action `b_i`
/// leads to `x_i` for `i <= n+1` and to `x_{n+2}` otherwise; all other states
/// are absorbing. Features are basis vectors of `R^{n+2}`, the seller's reward
/// is identically zero, and all rewards at the first step are zero.
pub fn make_hard_instance(
    agents: usize,
    horizon: usize,
    actions: usize,
    variant: HardVariant,
    noise: NoiseModel,
) -> Result<LinearMdpInstance> {
    let n = agents;
    if n == 0 {
        bail_arg!("hard instance needs n >= 1");
    }
    if horizon < 2 {
        bail_arg!("hard instance needs H >= 2, got {horizon}");
    }
    if actions < n + 2 {
        bail_arg!("hard instance needs A >= n + 2 = {}, got {actions}", n + 2);
    }
    let boost = match variant {
        HardVariant::Theta0 => 0.0,
        HardVariant::Theta1 { delta } => {
            // δ ∈ (0, 1/(2n−2)); a single agent is capped at 1/2.
            let upper = if n > 1 { 1.0 / (2.0 * n as f64 - 2.0) } else { 0.5 };
            if !(delta > 0.0 && delta < upper) {
                bail_arg!("delta {delta} outside admissible range (0, {upper})");
            }
            delta
        }
    };
    let s_len = n + 3;
    let d = n + 2;
    // Basis index of each state (x_i -> e_i, 0-based i - 1) and of each
    // first-step action (b_i -> e_i for i <= n+1, e_{n+2} otherwise).
    let action_basis = |j: usize| j.min(n + 1);
    let state_basis = |i: usize| i - 1;
    let successor = |s: usize, a: usize| {
        if s == 0 {
            action_basis(a) + 1
        } else {
            s
        }
    };

    let mut features = vec![0.0; s_len * actions * d];
    for s in 0..s_len {
        for a in 0..actions {
            let k = if s == 0 {
                action_basis(a)
            } else {
                state_basis(s)
            };
            features[(s * actions + a) * d + k] = 1.0;
        }
    }

    let mut transitions = vec![0.0; horizon * s_len * actions * s_len];
    for h in 0..horizon {
        for s in 0..s_len {
            for a in 0..actions {
                let row = ((h * s_len + s) * actions + a) * s_len;
                transitions[row + successor(s, a)] = 1.0;
            }
        }
    }

    // Mean reward of agent j at states reached after the first step. Unreachable
    // (h >= 1, x_0) pairs copy the state their feature coincides with.
    let agent_mean = |j: usize, state: usize| -> f64 {
        if state <= n {
            if j == state {
                0.0
            } else {
                0.5 + boost
            }
        } else if state == n + 1 {
            0.5
        } else {
            0.125
        }
    };
    let mut mean_rewards = vec![0.0; (n + 1) * horizon * s_len * actions];
    for j in 1..=n {
        for h in 1..horizon {
            for s in 0..s_len {
                for a in 0..actions {
                    let target = successor(s, a);
                    mean_rewards[((j * horizon + h) * s_len + s) * actions + a] =
                        agent_mean(j, target);
                }
            }
        }
    }

    let inst = LinearMdpInstance {
        horizon,
        agents: n,
        r_max: 1.0,
        num_states: s_len,
        num_actions: actions,
        initial_state: 0,
        dim: d,
        features,
        transitions,
        mean_rewards,
        noise,
    };
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn det_spec(s: usize, a: usize) -> TabularSpec {
        TabularSpec {
            transitions: TransitionKind::Deterministic,
            noise: NoiseModel::Deterministic,
            ..TabularSpec::new(s, a, 3, 2, 11)
        }
    }

    #[test]
    fn onehot_feature_layout() {
        let inst = make_onehot_tabular(&TabularSpec::new(2, 2, 2, 1, 3)).unwrap();
        assert_eq!(inst.dim(), 4);
        assert_eq!(inst.feature(1, 0).unwrap(), &[0.0, 0.0, 1.0, 0.0]);
        for s in 0..2 {
            for a in 0..2 {
                let phi = inst.feature(s, a).unwrap();
                for (k, &x) in phi.iter().enumerate() {
                    assert_eq!(x, if k == s * 2 + a { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn feature_rejects_out_of_range() {
        let inst = make_onehot_tabular(&TabularSpec::new(2, 2, 2, 1, 3)).unwrap();
        assert!(matches!(inst.feature(2, 0), Err(Error::Argument(_))));
        assert!(matches!(inst.feature(0, 5), Err(Error::Argument(_))));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = make_onehot_tabular(&TabularSpec::new(4, 3, 3, 2, 99)).unwrap();
        let b = make_onehot_tabular(&TabularSpec::new(4, 3, 3, 2, 99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        let c = make_onehot_tabular(&TabularSpec::new(4, 3, 3, 2, 100)).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn generated_rows_are_stochastic() {
        for seed in 0..20 {
            let inst = make_onehot_tabular(&TabularSpec::new(5, 3, 4, 2, seed)).unwrap();
            for h in 0..4 {
                for s in 0..5 {
                    for a in 0..3 {
                        let sum: f64 = inst.transition_row(h, s, a).iter().sum();
                        assert!((sum - 1.0).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_step_returns_successor_and_means() {
        let inst = make_onehot_tabular(&det_spec(3, 2)).unwrap();
        let mut rng = seeded(5);
        for h in 0..3 {
            for s in 0..3 {
                for a in 0..2 {
                    let (next, r) = inst.sample_step(h, s, a, &mut rng).unwrap();
                    assert_eq!(inst.transition_row(h, s, a)[next], 1.0);
                    for (i, &ri) in r.iter().enumerate() {
                        assert_eq!(ri, inst.mean_reward(i, h, s, a));
                    }
                }
            }
        }
        assert!(inst.sample_step(3, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_empirical_mean() {
        // Mean 0.5 over 1e5 draws: σ = 0.5/√1e5 ≈ 1.58e-3, so ±0.01 is > 6σ.
        let inst = make_hard_instance(2, 2, 4, HardVariant::Theta0, NoiseModel::Bernoulli)
            .unwrap();
        let mut rng = seeded(2024);
        let mut total = 0.0;
        let draws = 100_000;
        // x_3 = x_{n+1}: every agent has mean 1/2 for h >= 1.
        for _ in 0..draws {
            let (_, r) = inst.sample_step(1, 3, 0, &mut rng).unwrap();
            total += r[1];
        }
        let mean = total / draws as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
    }

    #[test]
    fn replayed_stream_reproduces_trajectory() {
        let inst = make_onehot_tabular(&TabularSpec::new(3, 2, 4, 2, 8)).unwrap();
        let policy = PolicyTable::constant(4, 3, 1);
        let a = inst.rollout(1, &policy, &mut seeded(3));
        let b = inst.rollout(1, &policy, &mut seeded(3));
        assert_eq!(a, b);
        assert_eq!(a.states[0], inst.initial_state());
        assert_eq!(a.actions.len(), 4);
    }

    #[test]
    fn hard_instance_structure() {
        let n = 3;
        let inst =
            make_hard_instance(n, 4, 6, HardVariant::Theta0, NoiseModel::Bernoulli).unwrap();
        assert_eq!(inst.dim(), n + 2);
        assert_eq!(inst.num_states(), n + 3);
        // P_1(x_1 | x_0, b_1) = 1
        assert_eq!(inst.transition_row(0, 0, 0)[1], 1.0);
        // b_i for i >= n+2 leads to x_{n+2}
        assert_eq!(inst.transition_row(0, 0, 5)[n + 2], 1.0);
        // φ(x_0, b_5) = e_5 = φ(x_0, b_6) when n = 3
        assert_eq!(inst.feature(0, 4).unwrap(), inst.feature(0, 5).unwrap());
        assert_eq!(inst.feature(0, 4).unwrap()[4], 1.0);
        // absorbing for later steps
        for h in 1..4 {
            for s in 1..n + 3 {
                for a in 0..6 {
                    assert_eq!(inst.transition_row(h, s, a)[s], 1.0);
                }
            }
        }
        // x_{n+2}: Ber(1/8); seller identically 0
        for j in 1..=n {
            assert_eq!(inst.mean_reward(j, 1, n + 2, 0), 0.125);
        }
        assert!((0..4).all(|h| inst.mean_reward(0, h, 1, 0) == 0.0));
    }

    #[test]
    fn hard_instance_rejects_bad_arguments() {
        let th1 = |delta| HardVariant::Theta1 { delta };
        assert!(make_hard_instance(3, 1, 5, HardVariant::Theta0, NoiseModel::Bernoulli).is_err());
        assert!(make_hard_instance(3, 2, 4, HardVariant::Theta0, NoiseModel::Bernoulli).is_err());
        assert!(make_hard_instance(3, 2, 5, th1(0.25), NoiseModel::Bernoulli).is_err());
        assert!(make_hard_instance(3, 2, 5, th1(0.0), NoiseModel::Bernoulli).is_err());
        assert!(make_hard_instance(3, 2, 5, th1(0.2), NoiseModel::Bernoulli).is_ok());
    }

    #[test]
    fn deserialization_validates() {
        let inst = make_onehot_tabular(&TabularSpec::new(2, 2, 2, 1, 3)).unwrap();
        let mut tables = InstanceTables {
            horizon: inst.horizon,
            agents: inst.agents,
            r_max: inst.r_max,
            num_states: inst.num_states,
            num_actions: inst.num_actions,
            initial_state: inst.initial_state,
            dim: inst.dim,
            features: inst.features.clone(),
            transitions: inst.transitions.clone(),
            mean_rewards: inst.mean_rewards.clone(),
            noise: inst.noise,
        };
        assert!(LinearMdpInstance::from_tables(tables.clone()).is_ok());
        tables.transitions[0] += 0.5;
        assert!(LinearMdpInstance::from_tables(tables.clone()).is_err());
        tables.transitions[0] -= 0.5;
        tables.features[0] = 2.0;
        assert!(LinearMdpInstance::from_tables(tables).is_err());
    }
}
