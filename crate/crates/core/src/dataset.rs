//! Logged episodes and the per-step sufficient statistics the learners use.
//!
//! On a finite state space every regression the learners run only depends
//! on the data through the Gram matrix, the visit counts of `(s, a, s')` and
//! the per-agent reward sums at each `(s, a)`. [`DataSummary`] keeps those
//! incrementally so that a backward pass costs the same regardless of how many
//! episodes have been logged.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::bail_arg;
use crate::instance::LinearMdpInstance;
use crate::regression::{GramState, MomentVector};
use crate::Result;

/// One logged episode: `H + 1` states, `H` actions and `H × (n + 1)` rewards
/// (`rewards[h * (n + 1) + i]`, seller at `i = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    /// 1-based round index.
    pub index: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Rewards of every agent index at step `h`.
    pub fn step_rewards(&self, h: usize) -> &[f64] {
        let width = self.rewards.len() / self.actions.len();
        &self.rewards[h * width..(h + 1) * width]
    }
}

/// Ordered episodes as seen by the learner. The first `exploration_episodes`
/// entries come from the reward-free phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub horizon: usize,
    pub agents: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub exploration_episodes: usize,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn new(instance: &LinearMdpInstance) -> Self {
        Dataset {
            horizon: instance.horizon(),
            agents: instance.agents(),
            num_states: instance.num_states(),
            num_actions: instance.num_actions(),
            exploration_episodes: 0,
            episodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Appends an episode, enforcing contiguous indices and shape.
    pub fn push(&mut self, episode: Episode) -> Result<()> {
        let expected = self.episodes.len() + 1;
        if episode.index != expected {
            bail_arg!("episode index {} breaks contiguity (expected {expected})", episode.index);
        }
        self.check_shape(&episode)?;
        self.episodes.push(episode);
        Ok(())
    }

    fn check_shape(&self, ep: &Episode) -> Result<()> {
        let h = self.horizon;
        if ep.actions.len() != h
            || ep.states.len() != h + 1
            || ep.rewards.len() != h * (self.agents + 1)
        {
            bail_arg!("episode {} does not have {h} steps", ep.index);
        }
        if ep.states.iter().any(|&s| s >= self.num_states)
            || ep.actions.iter().any(|&a| a >= self.num_actions)
        {
            bail_arg!("episode {} has an out-of-range state or action", ep.index);
        }
        Ok(())
    }

    /// Re-checks every episode; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.exploration_episodes > self.episodes.len() {
            bail_arg!(
                "exploration marker {} exceeds episode count {}",
                self.exploration_episodes,
                self.episodes.len()
            );
        }
        for (k, ep) in self.episodes.iter().enumerate() {
            if ep.index != k + 1 {
                bail_arg!("episode index {} breaks contiguity (expected {})", ep.index, k + 1);
            }
            self.check_shape(ep)?;
        }
        Ok(())
    }
}

/// Sufficient statistics of the logged pairs at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    gram: GramState,
    /// `[s * A + a]`
    pair_counts: Vec<u64>,
    /// `[(s * A + a) * S + s']`
    next_counts: Vec<u64>,
    /// `[i * S * A + s * A + a]`, summed realized rewards.
    reward_sums: Vec<f64>,
}

impl StepSummary {
    pub fn gram(&self) -> &GramState {
        &self.gram
    }

    pub fn pair_count(&self, pair: usize) -> u64 {
        self.pair_counts[pair]
    }

    /// `Σ_τ φ(x_τ, a_τ) · (Σ_{i∈selected} r_{i,τ} + V_next(x'_τ))`.
    ///
    /// `selected == None` drops the reward term, which is the regression
    /// target of the reward-free phase.
    pub fn moment(
        &self,
        instance: &LinearMdpInstance,
        v_next: &[f64],
        selected: Option<&[bool]>,
    ) -> MomentVector {
        let s_len = instance.num_states();
        let a_len = instance.num_actions();
        let pairs = s_len * a_len;
        let mut m = MomentVector::zeros(instance.dim());
        for pair in 0..pairs {
            let count = self.pair_counts[pair];
            if count == 0 {
                continue;
            }
            let row = &self.next_counts[pair * s_len..(pair + 1) * s_len];
            let mut target: f64 = row
                .iter()
                .zip(v_next)
                .filter(|(&c, _)| c > 0)
                .map(|(&c, &v)| c as f64 * v)
                .sum();
            if let Some(mask) = selected {
                for (i, _) in mask.iter().enumerate().filter(|(_, &on)| on) {
                    target += self.reward_sums[i * pairs + pair];
                }
            }
            m.add(instance.phi(pair / a_len, pair % a_len), target);
        }
        m
    }
}

/// Per-step sufficient statistics over a set of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSummary {
    steps: Vec<StepSummary>,
    episodes: usize,
}

impl DataSummary {
    pub fn new(instance: &LinearMdpInstance, lambda: f64) -> Result<Self> {
        let pairs = instance.num_states() * instance.num_actions();
        let step = StepSummary {
            gram: GramState::new(instance.dim(), lambda)?,
            pair_counts: vec![0; pairs],
            next_counts: vec![0; pairs * instance.num_states()],
            reward_sums: vec![0.0; (instance.agents() + 1) * pairs],
        };
        Ok(DataSummary {
            steps: vec![step; instance.horizon()],
            episodes: 0,
        })
    }

    /// Summary of `dataset.episodes[..count]`, added in order.
    pub fn from_prefix(
        instance: &LinearMdpInstance,
        dataset: &Dataset,
        count: usize,
        lambda: f64,
    ) -> Result<Self> {
        if count > dataset.len() {
            bail_arg!("dataset has {} episodes, {count} requested", dataset.len());
        }
        let mut summary = Self::new(instance, lambda)?;
        for ep in &dataset.episodes[..count] {
            summary.add_episode(instance, ep)?;
        }
        Ok(summary)
    }

    pub fn add_episode(&mut self, instance: &LinearMdpInstance, ep: &Episode) -> Result<()> {
        let a_len = instance.num_actions();
        let s_len = instance.num_states();
        let pairs = s_len * a_len;
        let width = instance.agents() + 1;
        if ep.actions.len() != self.steps.len() || ep.rewards.len() != self.steps.len() * width {
            bail_arg!("episode {} does not match the instance shape", ep.index);
        }
        for (h, step) in self.steps.iter_mut().enumerate() {
            let (s, a, next) = (ep.states[h], ep.actions[h], ep.states[h + 1]);
            let pair = s * a_len + a;
            step.gram.add(instance.feature(s, a)?)?;
            step.pair_counts[pair] += 1;
            step.next_counts[pair * s_len + next] += 1;
            for (i, r) in ep.step_rewards(h).iter().enumerate() {
                step.reward_sums[i * pairs + pair] += r;
            }
        }
        self.episodes += 1;
        Ok(())
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn step(&self, h: usize) -> &StepSummary {
        &self.steps[h]
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}
