//! Reward-free exploration.
//!
//! Episode `k` runs an optimistic backward pass over the first `k − 1`
//! episodes in which the only reward is the exploration bonus itself:
//! `Q = min{Π_[0,B](wᵀφ) + u/H + u, B}`, with `w` fit to `V_{h+1}(x')`
//! alone. Logged rewards are stored for the exploitation phase but never
//! enter these regressions.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{DataSummary, Dataset, Episode};
use crate::error::bail_arg;
use crate::exploitation::{bonus_cap, clip, LsviParams};
use crate::instance::LinearMdpInstance;
use crate::policy::{argmax, PolicyTable};
use crate::regression::bonus_from_quad;
use crate::rng::SimRng;
use crate::Result;

/// Leading factor of the bonus scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaForm {
    /// `c · n · d · H · √log(n d H K / δ)`
    Agents,
    /// `c · (n + R_max) · d · H · √log(n d H K / δ)`
    AgentsPlusSeller,
}

/// Bonus scale β. `K = 0` is treated as `K = 1` inside the logarithm.
pub fn beta(
    instance: &LinearMdpInstance,
    c_beta: f64,
    form: BetaForm,
    explore_rounds: usize,
    delta: f64,
) -> f64 {
    let n = instance.agents() as f64;
    let d = instance.dim() as f64;
    let h = instance.horizon() as f64;
    let k = explore_rounds.max(1) as f64;
    let lead = match form {
        BetaForm::Agents => n,
        BetaForm::AgentsPlusSeller => n + instance.r_max(),
    };
    let log_term = libm::log(n * d * h * k / delta).max(0.0);
    c_beta * lead * d * h * libm::sqrt(log_term)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreParams {
    pub episodes: usize,
    pub delta: f64,
    pub lsvi: LsviParams,
}

impl ExploreParams {
    pub fn new(
        instance: &LinearMdpInstance,
        episodes: usize,
        delta: f64,
        lambda: f64,
        c_beta: f64,
        form: BetaForm,
    ) -> Self {
        let b = beta(instance, c_beta, form, episodes, delta);
        ExploreParams {
            episodes,
            delta,
            lsvi: LsviParams::new(instance, lambda, b),
        }
    }

    pub fn validate(&self, instance: &LinearMdpInstance) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail_arg!("delta must lie in (0, 1), got {}", self.delta);
        }
        self.lsvi.validate()?;
        if self.lsvi.bonus_cap != bonus_cap(instance) {
            bail_arg!(
                "bonus cap {} differs from H (n + R_max) = {}",
                self.lsvi.bonus_cap,
                bonus_cap(instance)
            );
        }
        Ok(())
    }
}

/// Incremental reward-free explorer. Call [`next_policy`](Self::next_policy)
/// for the upcoming episode, roll it out, then [`record`](Self::record) it.
pub struct Explorer<'a> {
    instance: &'a LinearMdpInstance,
    params: LsviParams,
    summary: DataSummary,
}

impl<'a> Explorer<'a> {
    pub fn new(instance: &'a LinearMdpInstance, params: LsviParams) -> Result<Self> {
        params.validate()?;
        Ok(Explorer {
            instance,
            params,
            summary: DataSummary::new(instance, params.lambda)?,
        })
    }

    /// Greedy exploration policy for the next episode and its optimistic
    /// internal value at the initial state.
    pub fn next_policy(&self) -> Result<(PolicyTable, f64)> {
        let inst = self.instance;
        let (h_len, s_len, a_len) = (inst.horizon(), inst.num_states(), inst.num_actions());
        let cap = self.params.bonus_cap;
        let scale = 1.0 / h_len as f64;
        let mut v_next = vec![0.0; s_len];
        let mut v_cur = vec![0.0; s_len];
        let mut actions = vec![0usize; h_len * s_len];
        let mut q = vec![0.0; a_len];
        for h in (0..h_len).rev() {
            let step = self.summary.step(h);
            let moment = step.moment(inst, &v_next, None);
            let w = step.gram().ridge_solve(&moment)?;
            for s in 0..s_len {
                for (a, qa) in q.iter_mut().enumerate() {
                    let phi = inst.phi(s, a);
                    let fit: f64 = w.iter().zip(phi).map(|(x, y)| x * y).sum();
                    let u = bonus_from_quad(step.gram().quad_form(phi), self.params.beta, cap);
                    *qa = (clip(fit, 0.0, cap) + u * scale + u).min(cap);
                }
                let best = argmax(&q);
                actions[h * s_len + s] = best;
                v_cur[s] = q[best];
            }
            core::mem::swap(&mut v_next, &mut v_cur);
        }
        let v1 = v_next[inst.initial_state()];
        Ok((PolicyTable::from_fn(h_len, s_len, |h, s| actions[h * s_len + s]), v1))
    }

    pub fn record(&mut self, episode: &Episode) -> Result<()> {
        self.summary.add_episode(self.instance, episode)
    }

    pub fn summary(&self) -> &DataSummary {
        &self.summary
    }

    pub fn into_summary(self) -> DataSummary {
        self.summary
    }
}

/// Everything the reward-free phase produced.
#[derive(Debug, Clone)]
pub struct ExplorationTrace {
    pub dataset: Dataset,
    /// Executed policy of each episode.
    pub policies: Vec<PolicyTable>,
    /// Optimistic internal value `V_1^k(x_1)` of each episode.
    pub internal_values: Vec<f64>,
}

/// Runs `params.episodes` reward-free episodes with truthful reward logging.
pub fn explore(
    instance: &LinearMdpInstance,
    params: &ExploreParams,
    rng: &mut SimRng,
) -> Result<Dataset> {
    Ok(explore_with_trace(instance, params, rng)?.dataset)
}

pub fn explore_with_trace(
    instance: &LinearMdpInstance,
    params: &ExploreParams,
    rng: &mut SimRng,
) -> Result<ExplorationTrace> {
    params.validate(instance)?;
    let mut explorer = Explorer::new(instance, params.lsvi)?;
    let mut dataset = Dataset::new(instance);
    let mut policies = Vec::with_capacity(params.episodes);
    let mut internal_values = Vec::with_capacity(params.episodes);
    for k in 1..=params.episodes {
        let (policy, v1) = explorer.next_policy()?;
        let episode = instance.rollout(k, &policy, rng);
        explorer.record(&episode)?;
        dataset.push(episode)?;
        policies.push(policy);
        internal_values.push(v1);
    }
    dataset.exploration_episodes = params.episodes;
    Ok(ExplorationTrace {
        dataset,
        policies,
        internal_values,
    })
}
