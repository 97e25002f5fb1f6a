//! Optimistic/pessimistic least-squares value iteration over logged data:
//! planning (greedy policy and its value) and evaluation of a given policy.
//!
//! Both passes run backward from `V_{H+1} = 0`. At each step the ridge
//! weights fit `𝔯(x, a) + V_{h+1}(x')` over the episodes selected by the
//! [`Schedule`], `f = Π_[0,B](wᵀφ)`, and
//!
//! * optimistic: `Q = min{f + u, α_h}`
//! * pessimistic: `Q = Π_[0,α_h](f − u)`
//!
//! where `u = min{β √(φᵀΛ⁻¹φ), B}` and `α_h` is the largest attainable
//! reward-to-go of the selected reward.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::dataset::{DataSummary, Dataset};
use crate::error::bail_arg;
use crate::instance::LinearMdpInstance;
use crate::policy::{argmax, PolicyTable};
use crate::regression::bonus_from_quad;
use crate::Result;

/// Which episodes feed the regressions once exploitation starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Explore-then-commit: only the `K` exploration episodes.
    Etc,
    /// Explore-while-commit: every episode before the current round.
    Ewc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    Optimistic,
    Pessimistic,
}

/// Which reward streams are summed into the regression target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSelector {
    /// Seller plus every agent.
    Total,
    /// Everything except agent `i` (seller included).
    WithoutAgent(usize),
    /// Explicit mask over agent indices `0..=n`.
    Custom(Vec<bool>),
}

impl RewardSelector {
    pub fn mask(&self, agents: usize) -> Result<Vec<bool>> {
        let mask = match self {
            RewardSelector::Total => vec![true; agents + 1],
            RewardSelector::WithoutAgent(i) => {
                if *i == 0 || *i > agents {
                    bail_arg!("agent index {i} outside 1..={agents}");
                }
                let mut m = vec![true; agents + 1];
                m[*i] = false;
                m
            }
            RewardSelector::Custom(m) => {
                if m.len() != agents + 1 {
                    bail_arg!("custom mask has length {}, expected {}", m.len(), agents + 1);
                }
                m.clone()
            }
        };
        if !mask.iter().any(|&b| b) {
            bail_arg!("reward selector selects no reward stream");
        }
        Ok(mask)
    }
}

/// Ridge parameter, bonus scale and the `[0, B]` clip shared by every
/// regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsviParams {
    pub lambda: f64,
    pub beta: f64,
    pub bonus_cap: f64,
}

impl LsviParams {
    /// Uses the canonical cap `B = H (n + R_max)`.
    pub fn new(instance: &LinearMdpInstance, lambda: f64, beta: f64) -> Self {
        LsviParams {
            lambda,
            beta,
            bonus_cap: bonus_cap(instance),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            bail_arg!("lambda must be positive, got {}", self.lambda);
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            bail_arg!("beta must be nonnegative, got {}", self.beta);
        }
        if !(self.bonus_cap > 0.0) {
            bail_arg!("bonus cap must be positive, got {}", self.bonus_cap);
        }
        Ok(())
    }
}

/// `B = H (n + R_max)`.
pub fn bonus_cap(instance: &LinearMdpInstance) -> f64 {
    instance.horizon() as f64 * (instance.agents() as f64 + instance.r_max())
}

/// Truncation level `α_h` for 0-based step `h`: the summed reward upper
/// bounds of the selected streams times the remaining steps `H − h`.
pub fn truncation_alpha(
    selector: &RewardSelector,
    agents: usize,
    r_max: f64,
    h: usize,
    horizon: usize,
) -> Result<f64> {
    if h >= horizon {
        bail_arg!("step {h} out of range 0..{horizon}");
    }
    let mask = selector.mask(agents)?;
    let per_step: f64 = mask
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| if i == 0 { r_max } else { 1.0 })
        .sum();
    Ok(per_step * (horizon - h) as f64)
}

/// 1-based episode indices used at round `t > K`.
pub fn index_set(schedule: Schedule, explore_rounds: usize, t: usize) -> Result<RangeInclusive<usize>> {
    if t <= explore_rounds {
        bail_arg!("round {t} is not an exploitation round (K = {explore_rounds})");
    }
    Ok(match schedule {
        Schedule::Etc => 1..=explore_rounds,
        Schedule::Ewc => 1..=t - 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub selector: RewardSelector,
    pub estimate: Estimate,
    /// Ridge weights per step.
    pub weights: Vec<Vec<f64>>,
    /// `q[(h * S + s) * A + a]`
    pub q: Vec<f64>,
    /// `values[h * S + s]` for `h in 0..=H` (last row zero).
    pub values: Vec<f64>,
    /// Greedy policy w.r.t. `q` (lowest index on ties).
    pub policy: PolicyTable,
    /// Value at the initial state.
    pub v1: f64,
}

/// Backward LSVI over a frozen [`DataSummary`]. Bonuses depend only on the
/// Gram matrices and are computed once at construction, so several
/// selectors and estimates can share one planner.
pub struct Planner<'a> {
    instance: &'a LinearMdpInstance,
    summary: &'a DataSummary,
    params: LsviParams,
    /// `bonus[(h * S + s) * A + a]`
    bonus: Vec<f64>,
}

impl<'a> Planner<'a> {
    pub fn new(
        instance: &'a LinearMdpInstance,
        summary: &'a DataSummary,
        params: LsviParams,
    ) -> Result<Self> {
        params.validate()?;
        if summary.horizon() != instance.horizon() {
            bail_arg!("summary horizon does not match the instance");
        }
        let (s_len, a_len) = (instance.num_states(), instance.num_actions());
        let mut bonus = Vec::with_capacity(instance.horizon() * s_len * a_len);
        for h in 0..instance.horizon() {
            let gram = summary.step(h).gram();
            for s in 0..s_len {
                for a in 0..a_len {
                    let quad = gram.quad_form(instance.phi(s, a));
                    bonus.push(bonus_from_quad(quad, params.beta, params.bonus_cap));
                }
            }
        }
        Ok(Planner {
            instance,
            summary,
            params,
            bonus,
        })
    }

    pub fn bonus(&self, h: usize, s: usize, a: usize) -> f64 {
        let (s_len, a_len) = (self.instance.num_states(), self.instance.num_actions());
        self.bonus[(h * s_len + s) * a_len + a]
    }

    /// Greedy planning.
    pub fn plan(&self, selector: &RewardSelector, estimate: Estimate) -> Result<PlanResult> {
        self.backward(selector, estimate, None)
    }

    /// Value of `policy` under the same construction (no max over actions).
    pub fn evaluate(
        &self,
        selector: &RewardSelector,
        estimate: Estimate,
        policy: &PolicyTable,
    ) -> Result<PlanResult> {
        if policy.horizon() != self.instance.horizon()
            || policy.num_states() != self.instance.num_states()
        {
            bail_arg!("policy table shape does not match the instance");
        }
        if policy.actions().iter().any(|&a| a >= self.instance.num_actions()) {
            bail_arg!("policy selects an out-of-range action");
        }
        self.backward(selector, estimate, Some(policy))
    }

    fn backward(
        &self,
        selector: &RewardSelector,
        estimate: Estimate,
        fixed: Option<&PolicyTable>,
    ) -> Result<PlanResult> {
        let inst = self.instance;
        let mask = selector.mask(inst.agents())?;
        let (h_len, s_len, a_len) = (inst.horizon(), inst.num_states(), inst.num_actions());
        let cap = self.params.bonus_cap;
        let mut q = vec![0.0; h_len * s_len * a_len];
        let mut values = vec![0.0; (h_len + 1) * s_len];
        let mut greedy = vec![0usize; h_len * s_len];
        let mut weights = vec![Vec::new(); h_len];

        for h in (0..h_len).rev() {
            let alpha = truncation_alpha(selector, inst.agents(), inst.r_max(), h, h_len)?;
            let step = self.summary.step(h);
            let (head, tail) = values.split_at_mut((h + 1) * s_len);
            let v_next = &tail[..s_len];
            let moment = step.moment(inst, v_next, Some(&mask));
            let w = step.gram().ridge_solve(&moment)?;
            for s in 0..s_len {
                let row = &mut q[(h * s_len + s) * a_len..(h * s_len + s + 1) * a_len];
                for (a, qa) in row.iter_mut().enumerate() {
                    let phi = inst.phi(s, a);
                    let fit: f64 = w.iter().zip(phi).map(|(x, y)| x * y).sum();
                    let f = clip(fit, 0.0, cap);
                    let u = self.bonus[(h * s_len + s) * a_len + a];
                    *qa = match estimate {
                        Estimate::Optimistic => (f + u).min(alpha),
                        Estimate::Pessimistic => clip(f - u, 0.0, alpha),
                    };
                }
                let best = argmax(row);
                greedy[h * s_len + s] = best;
                let chosen = match fixed {
                    Some(p) => p.action(h, s),
                    None => best,
                };
                head[h * s_len + s] = row[chosen];
            }
            weights[h] = w;
        }

        let v1 = values[inst.initial_state()];
        Ok(PlanResult {
            selector: selector.clone(),
            estimate,
            weights,
            q,
            values,
            policy: PolicyTable::from_raw(h_len, s_len, greedy),
            v1,
        })
    }
}

#[inline]
pub(crate) fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

fn summary_for_round(
    instance: &LinearMdpInstance,
    dataset: &Dataset,
    schedule: Schedule,
    t: usize,
    params: &LsviParams,
) -> Result<DataSummary> {
    let range = index_set(schedule, dataset.exploration_episodes, t)?;
    let count = *range.end();
    if count > dataset.len() {
        bail_arg!("round {t} needs {count} logged episodes, dataset has {}", dataset.len());
    }
    DataSummary::from_prefix(instance, dataset, count, params.lambda)
}

/// Planning at round `t` from the raw dataset.
pub fn plan(
    instance: &LinearMdpInstance,
    dataset: &Dataset,
    selector: &RewardSelector,
    schedule: Schedule,
    estimate: Estimate,
    t: usize,
    params: &LsviParams,
) -> Result<PlanResult> {
    let summary = summary_for_round(instance, dataset, schedule, t, params)?;
    Planner::new(instance, &summary, *params)?.plan(selector, estimate)
}

/// Policy evaluation at round `t` from the raw dataset; returns `V_1(x_1)`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    instance: &LinearMdpInstance,
    dataset: &Dataset,
    selector: &RewardSelector,
    schedule: Schedule,
    estimate: Estimate,
    t: usize,
    policy: &PolicyTable,
    params: &LsviParams,
) -> Result<f64> {
    let summary = summary_for_round(instance, dataset, schedule, t, params)?;
    Ok(Planner::new(instance, &summary, *params)?
        .evaluate(selector, estimate, policy)?
        .v1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{make_onehot_tabular, TabularSpec};
    use crate::rng::seeded;

    #[test]
    fn alpha_values() {
        let a = |sel: &RewardSelector, h| truncation_alpha(sel, 2, 1.0, h, 3).unwrap();
        assert_eq!(a(&RewardSelector::Total, 0), 9.0);
        assert_eq!(a(&RewardSelector::WithoutAgent(1), 0), 6.0);
        assert_eq!(a(&RewardSelector::Total, 2), 3.0);
        assert_eq!(a(&RewardSelector::Custom(vec![false, true, true]), 0), 6.0);
        assert_eq!(a(&RewardSelector::Custom(vec![true, false, false]), 1), 2.0);
        assert!(truncation_alpha(&RewardSelector::Total, 2, 1.0, 3, 3).is_err());
    }

    #[test]
    fn selector_validation() {
        assert!(RewardSelector::WithoutAgent(0).mask(2).is_err());
        assert!(RewardSelector::WithoutAgent(3).mask(2).is_err());
        assert!(RewardSelector::Custom(vec![false; 3]).mask(2).is_err());
        assert!(RewardSelector::Custom(vec![true; 2]).mask(2).is_err());
        assert_eq!(
            RewardSelector::WithoutAgent(2).mask(2).unwrap(),
            vec![true, true, false]
        );
    }

    #[test]
    fn index_sets() {
        assert_eq!(index_set(Schedule::Etc, 5, 9).unwrap(), 1..=5);
        assert_eq!(index_set(Schedule::Ewc, 5, 9).unwrap(), 1..=8);
        assert_eq!(index_set(Schedule::Ewc, 5, 6).unwrap(), index_set(Schedule::Etc, 5, 6).unwrap());
        assert!(index_set(Schedule::Etc, 5, 5).is_err());
    }

    fn one_episode_dataset() -> (LinearMdpInstance, Dataset) {
        let inst = make_onehot_tabular(&TabularSpec::new(3, 2, 3, 2, 1)).unwrap();
        let mut data = Dataset::new(&inst);
        let policy = PolicyTable::constant(3, 3, 0);
        data.push(inst.rollout(1, &policy, &mut seeded(0))).unwrap();
        data.exploration_episodes = 1;
        (inst, data)
    }

    #[test]
    fn saturated_bonuses() {
        let (inst, data) = one_episode_dataset();
        let params = LsviParams::new(&inst, 1.0, 1e6);
        let alpha0 = truncation_alpha(&RewardSelector::Total, 2, 1.0, 0, 3).unwrap();
        let opt = plan(&inst, &data, &RewardSelector::Total, Schedule::Etc, Estimate::Optimistic, 2, &params)
            .unwrap();
        assert_eq!(opt.v1, alpha0);
        let pes = plan(&inst, &data, &RewardSelector::Total, Schedule::Etc, Estimate::Pessimistic, 2, &params)
            .unwrap();
        assert_eq!(pes.v1, 0.0);
        let policy = PolicyTable::constant(3, 3, 1);
        let sel = RewardSelector::WithoutAgent(1);
        let v = evaluate_policy(&inst, &data, &sel, Schedule::Etc, Estimate::Pessimistic, 2, &policy, &params)
            .unwrap();
        assert_eq!(v, 0.0);
        let v = evaluate_policy(&inst, &data, &sel, Schedule::Etc, Estimate::Optimistic, 2, &policy, &params)
            .unwrap();
        assert_eq!(v, truncation_alpha(&sel, 2, 1.0, 0, 3).unwrap());
    }

    #[test]
    fn plan_rejects_exploration_rounds_and_short_data() {
        let (inst, data) = one_episode_dataset();
        let params = LsviParams::new(&inst, 1.0, 1.0);
        assert!(plan(&inst, &data, &RewardSelector::Total, Schedule::Etc, Estimate::Optimistic, 1, &params).is_err());
        assert!(plan(&inst, &data, &RewardSelector::Total, Schedule::Ewc, Estimate::Optimistic, 3, &params).is_err());
    }

    #[test]
    fn q_values_stay_in_range() {
        let inst = make_onehot_tabular(&TabularSpec::new(3, 2, 4, 2, 9)).unwrap();
        let mut data = Dataset::new(&inst);
        let mut rng = seeded(4);
        for k in 1..=30 {
            let p = PolicyTable::from_fn(4, 3, |h, s| (h * 7 + s * 3 + k) % 2);
            data.push(inst.rollout(k, &p, &mut rng)).unwrap();
        }
        data.exploration_episodes = 30;
        let params = LsviParams::new(&inst, 1.0, 0.8);
        let summary = DataSummary::from_prefix(&inst, &data, 30, 1.0).unwrap();
        let planner = Planner::new(&inst, &summary, params).unwrap();
        for sel in [RewardSelector::Total, RewardSelector::WithoutAgent(2)] {
            for est in [Estimate::Optimistic, Estimate::Pessimistic] {
                let r = planner.plan(&sel, est).unwrap();
                for h in 0..4 {
                    let alpha = truncation_alpha(&sel, 2, 1.0, h, 4).unwrap();
                    for &x in &r.q[h * 6..(h + 1) * 6] {
                        assert!((0.0..=alpha).contains(&x));
                    }
                }
                // greedy value equals the value of its own policy
                let e = planner.evaluate(&sel, est, &r.policy).unwrap();
                assert_eq!(e.v1, r.v1);
            }
        }
    }
}
