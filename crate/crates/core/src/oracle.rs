//! Exact finite-horizon dynamic programming with known transitions and mean
//! rewards, and the Markov VCG benchmark built from it.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::bail_arg;
use crate::exploitation::RewardSelector;
use crate::instance::LinearMdpInstance;
use crate::policy::{argmax, PolicyTable};
use crate::Result;

/// `V_h(s)` for `h in 0..=H`; row `H` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub horizon: usize,
    pub num_states: usize,
    pub values: Vec<f64>,
}

impl ValueTable {
    pub fn get(&self, h: usize, s: usize) -> f64 {
        self.values[h * self.num_states + s]
    }
}

fn selected_mean(inst: &LinearMdpInstance, mask: &[bool], h: usize, s: usize, a: usize) -> f64 {
    mask.iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| inst.mean_reward(i, h, s, a))
        .sum()
}

fn backup(inst: &LinearMdpInstance, mask: &[bool], next: &[f64], h: usize, s: usize, a: usize) -> f64 {
    let expected: f64 = inst
        .transition_row(h, s, a)
        .iter()
        .zip(next)
        .map(|(p, v)| p * v)
        .sum();
    selected_mean(inst, mask, h, s, a) + expected
}

/// Backward induction; ties go to the lowest action index.
pub fn exact_plan(
    instance: &LinearMdpInstance,
    selector: &RewardSelector,
) -> Result<(ValueTable, PolicyTable)> {
    let mask = selector.mask(instance.agents())?;
    let (h_len, s_len, a_len) = (instance.horizon(), instance.num_states(), instance.num_actions());
    let mut values = vec![0.0; (h_len + 1) * s_len];
    let mut actions = vec![0usize; h_len * s_len];
    let mut q = vec![0.0; a_len];
    for h in (0..h_len).rev() {
        let (head, tail) = values.split_at_mut((h + 1) * s_len);
        for s in 0..s_len {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = backup(instance, &mask, &tail[..s_len], h, s, a);
            }
            let best = argmax(&q);
            actions[h * s_len + s] = best;
            head[h * s_len + s] = q[best];
        }
    }
    Ok((
        ValueTable {
            horizon: h_len,
            num_states: s_len,
            values,
        },
        PolicyTable::from_fn(h_len, s_len, |h, s| actions[h * s_len + s]),
    ))
}

/// Exact value of a deterministic policy.
pub fn exact_eval(
    instance: &LinearMdpInstance,
    selector: &RewardSelector,
    policy: &PolicyTable,
) -> Result<ValueTable> {
    let mask = selector.mask(instance.agents())?;
    let (h_len, s_len) = (instance.horizon(), instance.num_states());
    if policy.horizon() != h_len || policy.num_states() != s_len {
        bail_arg!("policy table shape does not match the instance");
    }
    if policy.actions().iter().any(|&a| a >= instance.num_actions()) {
        bail_arg!("policy selects an out-of-range action");
    }
    let mut values = vec![0.0; (h_len + 1) * s_len];
    for h in (0..h_len).rev() {
        let (head, tail) = values.split_at_mut((h + 1) * s_len);
        for s in 0..s_len {
            head[h * s_len + s] = backup(instance, &mask, &tail[..s_len], h, s, policy.action(h, s));
        }
    }
    Ok(ValueTable {
        horizon: h_len,
        num_states: s_len,
        values,
    })
}

/// Initial-state values of one policy under each single reward stream
/// `r_0..=r_n` (one backward pass).
pub fn per_agent_values(instance: &LinearMdpInstance, policy: &PolicyTable) -> Vec<f64> {
    let width = instance.agents() + 1;
    let (h_len, s_len) = (instance.horizon(), instance.num_states());
    let mut next = vec![0.0; s_len * width];
    let mut cur = vec![0.0; s_len * width];
    for h in (0..h_len).rev() {
        for s in 0..s_len {
            let a = policy.action(h, s);
            let row = instance.transition_row(h, s, a);
            for i in 0..width {
                let expected: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(s2, p)| p * next[s2 * width + i])
                    .sum();
                cur[s * width + i] = instance.mean_reward(i, h, s, a) + expected;
            }
        }
        core::mem::swap(&mut next, &mut cur);
    }
    let x1 = instance.initial_state();
    next[x1 * width..(x1 + 1) * width].to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBenchmark {
    /// Optimal policy without agent `i`'s reward.
    pub policy_without: PolicyTable,
    /// `V_1^{π*⁻ⁱ}(x_1; R⁻ⁱ)`
    pub value_without: f64,
    /// `V_1^{π*}(x_1; R⁻ⁱ)`
    pub others_at_optimum: f64,
    /// `V_1^{π*}(x_1; r_i)`
    pub own_value: f64,
    /// Clarke pivot price `p_{i*}`.
    pub price: f64,
    /// `u_{i*} = V_1*(x_1; R) − V_1^{π*⁻ⁱ}(x_1; R⁻ⁱ)`
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcgBenchmark {
    pub instance_digest: u64,
    /// `V_1*(x_1; R)`
    pub optimal_welfare: f64,
    pub optimal_policy: PolicyTable,
    /// `V_1^{π*}(x_1; r_0)`
    pub seller_value: f64,
    /// `u_{0*}`
    pub seller_utility: f64,
    pub agents: Vec<AgentBenchmark>,
}

impl VcgBenchmark {
    /// `Σ_i V_1^{π*⁻ⁱ}(x_1; R⁻ⁱ)`
    pub fn sum_value_without(&self) -> f64 {
        self.agents.iter().map(|a| a.value_without).sum()
    }
}

pub fn vcg_benchmark(instance: &LinearMdpInstance) -> Result<VcgBenchmark> {
    let x1 = instance.initial_state();
    let n = instance.agents();
    let (star_values, pi_star) = exact_plan(instance, &RewardSelector::Total)?;
    let v_star = star_values.get(0, x1);
    let own = per_agent_values(instance, &pi_star);
    let mut agents = Vec::with_capacity(n);
    for i in 1..=n {
        let sel = RewardSelector::WithoutAgent(i);
        let (values_without, policy_without) = exact_plan(instance, &sel)?;
        let value_without = values_without.get(0, x1);
        let others_at_optimum = exact_eval(instance, &sel, &pi_star)?.get(0, x1);
        agents.push(AgentBenchmark {
            policy_without,
            value_without,
            others_at_optimum,
            own_value: own[i],
            price: value_without - others_at_optimum,
            utility: v_star - value_without,
        });
    }
    let sum_without: f64 = agents.iter().map(|a| a.value_without).sum();
    Ok(VcgBenchmark {
        instance_digest: instance.digest(),
        optimal_welfare: v_star,
        optimal_policy: pi_star,
        seller_value: own[0],
        seller_utility: sum_without - (n as f64 - 1.0) * v_star,
        agents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{
        make_hard_instance, make_onehot_tabular, HardVariant, InstanceTables, NoiseModel,
        TabularSpec,
    };

    fn two_arm() -> LinearMdpInstance {
        // H = 1, one state, agent 1 carries all reward: means 0.2 and 0.8.
        LinearMdpInstance::from_tables(InstanceTables {
            horizon: 1,
            agents: 1,
            r_max: 1.0,
            num_states: 1,
            num_actions: 2,
            initial_state: 0,
            dim: 2,
            features: vec![1.0, 0.0, 0.0, 1.0],
            transitions: vec![1.0, 1.0],
            mean_rewards: vec![0.0, 0.0, 0.2, 0.8],
            noise: NoiseModel::Deterministic,
        })
        .unwrap()
    }

    #[test]
    fn two_policy_enumeration() {
        let inst = two_arm();
        let (v, pi) = exact_plan(&inst, &RewardSelector::Total).unwrap();
        assert_eq!(v.get(0, 0), 0.8);
        assert_eq!(pi.action(0, 0), 1);
        let worst = exact_eval(&inst, &RewardSelector::Total, &PolicyTable::constant(1, 1, 0)).unwrap();
        assert_eq!(worst.get(0, 0), 0.2);
        let self_eval = exact_eval(&inst, &RewardSelector::Total, &pi).unwrap();
        assert_eq!(self_eval, v);
    }

    #[test]
    fn zero_reward_instance() {
        let mut inst = make_hard_instance(2, 3, 4, HardVariant::Theta0, NoiseModel::Bernoulli).unwrap();
        let tables = InstanceTables {
            horizon: inst.horizon(),
            agents: inst.agents(),
            r_max: 1.0,
            num_states: inst.num_states(),
            num_actions: inst.num_actions(),
            initial_state: 0,
            dim: inst.dim(),
            features: (0..inst.num_states())
                .flat_map(|s| (0..4).map(move |a| (s, a)))
                .flat_map(|(s, a)| inst.feature(s, a).unwrap().to_vec())
                .collect(),
            transitions: (0..3)
                .flat_map(|h| (0..5).flat_map(move |s| (0..4).map(move |a| (h, s, a))))
                .flat_map(|(h, s, a)| inst.transition_row(h, s, a).to_vec())
                .collect(),
            mean_rewards: vec![0.0; 3 * 3 * 5 * 4],
            noise: NoiseModel::Bernoulli,
        };
        inst = LinearMdpInstance::from_tables(tables).unwrap();
        for sel in [RewardSelector::Total, RewardSelector::WithoutAgent(1)] {
            assert_eq!(exact_plan(&inst, &sel).unwrap().0.get(0, 0), 0.0);
        }
    }

    #[test]
    fn hard_theta0_closed_forms() {
        let n = 3;
        let inst = make_hard_instance(n, 2, 5, HardVariant::Theta0, NoiseModel::Bernoulli).unwrap();
        let (v, _) = exact_plan(&inst, &RewardSelector::Total).unwrap();
        assert!((v.get(0, 0) - 1.5).abs() < 1e-12);
        // choosing b_1 at x_0 then anything
        let b1 = PolicyTable::constant(2, n + 3, 0);
        let val = exact_eval(&inst, &RewardSelector::Total, &b1).unwrap().get(0, 0);
        assert!((val - (n as f64 - 1.0) * 1.0 / 2.0).abs() < 1e-12);
        let bench = vcg_benchmark(&inst).unwrap();
        for a in &bench.agents {
            assert!(a.price.abs() < 1e-12);
        }
    }

    #[test]
    fn hard_theta1_price() {
        let inst = make_hard_instance(
            3,
            3,
            5,
            HardVariant::Theta1 { delta: 0.1 },
            NoiseModel::Bernoulli,
        )
        .unwrap();
        let bench = vcg_benchmark(&inst).unwrap();
        for a in &bench.agents {
            assert!((a.value_without - 2.4).abs() < 1e-12);
            assert!((a.price - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn benchmark_accounting_and_rationality() {
        for seed in 0..30 {
            let inst = make_onehot_tabular(&TabularSpec {
                r_max: 1.5,
                ..TabularSpec::new(3, 3, 3, 3, seed)
            })
            .unwrap();
            let b = vcg_benchmark(&inst).unwrap();
            let total: f64 = b.seller_utility + b.agents.iter().map(|a| a.utility).sum::<f64>();
            assert!((total - b.optimal_welfare).abs() < 1e-12);
            for a in &b.agents {
                assert!(a.price >= -1e-12);
                assert!(a.utility >= -1e-12);
                assert!((a.utility - (a.own_value - a.price)).abs() < 1e-12);
            }
            assert!((b.seller_utility - (b.seller_value + b.agents.iter().map(|a| a.price).sum::<f64>())).abs() < 1e-12);
        }
    }
}
