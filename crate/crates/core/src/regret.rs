//! Expected-value regret accounting against the Markov VCG benchmark.
//!
//! Every executed policy is evaluated exactly under the true means, so the
//! algebraic relations between welfare, seller and agent regrets hold up to
//! floating-point error.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::bail_arg;
use crate::instance::LinearMdpInstance;
use crate::mechanism::{MechanismConfig, Phase, ReportingStrategy, RoundRecord, RunLog};
use crate::oracle::{per_agent_values, VcgBenchmark};
use crate::policy::PolicyTable;
use crate::rng::{uniform, SimRng};
use rand_core::RngCore;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRegret {
    pub t: usize,
    pub phase: Phase,
    /// `V_1*(x_1; R) − V_1^{π_t}(x_1; R)`
    pub reg_w: f64,
    /// `u_{0*} − u_{0t}`
    pub reg_0: f64,
    /// `u_{i*} − u_{it}` for agents `1..=n`.
    pub reg_agents: Vec<f64>,
    /// `u_{it} = V_1^{π_t}(x_1; r_i) − p_{it}`
    pub utilities: Vec<f64>,
    /// `u_{0t} = V_1^{π_t}(x_1; r_0) + Σ_i p_{it}`
    pub seller_utility: f64,
    pub prices: Vec<f64>,
    /// `Z` computed over rounds `1..=t`.
    pub z_running: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub rounds: Vec<RoundRegret>,
    pub agents: usize,
    /// `Reg_T^W`
    pub welfare: f64,
    /// `Reg_{0T}`
    pub seller: f64,
    /// `Reg_{iT}`
    pub agent: Vec<f64>,
    /// `Reg_T^♯ = Σ_i Reg_{iT}`
    pub sharp: f64,
    pub y: f64,
    pub z: f64,
    /// `U_{iT} = Σ_t u_{it}`
    pub agent_utility: Vec<f64>,
    /// `U_{0T}`
    pub seller_utility: f64,
    /// Mean price per round and agent over all `T` rounds.
    pub mean_price: f64,
}

impl RegretReport {
    pub fn horizon_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// `|Reg^♯ − n Reg^W − T Z|`
    pub fn sharp_residual(&self) -> f64 {
        let t = self.rounds.len() as f64;
        (self.sharp - self.agents as f64 * self.welfare - t * self.z).abs()
    }

    /// `|Reg_0 + (n − 1) Reg^W + T Z|`
    pub fn seller_residual(&self) -> f64 {
        let t = self.rounds.len() as f64;
        (self.seller + (self.agents as f64 - 1.0) * self.welfare + t * self.z).abs()
    }
}

pub fn compute_regrets(
    log: &RunLog,
    benchmark: &VcgBenchmark,
    instance: &LinearMdpInstance,
) -> Result<RegretReport> {
    let digest = instance.digest();
    if benchmark.instance_digest != digest || log.instance_digest != digest {
        bail_arg!("run log, benchmark and instance do not describe the same instance");
    }
    let n = instance.agents();
    if log.agents != n || benchmark.agents.len() != n {
        bail_arg!("agent count mismatch between run log, benchmark and instance");
    }
    let v_star = benchmark.optimal_welfare;
    let sum_without = benchmark.sum_value_without();

    let mut cache: BTreeMap<usize, (Vec<f64>, f64)> = BTreeMap::new();
    let mut rounds = Vec::with_capacity(log.rounds.len());
    let mut agent = vec![0.0; n];
    let mut agent_utility = vec![0.0; n];
    let (mut welfare, mut seller, mut seller_utility) = (0.0, 0.0, 0.0);
    let mut y_sum = 0.0;
    let mut price_sum = 0.0;

    for (k, rec) in log.rounds.iter().enumerate() {
        if rec.t != k + 1 {
            bail_arg!("round {} out of order (expected {})", rec.t, k + 1);
        }
        if rec.prices.len() != n {
            bail_arg!("round {} has {} prices, expected {n}", rec.t, rec.prices.len());
        }
        let Some(policy) = log.policies.get(rec.policy) else {
            bail_arg!("round {} references unknown policy {}", rec.t, rec.policy);
        };
        if !cache.contains_key(&rec.policy) {
            if policy.horizon() != instance.horizon()
                || policy.num_states() != instance.num_states()
                || policy.actions().iter().any(|&a| a >= instance.num_actions())
            {
                bail_arg!("policy {} does not fit the instance", rec.policy);
            }
            let values = per_agent_values(instance, policy);
            let total: f64 = values.iter().sum();
            cache.insert(rec.policy, (values, total));
        }
        let (values, total) = &cache[&rec.policy];
        let total = *total;

        let reg_w = v_star - total;
        let price_total: f64 = rec.prices.iter().sum();
        let u0 = values[0] + price_total;
        let reg_0 = benchmark.seller_utility - u0;
        let mut reg_agents = Vec::with_capacity(n);
        let mut utilities = Vec::with_capacity(n);
        for i in 0..n {
            let u = values[i + 1] - rec.prices[i];
            let r = benchmark.agents[i].utility - u;
            agent[i] += r;
            agent_utility[i] += u;
            reg_agents.push(r);
            utilities.push(u);
            y_sum += rec.prices[i] + (total - values[i + 1]);
        }
        welfare += reg_w;
        seller += reg_0;
        seller_utility += u0;
        price_sum += price_total;
        rounds.push(RoundRegret {
            t: rec.t,
            phase: rec.phase,
            reg_w,
            reg_0,
            reg_agents,
            utilities,
            seller_utility: u0,
            prices: rec.prices.clone(),
            z_running: y_sum / rec.t as f64 - sum_without,
        });
    }

    let t_len = log.rounds.len().max(1) as f64;
    let y = y_sum / t_len;
    Ok(RegretReport {
        rounds,
        agents: n,
        welfare,
        seller,
        sharp: agent.iter().sum(),
        agent,
        y,
        z: y - sum_without,
        agent_utility,
        seller_utility,
        mean_price: if n == 0 { 0.0 } else { price_sum / (t_len * n as f64) },
    })
}

/// A run log with uniformly random policies and prices in `[-2, 2]`, for
/// exercising the accounting without running the mechanism.
pub fn synthetic_log(instance: &LinearMdpInstance, total: usize, rng: &mut SimRng) -> RunLog {
    let (n, h_len, s_len, a_len) = (
        instance.agents(),
        instance.horizon(),
        instance.num_states(),
        instance.num_actions(),
    );
    let pool = 1 + (rng.next_u32() as usize) % 4;
    let policies: Vec<PolicyTable> = (0..pool)
        .map(|_| PolicyTable::from_fn(h_len, s_len, |_, _| rng.next_u32() as usize % a_len))
        .collect();
    let explore = (rng.next_u32() as usize) % (total + 1);
    let rounds = (1..=total)
        .map(|t| {
            let phase = if t <= explore { Phase::Explore } else { Phase::Exploit };
            let prices: Vec<f64> = (0..n)
                .map(|_| if phase == Phase::Explore { 0.0 } else { 4.0 * uniform(rng) - 2.0 })
                .collect();
            RoundRecord {
                t,
                phase,
                policy: rng.next_u32() as usize % pool,
                states: vec![instance.initial_state(); h_len + 1],
                actions: vec![0; h_len],
                true_rewards: vec![0.0; h_len * (n + 1)],
                reported_rewards: vec![0.0; h_len * (n + 1)],
                fictitious_values: prices.clone(),
                deployed_values: vec![0.0; n],
                prices,
                dataset_size: 0,
            }
        })
        .collect();
    RunLog {
        config: MechanismConfig {
            allow_all_exploration: true,
            ..MechanismConfig::new(total, 0)
        },
        strategies: vec![ReportingStrategy::Truthful; n],
        agents: n,
        horizon: h_len,
        explore_rounds: explore,
        beta: 0.0,
        bonus_cap: 0.0,
        instance_digest: instance.digest(),
        policies,
        rounds,
    }
}

/// Least-squares fit of `log regret = slope · log T + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Points dropped because their regret was not positive.
    pub dropped: usize,
}

pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, r)| *t > 0.0 && *r > 0.0 && r.is_finite())
        .map(|&(t, r)| (libm::log(t), libm::log(r)))
        .collect();
    let dropped = points.len() - logs.len();
    if logs.len() < 3 {
        bail_arg!("need at least 3 positive points to fit an exponent, got {}", logs.len());
    }
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        bail_arg!("exponent fit needs at least two distinct T values");
    }
    let slope = sxy / sxx;
    Ok(ExponentFit {
        slope,
        intercept: my - slope * mx,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{make_onehot_tabular, TabularSpec};
    use crate::oracle::vcg_benchmark;

    fn log_playing(
        inst: &LinearMdpInstance,
        policies: Vec<PolicyTable>,
        plays: &[(usize, Vec<f64>)],
    ) -> RunLog {
        let n = inst.agents();
        let h = inst.horizon();
        RunLog {
            config: MechanismConfig::new(plays.len() + 1, 0),
            strategies: vec![ReportingStrategy::Truthful; n],
            agents: n,
            horizon: h,
            explore_rounds: 0,
            beta: 0.0,
            bonus_cap: 0.0,
            instance_digest: inst.digest(),
            policies,
            rounds: plays
                .iter()
                .enumerate()
                .map(|(k, (p, prices))| RoundRecord {
                    t: k + 1,
                    phase: Phase::Exploit,
                    policy: *p,
                    states: vec![0; h + 1],
                    actions: vec![0; h],
                    true_rewards: vec![0.0; h * (n + 1)],
                    reported_rewards: vec![0.0; h * (n + 1)],
                    prices: prices.clone(),
                    fictitious_values: vec![0.0; n],
                    deployed_values: vec![0.0; n],
                    dataset_size: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn benchmark_play_has_zero_regret() {
        let inst = make_onehot_tabular(&TabularSpec::new(3, 2, 3, 2, 1)).unwrap();
        let b = vcg_benchmark(&inst).unwrap();
        let prices: Vec<f64> = b.agents.iter().map(|a| a.price).collect();
        let plays: Vec<_> = (0..5).map(|_| (0, prices.clone())).collect();
        let log = log_playing(&inst, vec![b.optimal_policy.clone()], &plays);
        let rep = compute_regrets(&log, &b, &inst).unwrap();
        assert!(rep.welfare.abs() < 1e-12);
        assert!(rep.seller.abs() < 1e-12);
        assert!(rep.agent.iter().all(|r| r.abs() < 1e-12));
        assert!(rep.z.abs() < 1e-12);
    }

    #[test]
    fn exploration_only_log() {
        let inst = make_onehot_tabular(&TabularSpec::new(2, 2, 2, 2, 3)).unwrap();
        let b = vcg_benchmark(&inst).unwrap();
        let pol = PolicyTable::constant(2, 2, 1);
        let own = per_agent_values(&inst, &pol);
        let log = log_playing(&inst, vec![pol], &[(0, vec![0.0, 0.0])]);
        let rep = compute_regrets(&log, &b, &inst).unwrap();
        for i in 0..2 {
            assert!((rep.rounds[0].reg_agents[i] - (b.agents[i].utility - own[i + 1])).abs() < 1e-12);
        }
        assert!(rep.sharp_residual() < 1e-9 && rep.seller_residual() < 1e-9);
    }

    #[test]
    fn welfare_accounting_per_round() {
        let inst = make_onehot_tabular(&TabularSpec::new(2, 3, 3, 3, 8)).unwrap();
        let b = vcg_benchmark(&inst).unwrap();
        let pols = vec![PolicyTable::constant(3, 2, 0), PolicyTable::constant(3, 2, 2)];
        let log = log_playing(
            &inst,
            pols.clone(),
            &[(0, vec![0.3, -0.1, 0.7]), (1, vec![1.0, 2.0, 0.0])],
        );
        let rep = compute_regrets(&log, &b, &inst).unwrap();
        for r in &rep.rounds {
            let total: f64 = per_agent_values(&inst, &pols[log.rounds[r.t - 1].policy]).iter().sum();
            let acc = r.seller_utility + r.utilities.iter().sum::<f64>();
            assert!((acc - total).abs() < 1e-12);
        }
        assert!((rep.rounds[1].z_running - rep.z).abs() < 1e-12);
    }

    #[test]
    fn mismatched_instance_is_rejected() {
        let a = make_onehot_tabular(&TabularSpec::new(2, 2, 2, 1, 3)).unwrap();
        let other = make_onehot_tabular(&TabularSpec::new(2, 2, 2, 1, 4)).unwrap();
        let b = vcg_benchmark(&other).unwrap();
        let log = log_playing(&a, vec![PolicyTable::constant(2, 2, 0)], &[(0, vec![0.0])]);
        assert!(compute_regrets(&log, &b, &a).is_err());
        let mut bad = log.clone();
        bad.rounds[0].policy = 4;
        assert!(compute_regrets(&bad, &vcg_benchmark(&a).unwrap(), &a).is_err());
    }

    #[test]
    fn exponent_fits() {
        let pts: Vec<_> = [1e3, 1e4, 1e5].iter().map(|&t: &f64| (t, 7.0 * t.powf(2.0 / 3.0))).collect();
        assert!((fit_exponent(&pts).unwrap().slope - 2.0 / 3.0).abs() < 1e-9);
        let lin: Vec<_> = [10.0, 100.0, 1000.0].iter().map(|&t| (t, 3.0 * t)).collect();
        assert!((fit_exponent(&lin).unwrap().slope - 1.0).abs() < 1e-12);
        let mut with_bad = lin.clone();
        with_bad.push((5.0, 0.0));
        assert_eq!(fit_exponent(&with_bad).unwrap().dropped, 1);
        assert!(fit_exponent(&lin[..2]).is_err());
    }
}
