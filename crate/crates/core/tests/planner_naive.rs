//! The sufficient-statistics planner against a per-sample ridge LSVI that
//! forms and inverts each Gram matrix densely.

use proptest::prelude::*;
use vcg_core::rng::{seeded, uniform};
use vcg_core::{
    explore, index_set, plan, truncation_alpha, BetaForm, Dataset, Estimate, ExploreParams,
    InstanceTables, LinearMdpInstance, LsviParams, NoiseModel, PolicyTable, RewardSelector,
    Schedule,
};

/// Tabular dynamics with dense random features of norm at most one.
fn dense_feature_instance(s_len: usize, a_len: usize, h_len: usize, n: usize, d: usize, seed: u64) -> LinearMdpInstance {
    let mut rng = seeded(seed);
    let mut features = Vec::new();
    for _ in 0..s_len * a_len {
        let v: Vec<f64> = (0..d).map(|_| uniform(&mut rng) - 0.5).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        features.extend(v.iter().map(|x| x / norm));
    }
    let mut transitions = Vec::new();
    for _ in 0..h_len * s_len * a_len {
        let w: Vec<f64> = (0..s_len).map(|_| uniform(&mut rng) + 0.05).collect();
        let total: f64 = w.iter().sum();
        let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
        let head: f64 = row[..s_len - 1].iter().sum();
        row[s_len - 1] = 1.0 - head;
        transitions.extend(row);
    }
    let mean_rewards = (0..(n + 1) * h_len * s_len * a_len).map(|_| uniform(&mut rng)).collect();
    LinearMdpInstance::from_tables(InstanceTables {
        horizon: h_len,
        agents: n,
        r_max: 1.0,
        num_states: s_len,
        num_actions: a_len,
        initial_state: 0,
        dim: d,
        features,
        transitions,
        mean_rewards,
        noise: NoiseModel::Bernoulli,
    })
    .unwrap()
}

fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>, d: usize) -> Vec<f64> {
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))
            .unwrap();
        for k in 0..d {
            a.swap(col * d + k, piv * d + k);
        }
        b.swap(col, piv);
        for row in col + 1..d {
            let f = a[row * d + col] / a[col * d + col];
            for k in col..d {
                a[row * d + k] -= f * a[col * d + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let tail: f64 = (row + 1..d).map(|k| a[row * d + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * d + row];
    }
    x
}

struct NaivePlan {
    values: Vec<f64>,
    q: Vec<f64>,
    policy: PolicyTable,
}

fn naive_lsvi(
    inst: &LinearMdpInstance,
    data: &Dataset,
    count: usize,
    selector: &RewardSelector,
    estimate: Estimate,
    params: &LsviParams,
) -> NaivePlan {
    let (h_len, s_len, a_len, d) = (inst.horizon(), inst.num_states(), inst.num_actions(), inst.dim());
    let mask = selector.mask(inst.agents()).unwrap();
    let mut values = vec![0.0; (h_len + 1) * s_len];
    let mut q = vec![0.0; h_len * s_len * a_len];
    let mut acts = vec![0; h_len * s_len];
    for h in (0..h_len).rev() {
        let mut gram = vec![0.0; d * d];
        for k in 0..d {
            gram[k * d + k] = params.lambda;
        }
        let mut rhs = vec![0.0; d];
        for ep in &data.episodes[..count] {
            let phi = inst.feature(ep.states[h], ep.actions[h]).unwrap();
            let r: f64 = ep.step_rewards(h).iter().zip(&mask).filter(|(_, &on)| on).map(|(r, _)| r).sum();
            let y = r + values[(h + 1) * s_len + ep.states[h + 1]];
            for i in 0..d {
                rhs[i] += phi[i] * y;
                for j in 0..d {
                    gram[i * d + j] += phi[i] * phi[j];
                }
            }
        }
        let w = dense_solve(gram.clone(), rhs, d);
        let alpha = truncation_alpha(selector, inst.agents(), inst.r_max(), h, h_len).unwrap();
        for s in 0..s_len {
            let mut best = 0;
            for a in 0..a_len {
                let phi = inst.feature(s, a).unwrap();
                let z = dense_solve(gram.clone(), phi.to_vec(), d);
                let quad: f64 = phi.iter().zip(&z).map(|(x, y)| x * y).sum();
                let u = (params.beta * quad.max(0.0).sqrt()).min(params.bonus_cap);
                let f = w.iter().zip(phi).map(|(x, y)| x * y).sum::<f64>().clamp(0.0, params.bonus_cap);
                let val = match estimate {
                    Estimate::Optimistic => (f + u).min(alpha),
                    Estimate::Pessimistic => (f - u).clamp(0.0, alpha),
                };
                q[(h * s_len + s) * a_len + a] = val;
                if val > q[(h * s_len + s) * a_len + best] {
                    best = a;
                }
            }
            acts[h * s_len + s] = best;
            values[h * s_len + s] = q[(h * s_len + s) * a_len + best];
        }
    }
    NaivePlan {
        values,
        q,
        policy: PolicyTable::from_fn(h_len, s_len, |h, s| acts[h * s_len + s]),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn fast_and_naive_lsvi_agree(
        seed in any::<u64>(),
        d in 2usize..6,
        c_beta in prop_oneof![Just(0.0), Just(0.02), Just(0.3)],
        estimate in prop_oneof![Just(Estimate::Optimistic), Just(Estimate::Pessimistic)],
        drop in 0usize..3,
    ) {
        let inst = dense_feature_instance(3, 2, 3, 2, d, seed);
        let k = 40;
        let params = ExploreParams::new(&inst, k, 0.1, 1.0, c_beta, BetaForm::Agents);
        let data = explore(&inst, &params, &mut seeded(seed ^ 0xabcdef)).unwrap();
        let selector = if drop == 0 { RewardSelector::Total } else { RewardSelector::WithoutAgent(drop) };
        let t = k + 1;
        let fast = plan(&inst, &data, &selector, Schedule::Etc, estimate, t, &params.lsvi).unwrap();
        let count = *index_set(Schedule::Etc, k, t).unwrap().end();
        let slow = naive_lsvi(&inst, &data, count, &selector, estimate, &params.lsvi);
        for (a, b) in fast.q.iter().zip(&slow.q) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "q {} vs {}", a, b);
        }
        for (a, b) in fast.values.iter().zip(&slow.values) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
        // Greedy choices can only differ on near-ties.
        for h in 0..3 {
            for s in 0..3 {
                let (fa, sa) = (fast.policy.action(h, s), slow.policy.action(h, s));
                if fa != sa {
                    let row = &slow.q[(h * 3 + s) * 2..(h * 3 + s + 1) * 2];
                    prop_assert!((row[fa] - row[sa]).abs() <= 1e-8);
                }
            }
        }
    }
}
