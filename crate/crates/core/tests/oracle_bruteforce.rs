//! Exact planning against exhaustive enumeration of deterministic Markov
//! policies, evaluated by forward propagation of the state distribution.

use proptest::prelude::*;
use vcg_core::{
    exact_eval, exact_plan, make_onehot_tabular, LinearMdpInstance, PolicyTable, RewardSelector,
    TabularSpec,
};

fn forward_value(inst: &LinearMdpInstance, mask: &[bool], policy: &PolicyTable) -> f64 {
    let s_len = inst.num_states();
    let mut dist = vec![0.0; s_len];
    dist[inst.initial_state()] = 1.0;
    let mut total = 0.0;
    for h in 0..inst.horizon() {
        let mut next = vec![0.0; s_len];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let a = policy.action(h, s);
            for (i, &on) in mask.iter().enumerate() {
                if on {
                    total += mass * inst.mean_reward(i, h, s, a);
                }
            }
            for (s2, p) in inst.transition_row(h, s, a).iter().enumerate() {
                next[s2] += mass * p;
            }
        }
        dist = next;
    }
    total
}

fn all_policies(h: usize, s: usize, a: usize) -> impl Iterator<Item = PolicyTable> {
    let cells = h * s;
    let count = a.pow(cells as u32);
    (0..count).map(move |mut code| {
        let mut acts = vec![0; cells];
        for slot in acts.iter_mut() {
            *slot = code % a;
            code /= a;
        }
        PolicyTable::from_fn(h, s, |hh, ss| acts[hh * s + ss])
    })
}

fn check(inst: &LinearMdpInstance, selector: &RewardSelector) {
    let mask = selector.mask(inst.agents()).unwrap();
    let (values, policy) = exact_plan(inst, selector).unwrap();
    let v_star = values.get(0, inst.initial_state());
    let best = all_policies(inst.horizon(), inst.num_states(), inst.num_actions())
        .map(|p| forward_value(inst, &mask, &p))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((v_star - best).abs() <= 1e-12, "plan {v_star} vs brute force {best}");
    let own = forward_value(inst, &mask, &policy);
    assert!((own - v_star).abs() <= 1e-12);
    let eval = exact_eval(inst, selector, &policy).unwrap();
    assert!((eval.get(0, inst.initial_state()) - v_star).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]
    #[test]
    fn exact_plan_matches_enumeration(
        h in 1usize..=3, s in 1usize..=3, a in 1usize..=3, n in 1usize..=3, seed in any::<u64>()
    ) {
        let inst = make_onehot_tabular(&TabularSpec::new(s, a, h, n, seed)).unwrap();
        check(&inst, &RewardSelector::Total);
        check(&inst, &RewardSelector::WithoutAgent(1 + (seed as usize) % n));
    }

    #[test]
    fn exact_eval_matches_forward_propagation(
        h in 1usize..=4, s in 1usize..=4, a in 1usize..=3, seed in any::<u64>()
    ) {
        let inst = make_onehot_tabular(&TabularSpec::new(s, a, h, 2, seed)).unwrap();
        let policy = PolicyTable::from_fn(h, s, |hh, ss| (hh * 7 + ss * 3 + seed as usize) % a);
        let mask = RewardSelector::Total.mask(2).unwrap();
        let backward = exact_eval(&inst, &RewardSelector::Total, &policy).unwrap().get(0, 0);
        prop_assert!((backward - forward_value(&inst, &mask, &policy)).abs() <= 1e-12);
    }
}
