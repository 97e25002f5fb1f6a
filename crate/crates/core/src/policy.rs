use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Deterministic nonstationary policy over a finite state space, tabulated as
/// one action per `(step, state)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyTable {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl PolicyTable {
    pub fn from_fn(horizon: usize, num_states: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let mut actions = Vec::with_capacity(horizon * num_states);
        for h in 0..horizon {
            for s in 0..num_states {
                actions.push(f(h, s));
            }
        }
        PolicyTable {
            horizon,
            num_states,
            actions,
        }
    }

    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self::from_fn(horizon, num_states, |_, _| action)
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.num_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub(crate) fn from_raw(horizon: usize, num_states: usize, actions: Vec<usize>) -> Self {
        debug_assert_eq!(actions.len(), horizon * num_states);
        PolicyTable {
            horizon,
            num_states,
            actions,
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
