//! Canonical and randomly generated MDPs.

use crate::error::{domain, Result};
use crate::mdp::TabularMdp;
use crate::rng::StreamRng;

pub const STATE_S: usize = 0;
pub const STATE_S_BAR: usize = 1;
pub const ACTION_SAFE: usize = 0;
pub const ACTION_RISK: usize = 1;

/// The two-state safe/risk example with `γ = 0.9`, `θ = 0.1`.
///
/// State 0 (`s`) offers `safe` (reward 0, self-loop) and `risk` (reward 1,
/// falls into state 1 with probability 0.01). State 1 (`s̄`) is absorbing with
/// reward −10; it has a single real action, duplicated into both action slots
/// so the action count stays uniform.
pub fn two_state_risky_fixture() -> TabularMdp {
    TabularMdp::new(
        vec![
            vec![vec![1.0, 0.0], vec![0.99, 0.01]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ],
        vec![vec![0.0, 1.0], vec![-10.0, -10.0]],
        0.9,
        0.1,
    )
    .expect("fixture shape is consistent")
}

/// Random MDP with strictly positive transition probabilities.
///
/// Each row is a normalized vector of draws from `U[0.05, 1.05)`, so every
/// entry is at least `0.05 / (1.05 S)` and any fully supported behavior policy
/// induces an irreducible chain. Rewards are uniform on `reward_range`.
/// Draws come from stream 0 of `seed`, rows first in `(s, a, s')` order, then
/// rewards in `(s, a)` order.
pub fn random_mdp(
    num_states: usize,
    num_actions: usize,
    reward_range: (f64, f64),
    discount: f64,
    risk: f64,
    seed: u64,
) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(domain("random_mdp needs at least one state and one action"));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(domain(format!("discount {discount} is not in [0, 1)")));
    }
    if !(risk > 0.0 && risk.is_finite()) {
        return Err(domain(format!("risk {risk} must be positive and finite")));
    }
    let (lo, hi) = reward_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(domain(format!("reward range ({lo}, {hi}) is invalid")));
    }

    let mut rng = StreamRng::new(seed, 0);
    let transitions = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| {
                    let raw: Vec<f64> = (0..num_states)
                        .map(|_| rng.uniform_in(0.05, 1.05))
                        .collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter().map(|w| w / total).collect()
                })
                .collect()
        })
        .collect();
    let rewards = (0..num_states)
        .map(|_| (0..num_actions).map(|_| rng.uniform_in(lo, hi)).collect())
        .collect();
    TabularMdp::new(transitions, rewards, discount, risk)
}

/// Single-state, single-action MDP with reward `reward`; handy for closed forms.
pub fn single_state_mdp(reward: f64, discount: f64, risk: f64) -> TabularMdp {
    TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![reward]], discount, risk)
        .expect("1x1 shape is consistent")
}
