//! The exponential-utility operators `F`, `F_π`, their certainty-equivalent
//! counterpart `T`, the risk-neutral Bellman operator, and greedy extraction.
//!
//! Powers `x^γ` are evaluated as `exp(γ ln x)`. `T` uses a max-shifted
//! log-sum-exp over the successor support so that `θ‖Q‖_∞` beyond the `f64`
//! exponent range does not overflow.

use crate::error::{domain, Result};
use crate::mdp::TabularMdp;
use crate::vectors::{QVector, StationaryPolicy, UtilityVector};

fn check_len(mdp: &TabularMdp, len: usize) -> Result<()> {
    if len != mdp.num_pairs() {
        return Err(domain(format!(
            "vector has length {len}, MDP has {} state-action pairs",
            mdp.num_pairs()
        )));
    }
    Ok(())
}

fn check_positive(mdp: &TabularMdp, x: &[f64]) -> Result<()> {
    check_len(mdp, x.len())?;
    match x.iter().position(|v| !(*v > 0.0)) {
        Some(i) => Err(domain(format!(
            "x[{i}] = {} is not strictly positive",
            x[i]
        ))),
        None => Ok(()),
    }
}

fn check_finite(mdp: &TabularMdp, q: &[f64]) -> Result<()> {
    check_len(mdp, q.len())?;
    match q.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(domain(format!("q[{i}] = {} is not finite", q[i]))),
        None => Ok(()),
    }
}

/// `[min_a x(s, a)]^γ` for every state.
fn min_powered(mdp: &TabularMdp, x: &[f64]) -> Vec<f64> {
    let gamma = mdp.discount();
    x.chunks(mdp.num_actions())
        .map(|row| {
            let m = row.iter().copied().fold(f64::INFINITY, f64::min);
            (gamma * m.ln()).exp()
        })
        .collect()
}

fn state_max(mdp: &TabularMdp, q: &[f64]) -> Vec<f64> {
    q.chunks(mdp.num_actions())
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Sums `P(s'|s,a) * per_state[s']` and scales by `exp(−θ̂ r(s, a))`.
fn discounted_expectation(mdp: &TabularMdp, per_state: &[f64]) -> Vec<f64> {
    let theta_hat = mdp.risk_hat();
    let mut out = Vec::with_capacity(mdp.num_pairs());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let expectation: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(per_state)
                .map(|(p, v)| p * v)
                .sum();
            out.push((-theta_hat * mdp.reward(s, a)).exp() * expectation);
        }
    }
    out
}

/// Optimality operator `F(x)(s,a) = exp(−θ̂ r(s,a)) Σ_{s'} P(s'|s,a) [min_{a'} x(s',a')]^γ`.
pub fn apply_f(mdp: &TabularMdp, x: &[f64]) -> Result<UtilityVector> {
    check_positive(mdp, x)?;
    let powered = min_powered(mdp, x);
    Ok(UtilityVector::from_vec_unchecked(discounted_expectation(
        mdp, &powered,
    )))
}

/// Policy operator `F_π(x)(s,a) = exp(−θ̂ r(s,a)) Σ_{s',a'} P(s'|s,a) π(a'|s') x(s',a')^γ`.
pub fn apply_f_pi(mdp: &TabularMdp, pi: &StationaryPolicy, x: &[f64]) -> Result<UtilityVector> {
    check_positive(mdp, x)?;
    check_policy(mdp, pi)?;
    let gamma = mdp.discount();
    let per_state: Vec<f64> = x
        .chunks(mdp.num_actions())
        .enumerate()
        .map(|(s, row)| {
            row.iter()
                .zip(pi.row(s))
                .map(|(v, p)| {
                    if *p == 0.0 {
                        0.0
                    } else {
                        p * (gamma * v.ln()).exp()
                    }
                })
                .sum()
        })
        .collect();
    Ok(UtilityVector::from_vec_unchecked(discounted_expectation(
        mdp, &per_state,
    )))
}

pub(crate) fn check_policy(mdp: &TabularMdp, pi: &StationaryPolicy) -> Result<()> {
    if pi.num_states() != mdp.num_states() || pi.num_actions() != mdp.num_actions() {
        return Err(domain(format!(
            "policy shape {}x{} does not match MDP shape {}x{}",
            pi.num_states(),
            pi.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    Ok(())
}

/// `ln F(x)` computed from `ln x`, without ever forming `x`.
///
/// Used by the solvers when `C_u` is beyond the `f64` range.
pub fn apply_f_log(mdp: &TabularMdp, log_x: &[f64]) -> Result<Vec<f64>> {
    check_finite(mdp, log_x)?;
    let gamma = mdp.discount();
    let per_state: Vec<f64> = log_x
        .chunks(mdp.num_actions())
        .map(|row| gamma * row.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let theta_hat = mdp.risk_hat();
    let mut out = Vec::with_capacity(mdp.num_pairs());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let lse = log_sum_exp(mdp.transition_row(s, a), &per_state);
            out.push(-theta_hat * mdp.reward(s, a) + lse);
        }
    }
    Ok(out)
}

/// `ln F_π(x)` computed from `ln x`.
pub fn apply_f_pi_log(mdp: &TabularMdp, pi: &StationaryPolicy, log_x: &[f64]) -> Result<Vec<f64>> {
    check_finite(mdp, log_x)?;
    check_policy(mdp, pi)?;
    let gamma = mdp.discount();
    let per_state: Vec<f64> = log_x
        .chunks(mdp.num_actions())
        .enumerate()
        .map(|(s, row)| {
            let scaled: Vec<f64> = row.iter().map(|v| gamma * v).collect();
            log_sum_exp(pi.row(s), &scaled)
        })
        .collect();
    let theta_hat = mdp.risk_hat();
    let mut out = Vec::with_capacity(mdp.num_pairs());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            out.push(
                -theta_hat * mdp.reward(s, a) + log_sum_exp(mdp.transition_row(s, a), &per_state),
            );
        }
    }
    Ok(out)
}

/// `ln Σ_i w_i exp(z_i)` over the support `w_i > 0`, shifted by the largest `z_i`.
fn log_sum_exp(weights: &[f64], z: &[f64]) -> f64 {
    let shift = weights
        .iter()
        .zip(z)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = weights
        .iter()
        .zip(z)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, v)| w * (v - shift).exp())
        .sum();
    shift + sum.ln()
}

/// Certainty-equivalent operator
/// `T(Q)(s,a) = r(s,a) − (γ/θ) ln Σ_{s'} P(s'|s,a) exp(−θ max_{a'} Q(s',a'))`.
pub fn apply_t(mdp: &TabularMdp, q: &[f64]) -> Result<QVector> {
    check_finite(mdp, q)?;
    let theta = mdp.risk();
    let scale = mdp.discount() / theta;
    let exponents: Vec<f64> = state_max(mdp, q).into_iter().map(|m| -theta * m).collect();
    let mut out = Vec::with_capacity(mdp.num_pairs());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let lse = log_sum_exp(mdp.transition_row(s, a), &exponents);
            out.push(mdp.reward(s, a) - scale * lse);
        }
    }
    Ok(QVector::from_vec_unchecked(out))
}

/// Classical `r(s,a) + γ Σ_{s'} P(s'|s,a) max_{a'} Q(s',a')`.
pub fn apply_bellman_risk_neutral(mdp: &TabularMdp, q: &[f64]) -> Result<QVector> {
    check_finite(mdp, q)?;
    let gamma = mdp.discount();
    let v = state_max(mdp, q);
    let mut out = Vec::with_capacity(mdp.num_pairs());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let ev: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(&v)
                .map(|(p, v)| p * v)
                .sum();
            out.push(mdp.reward(s, a) + gamma * ev);
        }
    }
    Ok(QVector::from_vec_unchecked(out))
}

/// `Q = −(γ/θ) ln x`.
pub fn x_to_q(mdp: &TabularMdp, x: &[f64]) -> Result<QVector> {
    check_positive(mdp, x)?;
    let scale = mdp.discount() / mdp.risk();
    QVector::new(x.iter().map(|v| -scale * v.ln()).collect())
}

/// `Q = −(γ/θ) ln x` from log-utilities.
pub fn log_x_to_q(mdp: &TabularMdp, log_x: &[f64]) -> Result<QVector> {
    check_finite(mdp, log_x)?;
    let scale = mdp.discount() / mdp.risk();
    QVector::new(log_x.iter().map(|v| -scale * v).collect())
}

/// `x = exp(−(θ/γ) Q)`; fails if an entry leaves the `f64` range.
pub fn q_to_x(mdp: &TabularMdp, q: &[f64]) -> Result<UtilityVector> {
    check_finite(mdp, q)?;
    let theta_hat = mdp.risk_hat();
    UtilityVector::new(q.iter().map(|v| (-theta_hat * v).exp()).collect())
}

fn select_per_state(
    values: &[f64],
    num_actions: usize,
    better: impl Fn(f64, f64) -> bool,
) -> Vec<usize> {
    values
        .chunks(num_actions)
        .map(|row| {
            let mut best = 0;
            for (a, &v) in row.iter().enumerate().skip(1) {
                if better(v, row[best]) {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Lowest-index minimizing action per state.
pub fn greedy_actions_from_x(x: &[f64], num_actions: usize) -> Vec<usize> {
    select_per_state(x, num_actions, |v, best| v < best)
}

/// Lowest-index maximizing action per state.
pub fn greedy_actions_from_q(q: &[f64], num_actions: usize) -> Vec<usize> {
    select_per_state(q, num_actions, |v, best| v > best)
}

pub fn greedy_policy_from_x(x: &[f64], num_actions: usize) -> Result<StationaryPolicy> {
    if num_actions == 0 || x.is_empty() || x.len() % num_actions != 0 {
        return Err(domain(format!(
            "length {} is not a multiple of {num_actions}",
            x.len()
        )));
    }
    StationaryPolicy::deterministic(&greedy_actions_from_x(x, num_actions), num_actions)
}

pub fn greedy_policy_from_q(q: &[f64], num_actions: usize) -> Result<StationaryPolicy> {
    if num_actions == 0 || q.is_empty() || q.len() % num_actions != 0 {
        return Err(domain(format!(
            "length {} is not a multiple of {num_actions}",
            q.len()
        )));
    }
    StationaryPolicy::deterministic(&greedy_actions_from_q(q, num_actions), num_actions)
}
