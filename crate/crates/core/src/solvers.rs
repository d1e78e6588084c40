//! Exact fixed points of `F`, `T` and `F_π` by Picard iteration, a brute-force
//! optimality oracle over deterministic policies, and a Monte-Carlo estimator
//! of policy utilities.
//!
//! Iteration stops once the successive difference `δ` satisfies
//! `δ ≤ tol (1 − γ) / γ`. For a `γ`-contraction this certifies that the
//! returned iterate is within `tol` of the true fixed point.
//!
//! When `ln C_u > 300` the utility scale no longer fits in `f64`, and the
//! `F`/`F_π` solvers iterate on `ln x` instead.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::mdp::{DerivedConstants, TabularMdp};
use crate::operators::{
    apply_bellman_risk_neutral, apply_f, apply_f_log, apply_f_pi, apply_f_pi_log, apply_t,
    check_policy, greedy_actions_from_x,
};
use crate::rng::StreamRng;
use crate::sim::inverse_cdf_sample;
use crate::vectors::{linf_distance, sup_log_distance, QVector, StationaryPolicy, UtilityVector};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: u64 = 1_000_000;
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000;
/// Above this `ln C_u` the `F` solvers switch to log-space iteration.
pub const LOG_SPACE_THRESHOLD: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult<V> {
    pub solution: V,
    pub iterations: u64,
    /// Metric distance between the last two iterates.
    pub final_residual: f64,
    pub converged: bool,
}

impl<V> FixedPointResult<V> {
    pub fn map<W>(self, f: impl FnOnce(V) -> W) -> FixedPointResult<W> {
        FixedPointResult {
            solution: f(self.solution),
            iterations: self.iterations,
            final_residual: self.final_residual,
            converged: self.converged,
        }
    }
}

fn picard(
    start: Vec<f64>,
    gamma: f64,
    options: SolverOptions,
    mut step: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    distance: impl Fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<FixedPointResult<Vec<f64>>> {
    if !(options.tolerance > 0.0) {
        return Err(domain(format!(
            "tolerance {} must be positive",
            options.tolerance
        )));
    }
    let threshold = if gamma == 0.0 {
        f64::INFINITY
    } else {
        options.tolerance * (1.0 - gamma) / gamma
    };
    let mut current = start;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        let next = step(&current)?;
        residual = distance(&next, &current)?;
        current = next;
        iterations += 1;
        if residual <= threshold {
            return Ok(FixedPointResult {
                solution: current,
                iterations,
                final_residual: residual,
                converged: true,
            });
        }
    }
    Ok(FixedPointResult {
        solution: current,
        iterations,
        final_residual: residual,
        converged: false,
    })
}

fn require_positive_discount(mdp: &TabularMdp) -> Result<()> {
    if mdp.discount() > 0.0 {
        Ok(())
    } else {
        Err(domain("θ̂ = θ/γ is undefined for γ = 0"))
    }
}

fn uses_log_space(mdp: &TabularMdp) -> bool {
    DerivedConstants::of(mdp).ln_c_u() > LOG_SPACE_THRESHOLD
}

/// Fixed point of `F` in log coordinates, valid at any scale.
///
/// The residual is the sup-norm of the log difference, i.e. the sup-log metric.
pub fn fixed_point_log_f(
    mdp: &TabularMdp,
    log_x0: Option<&[f64]>,
    options: SolverOptions,
) -> Result<FixedPointResult<Vec<f64>>> {
    mdp.ensure_valid()?;
    require_positive_discount(mdp)?;
    let start = match log_x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; mdp.num_pairs()],
    };
    picard(
        start,
        mdp.discount(),
        options,
        |x| apply_f_log(mdp, x),
        linf_distance,
    )
}

/// Fixed point `x*` of `F`, starting from `x0` (all-ones by default).
pub fn fixed_point_f(
    mdp: &TabularMdp,
    x0: Option<&[f64]>,
    options: SolverOptions,
) -> Result<FixedPointResult<UtilityVector>> {
    mdp.ensure_valid()?;
    require_positive_discount(mdp)?;
    if uses_log_space(mdp) {
        let log_x0 = x0.map(|x| x.iter().map(|v| v.ln()).collect::<Vec<_>>());
        return Ok(fixed_point_log_f(mdp, log_x0.as_deref(), options)?
            .map(|log_x| UtilityVector::from_log(&log_x)));
    }
    let start = match x0 {
        Some(x) => UtilityVector::new(x.to_vec())?.into_inner(),
        None => vec![1.0; mdp.num_pairs()],
    };
    Ok(picard(
        start,
        mdp.discount(),
        options,
        |x| apply_f(mdp, x).map(UtilityVector::into_inner),
        sup_log_distance,
    )?
    .map(UtilityVector::from_vec_unchecked))
}

/// Fixed point `Q*` of `T`, starting from `q0` (zero by default).
pub fn fixed_point_t(
    mdp: &TabularMdp,
    q0: Option<&[f64]>,
    options: SolverOptions,
) -> Result<FixedPointResult<QVector>> {
    mdp.ensure_valid()?;
    let start = match q0 {
        Some(q) => QVector::new(q.to_vec())?.into_inner(),
        None => vec![0.0; mdp.num_pairs()],
    };
    Ok(picard(
        start,
        mdp.discount(),
        options,
        |q| apply_t(mdp, q).map(QVector::into_inner),
        linf_distance,
    )?
    .map(QVector::from_vec_unchecked))
}

/// Risk-neutral value iteration: fixed point of `Q ↦ r + γ P max Q` from zero.
pub fn risk_neutral_value_iteration(
    mdp: &TabularMdp,
    options: SolverOptions,
) -> Result<FixedPointResult<QVector>> {
    mdp.ensure_valid()?;
    Ok(picard(
        vec![0.0; mdp.num_pairs()],
        mdp.discount(),
        options,
        |q| apply_bellman_risk_neutral(mdp, q).map(QVector::into_inner),
        linf_distance,
    )?
    .map(QVector::from_vec_unchecked))
}

/// `ln X_π`, the log of the fixed point of `F_π`.
pub fn policy_log_utility(
    mdp: &TabularMdp,
    pi: &StationaryPolicy,
    options: SolverOptions,
) -> Result<FixedPointResult<Vec<f64>>> {
    mdp.ensure_valid()?;
    require_positive_discount(mdp)?;
    check_policy(mdp, pi)?;
    if uses_log_space(mdp) {
        return picard(
            vec![0.0; mdp.num_pairs()],
            mdp.discount(),
            options,
            |x| apply_f_pi_log(mdp, pi, x),
            linf_distance,
        );
    }
    let result = picard(
        vec![1.0; mdp.num_pairs()],
        mdp.discount(),
        options,
        |x| apply_f_pi(mdp, pi, x).map(UtilityVector::into_inner),
        sup_log_distance,
    )?;
    Ok(result.map(|x| x.iter().map(|v| v.ln()).collect()))
}

/// Expected exponential utility `X_π` of a stationary policy, as the fixed
/// point of `F_π` reached from all-ones.
pub fn policy_utility(
    mdp: &TabularMdp,
    pi: &StationaryPolicy,
    options: SolverOptions,
) -> Result<FixedPointResult<UtilityVector>> {
    Ok(policy_log_utility(mdp, pi, options)?.map(|l| UtilityVector::from_log(&l)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub actions: Vec<usize>,
    pub log_utility: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BruteForceOutcome {
    pub best_actions: Vec<usize>,
    pub best_policy: StationaryPolicy,
    pub best_utility: UtilityVector,
    pub best_log_utility: Vec<f64>,
    /// Every deterministic policy, in enumeration order (state 0 varies fastest).
    pub evaluations: Vec<PolicyEvaluation>,
}

fn decode_policy(mut index: u64, num_states: usize, num_actions: usize) -> Vec<usize> {
    let base = num_actions as u64;
    (0..num_states)
        .map(|_| {
            let a = (index % base) as usize;
            index /= base;
            a
        })
        .collect()
}

/// Enumerates every deterministic stationary policy and returns the one whose
/// utility is elementwise smallest.
///
/// An optimal stationary policy dominates every other one elementwise, so the
/// winner (picked by smallest `Σ ln X_π`) is then checked against all others;
/// any coordinate worse by more than `10 * tolerance` in log scale is reported
/// as an [`Error::OracleInconsistency`].
pub fn brute_force_optimal(
    mdp: &TabularMdp,
    options: SolverOptions,
    cap: u64,
) -> Result<BruteForceOutcome> {
    mdp.ensure_valid()?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let count = (na as u128).checked_pow(ns as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let evaluations: Vec<PolicyEvaluation> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let actions = decode_policy(i, ns, na);
            let pi = StationaryPolicy::deterministic(&actions, na)?;
            let fp = policy_log_utility(mdp, &pi, options)?;
            if !fp.converged {
                return Err(Error::OracleInconsistency(format!(
                    "policy {actions:?} did not converge in {} iterations",
                    fp.iterations
                )));
            }
            Ok(PolicyEvaluation {
                actions,
                log_utility: fp.solution,
            })
        })
        .collect::<Result<_>>()?;

    let score = |e: &PolicyEvaluation| e.log_utility.iter().sum::<f64>();
    let best = evaluations.iter().enumerate().fold(0, |best, (i, e)| {
        if score(e) < score(&evaluations[best]) {
            i
        } else {
            best
        }
    });
    let winner = &evaluations[best];
    let slack = 10.0 * options.tolerance;
    for other in &evaluations {
        for (k, (w, o)) in winner
            .log_utility
            .iter()
            .zip(&other.log_utility)
            .enumerate()
        {
            if w - o > slack {
                return Err(Error::OracleInconsistency(format!(
                    "policy {:?} beats the winner {:?} at pair {k} by {:e} in log scale",
                    other.actions,
                    winner.actions,
                    w - o
                )));
            }
        }
    }
    Ok(BruteForceOutcome {
        best_actions: winner.actions.clone(),
        best_policy: StationaryPolicy::deterministic(&winner.actions, na)?,
        best_utility: UtilityVector::from_log(&winner.log_utility),
        best_log_utility: winner.log_utility.clone(),
        evaluations,
    })
}

/// The greedy policy `argmin_a x*(s, a)` read off a fixed point of `F`.
pub fn greedy_from_fixed_point(x_star: &[f64], num_actions: usize) -> Result<StationaryPolicy> {
    StationaryPolicy::deterministic(&greedy_actions_from_x(x_star, num_actions), num_actions)
}

/// Truncation level below which discounted rewards shift the exponent by at
/// most `1e-6`: the smallest `H` with `γ^H θ̂ ‖r‖_∞ / (1 − γ) ≤ 1e-6`.
pub fn truncation_horizon(mdp: &TabularMdp) -> usize {
    let c = DerivedConstants::of(mdp);
    let tail = c.theta_hat * c.c_max;
    if !(tail > 1e-6) {
        return 0;
    }
    let gamma = mdp.discount();
    let mut h = ((1e-6 / tail).ln() / gamma.ln()).ceil().max(0.0) as usize;
    while gamma.powi(h as i32) * tail > 1e-6 {
        h += 1;
    }
    while h > 0 && gamma.powi(h as i32 - 1) * tail <= 1e-6 {
        h -= 1;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub horizon: usize,
    pub episodes: usize,
}

/// Averages `exp(−θ̂ Σ_{j<H} γ^j r_j)` over episodes that start with
/// `start = (s, a)` and then follow `pi`.
///
/// Episode `i` draws from stream `i` of `seed`: per step one uniform for the
/// successor state, then one for the policy's action. `horizon = None` uses
/// [`truncation_horizon`].
pub fn monte_carlo_utility(
    mdp: &TabularMdp,
    pi: &StationaryPolicy,
    start: (usize, usize),
    horizon: Option<usize>,
    num_episodes: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    mdp.ensure_valid()?;
    require_positive_discount(mdp)?;
    check_policy(mdp, pi)?;
    let (s0, a0) = start;
    if s0 >= mdp.num_states() || a0 >= mdp.num_actions() {
        return Err(domain(format!("start pair {start:?} is out of range")));
    }
    if num_episodes == 0 {
        return Err(domain("need at least one episode"));
    }
    let horizon = horizon.unwrap_or_else(|| truncation_horizon(mdp));
    let theta_hat = mdp.risk_hat();
    let gamma = mdp.discount();

    let samples: Vec<f64> = (0..num_episodes)
        .into_par_iter()
        .map(|episode| {
            let mut rng = StreamRng::new(seed, episode as u64);
            let (mut s, mut a) = (s0, a0);
            let mut discounted = 0.0;
            let mut weight = 1.0;
            for j in 0..horizon {
                discounted += weight * mdp.reward(s, a);
                weight *= gamma;
                if j + 1 < horizon {
                    s = inverse_cdf_sample(mdp.transition_row(s, a), rng.uniform());
                    a = inverse_cdf_sample(pi.row(s), rng.uniform());
                }
            }
            (-theta_hat * discounted).exp()
        })
        .collect();

    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std_error = if samples.len() > 1 {
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        horizon,
        episodes: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{
        random_mdp, single_state_mdp, two_state_risky_fixture, ACTION_RISK, ACTION_SAFE,
    };
    use crate::operators::x_to_q;

    #[test]
    fn fixture_fixed_points() {
        let mdp = two_state_risky_fixture();
        let fx = fixed_point_f(&mdp, None, SolverOptions::default()).unwrap();
        assert!(fx.converged);
        let q_from_x = x_to_q(&mdp, &fx.solution).unwrap();
        let ft = fixed_point_t(&mdp, None, SolverOptions::default()).unwrap();
        assert!(ft.converged);
        let expect = [0.0, -47.59, -100.0, -100.0];
        for (got, want) in ft.solution.iter().zip(expect) {
            assert!((got - want).abs() < 0.01, "{got} vs {want}");
        }
        assert!(ft.solution[0].abs() < 1e-6);
        assert!((ft.solution[2] + 100.0).abs() < 1e-6);
        assert!(linf_distance(&q_from_x, &ft.solution).unwrap() < 1e-8);
    }

    #[test]
    fn single_state_closed_forms() {
        for &(r, g, th) in &[(1.5, 0.9, 0.2), (-2.0, 0.5, 1.0), (0.3, 0.99, 0.05)] {
            let mdp = single_state_mdp(r, g, th);
            let fx = fixed_point_f(&mdp, None, SolverOptions::default()).unwrap();
            let expect = (-th * r / (g * (1.0 - g))).exp();
            assert!((fx.solution[0].ln() - expect.ln()).abs() < 1e-9);
            let ft = fixed_point_t(&mdp, None, SolverOptions::default()).unwrap();
            assert!((ft.solution[0] - r / (1.0 - g)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_reward_gives_ones() {
        let mdp = TabularMdp::new(
            vec![vec![vec![0.5, 0.5]; 2]; 2],
            vec![vec![0.0; 2]; 2],
            0.9,
            0.4,
        )
        .unwrap();
        let fx = fixed_point_f(&mdp, None, SolverOptions::default()).unwrap();
        assert_eq!(&*fx.solution, &[1.0; 4]);
        let pu = policy_utility(
            &mdp,
            &StationaryPolicy::uniform(2, 2),
            SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(&*pu.solution, &[1.0; 4]);
    }

    #[test]
    fn non_convergence_is_flagged_not_thrown() {
        let mdp = two_state_risky_fixture();
        let res = fixed_point_f(
            &mdp,
            None,
            SolverOptions {
                tolerance: 1e-10,
                max_iterations: 3,
            },
        )
        .unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn a_posteriori_bound_holds_along_the_run() {
        let mdp = two_state_risky_fixture();
        let reference = fixed_point_f(&mdp, None, SolverOptions::with_tolerance(1e-13))
            .unwrap()
            .solution;
        let gamma = mdp.discount();
        let mut x = vec![1.0; 4];
        for _ in 0..200 {
            let next = apply_f(&mdp, &x).unwrap().into_inner();
            let step = sup_log_distance(&next, &x).unwrap();
            let err = sup_log_distance(&next, &reference).unwrap();
            assert!(
                err <= gamma / (1.0 - gamma) * step + 1e-11,
                "{err} > bound {step}"
            );
            x = next;
        }
    }

    #[test]
    fn greedy_policy_utility_equals_x_star() {
        let mdp = two_state_risky_fixture();
        let fx = fixed_point_f(&mdp, None, SolverOptions::default()).unwrap();
        let pi = greedy_from_fixed_point(&fx.solution, 2).unwrap();
        assert_eq!(pi.actions().unwrap()[0], ACTION_SAFE);
        let pu = policy_utility(&mdp, &pi, SolverOptions::default()).unwrap();
        assert!(sup_log_distance(&pu.solution, &fx.solution).unwrap() < 1e-8);

        let always_risk = StationaryPolicy::deterministic(&[ACTION_RISK, 0], 2).unwrap();
        let worse = policy_utility(&mdp, &always_risk, SolverOptions::default()).unwrap();
        for (w, b) in worse.solution.iter().zip(fx.solution.iter()) {
            assert!(*w >= *b * (1.0 - 1e-9));
        }
    }

    #[test]
    fn brute_force_on_fixture_and_single_action() {
        let mdp = two_state_risky_fixture();
        let out =
            brute_force_optimal(&mdp, SolverOptions::default(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(out.best_actions[0], ACTION_SAFE);
        assert_eq!(out.evaluations.len(), 4);
        let fx = fixed_point_f(&mdp, None, SolverOptions::default()).unwrap();
        assert!(sup_log_distance(&out.best_utility, &fx.solution).unwrap() < 1e-8);

        let one = random_mdp(3, 1, (-1.0, 1.0), 0.8, 0.3, 1).unwrap();
        let out = brute_force_optimal(&one, SolverOptions::default(), 10).unwrap();
        assert_eq!(out.best_actions, vec![0, 0, 0]);
        assert_eq!(out.evaluations.len(), 1);
    }

    #[test]
    fn brute_force_respects_cap() {
        let mdp = random_mdp(6, 4, (-1.0, 1.0), 0.8, 0.3, 1).unwrap();
        match brute_force_optimal(&mdp, SolverOptions::default(), 100) {
            Err(Error::EnumerationCap { count, cap }) => assert_eq!((count, cap), (4096, 100)),
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn brute_force_matches_fixed_point_on_random_mdps() {
        let opts = SolverOptions::default();
        for seed in 0..50u64 {
            let s = 1 + (seed % 4) as usize;
            let a = 1 + (seed / 4 % 3) as usize;
            let gamma = 0.1 + 0.85 * (seed as f64 / 49.0);
            let mdp = random_mdp(s, a, (-1.0, 1.0), gamma, 0.5, seed).unwrap();
            let fx = fixed_point_f(&mdp, None, opts).unwrap();
            let out = brute_force_optimal(&mdp, opts, DEFAULT_ENUMERATION_CAP).unwrap();
            assert!(
                sup_log_distance(&out.best_utility, &fx.solution).unwrap() <= 1e-7,
                "seed {seed}"
            );
            let ln_x: Vec<f64> = fx.solution.ln();
            for e in &out.evaluations {
                for (x, xp) in ln_x.iter().zip(&e.log_utility) {
                    assert!(*x <= *xp + 1e-7);
                }
            }
        }
    }

    #[test]
    fn log_space_solver_handles_huge_scales() {
        // ln C_u = θ‖r‖/(γ(1−γ)) is in the hundreds, beyond the f64 range
        let mdp = random_mdp(3, 2, (-10.0, 10.0), 0.9, 8.0, 4).unwrap();
        assert!(DerivedConstants::of(&mdp).ln_c_u() > LOG_SPACE_THRESHOLD);
        let lx = fixed_point_log_f(&mdp, None, SolverOptions::default()).unwrap();
        assert!(lx.converged);
        let q_from_x: Vec<f64> = lx.solution.iter().map(|v| -(0.9 / 8.0) * v).collect();
        let ft = fixed_point_t(&mdp, None, SolverOptions::default()).unwrap();
        assert!(linf_distance(&q_from_x, &ft.solution).unwrap() < 1e-7);
        let out = brute_force_optimal(&mdp, SolverOptions::default(), 100).unwrap();
        assert!(linf_distance(&out.best_log_utility, &lx.solution).unwrap() < 1e-7);
    }

    #[test]
    fn risk_neutral_value_iteration_on_fixture() {
        let mdp = two_state_risky_fixture();
        let fp = risk_neutral_value_iteration(&mdp, SolverOptions::default()).unwrap();
        assert!(fp.converged);
        let q = fp.solution;
        assert!((q[0] - 0.826).abs() < 5e-3, "{q:?}");
        assert!((q[1] - 0.917).abs() < 5e-3, "{q:?}");
        assert!((q[2] + 100.0).abs() < 1e-6);
    }

    #[test]
    fn horizon_rule() {
        let mdp = two_state_risky_fixture();
        let h = truncation_horizon(&mdp);
        let tail = (0.1 / 0.9) * 100.0;
        assert!(0.9f64.powi(h as i32) * tail <= 1e-6);
        assert!(0.9f64.powi(h as i32 - 1) * tail > 1e-6);
    }

    #[test]
    fn monte_carlo_deterministic_chain_is_exact() {
        // 0 -> 1 -> 2 -> 2 ... with rewards 1, -2, 0.5
        let p = vec![
            vec![vec![0.0, 1.0, 0.0]],
            vec![vec![0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0, 1.0]],
        ];
        let mdp = TabularMdp::new(p, vec![vec![1.0], vec![-2.0], vec![0.5]], 0.8, 0.4).unwrap();
        let pi = StationaryPolicy::uniform(3, 1);
        let est = monte_carlo_utility(&mdp, &pi, (0, 0), Some(60), 100, 3).unwrap();
        let mut sum = 0.0;
        for j in 0..60 {
            let r = match j {
                0 => 1.0,
                1 => -2.0,
                _ => 0.5,
            };
            sum += 0.8f64.powi(j) * r;
        }
        let exact = (-(0.4 / 0.8) * sum).exp();
        assert!((est.mean - exact).abs() <= 1e-13 * exact);
        assert!(est.std_error < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_policy_utilities_on_fixture() {
        let mdp = two_state_risky_fixture();
        let fx = fixed_point_f(&mdp, None, SolverOptions::default()).unwrap();
        let pi_star = greedy_from_fixed_point(&fx.solution, 2).unwrap();
        let est = monte_carlo_utility(&mdp, &pi_star, (0, ACTION_SAFE), None, 100_000, 1).unwrap();
        assert!((est.mean - fx.solution[0]).abs() <= 3.0 * est.std_error + 1e-9);
        assert!((fx.solution[0] - 1.0).abs() < 1e-9);

        // Always-risk: the absorption time K is geometric(0.01), the return is
        // (1 − γ^K)/(1 − γ) − 10 γ^K/(1 − γ), so the utility is a series in K.
        let (g, th, p) = (0.9f64, 0.1 / 0.9, 0.01f64);
        let exact: f64 = (1..20_000)
            .map(|k| {
                let gk = g.powi(k);
                let ret = (1.0 - gk) / (1.0 - g) - 10.0 * gk / (1.0 - g);
                p * (1.0 - p).powi(k - 1) * (-th * ret).exp()
            })
            .sum();
        let always_risk = StationaryPolicy::deterministic(&[ACTION_RISK, 0], 2).unwrap();
        let est =
            monte_carlo_utility(&mdp, &always_risk, (0, ACTION_RISK), None, 100_000, 2).unwrap();
        assert!(
            (est.mean - exact).abs() <= 3.0 * est.std_error,
            "{} vs {exact} (se {})",
            est.mean,
            est.std_error
        );

        // The F_π fixed point is a nested certainty equivalent and sits well
        // above the total-return utility once the return is random.
        let pu = policy_utility(&mdp, &always_risk, SolverOptions::default()).unwrap();
        let nested = pu.solution[mdp.index(0, ACTION_RISK)];
        assert!((exact - 305.047).abs() < 1e-2 && (nested - 385.287).abs() < 1e-2);
        assert!(nested - est.mean > 10.0 * est.std_error);
    }
}
