//! Python bindings for `riskq-core`.
//!
//! Vectors cross the boundary as flat lists in `(state, action)` row-major
//! order; policies are nested `[state][action]` probability lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use riskq_core::fixtures::{random_mdp, two_state_risky_fixture};
use riskq_core::harness::config::{OracleSettings, ScalarSettings};
use riskq_core::harness::fit::fit_loglog as core_fit_loglog;
use riskq_core::harness::tasks::{self, LearnerKind, LearnerStudy};
use riskq_core::learners::{self, StepSchedule};
use riskq_core::operators;
use riskq_core::sim::{Behavior, SamplingMode};
use riskq_core::solvers::{self, SolverOptions, DEFAULT_ENUMERATION_CAP};
use riskq_core::vectors::{self, StationaryPolicy};
use riskq_core::{DerivedConstants, Error, TabularMdp};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::EnumerationCap { .. } | Error::Fit(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for riskq_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn options(tolerance: f64, max_iterations: u64) -> SolverOptions {
    SolverOptions {
        tolerance,
        max_iterations,
    }
}

fn policy(mdp: &TabularMdp, probs: Vec<Vec<f64>>) -> PyResult<StationaryPolicy> {
    let pi = StationaryPolicy::new(probs).py()?;
    if pi.num_states() != mdp.num_states() || pi.num_actions() != mdp.num_actions() {
        return Err(PyValueError::new_err("policy shape does not match the MDP"));
    }
    Ok(pi)
}

fn check_rows(len: usize, num_actions: usize) -> PyResult<()> {
    if num_actions == 0 || len % num_actions != 0 {
        return Err(PyValueError::new_err(format!(
            "length {len} is not a positive multiple of num_actions = {num_actions}"
        )));
    }
    Ok(())
}

fn sampling(mode: &str, epsilon: f64) -> PyResult<SamplingMode> {
    Ok(match mode {
        "generative" => SamplingMode::GenerativeIid { nu: None },
        "uniform" => SamplingMode::Markovian {
            behavior: Behavior::UniformRandom,
        },
        "epsilon_greedy" => SamplingMode::Markovian {
            behavior: Behavior::EpsilonGreedy { epsilon },
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown sampling mode {other:?}; use generative, uniform or epsilon_greedy"
            )))
        }
    })
}

/// Finite MDP with discount and risk parameter.
#[pyclass(name = "Mdp", module = "riskq", frozen)]
struct PyMdp(TabularMdp);

#[pymethods]
impl PyMdp {
    /// `transitions[s][a][s']`, `rewards[s][a]`.
    #[new]
    fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        discount: f64,
        risk: f64,
    ) -> PyResult<Self> {
        Ok(Self(
            TabularMdp::new_validated(transitions, rewards, discount, risk).py()?,
        ))
    }

    /// The two-state safe/risk example (γ = 0.9, θ = 0.1).
    #[staticmethod]
    fn fixture() -> Self {
        Self(two_state_risky_fixture())
    }

    #[staticmethod]
    #[pyo3(signature = (num_states, num_actions, discount, risk, seed, reward_range = (-1.0, 1.0)))]
    fn random(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        risk: f64,
        seed: u64,
        reward_range: (f64, f64),
    ) -> PyResult<Self> {
        Ok(Self(
            random_mdp(num_states, num_actions, reward_range, discount, risk, seed).py()?,
        ))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self(TabularMdp::from_json(text).py()?))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self(TabularMdp::load(path).py()?))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).py()
    }

    fn content_hash(&self) -> String {
        self.0.content_hash()
    }

    /// Violations as strings; empty when the MDP is valid.
    fn validate(&self) -> Vec<String> {
        self.0
            .validate()
            .violations
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    fn derived_constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = DerivedConstants::of(&self.0);
        let d = PyDict::new(py);
        d.set_item("theta_hat", c.theta_hat)?;
        d.set_item("c_max", c.c_max)?;
        d.set_item("c_ell", c.c_ell)?;
        d.set_item("c_u", c.c_u)?;
        d.set_item("ln_c_u", c.ln_c_u())?;
        Ok(d)
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.0.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.0.num_actions()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.0.discount()
    }

    #[getter]
    fn risk(&self) -> f64 {
        self.0.risk()
    }

    #[getter]
    fn risk_hat(&self) -> f64 {
        self.0.risk_hat()
    }

    #[getter]
    fn rewards(&self) -> Vec<Vec<f64>> {
        self.0.rewards_nested()
    }

    #[getter]
    fn transitions(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.transitions_nested()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mdp(num_states={}, num_actions={}, discount={}, risk={})",
            self.0.num_states(),
            self.0.num_actions(),
            self.0.discount(),
            self.0.risk()
        )
    }
}

#[pyfunction]
fn apply_f(mdp: &PyMdp, x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(operators::apply_f(&mdp.0, &x).py()?.into_inner())
}

#[pyfunction]
fn apply_f_log(mdp: &PyMdp, log_x: Vec<f64>) -> PyResult<Vec<f64>> {
    operators::apply_f_log(&mdp.0, &log_x).py()
}

#[pyfunction]
fn apply_f_pi(mdp: &PyMdp, pi: Vec<Vec<f64>>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    let pi = policy(&mdp.0, pi)?;
    Ok(operators::apply_f_pi(&mdp.0, &pi, &x).py()?.into_inner())
}

#[pyfunction]
fn apply_t(mdp: &PyMdp, q: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(operators::apply_t(&mdp.0, &q).py()?.into_inner())
}

#[pyfunction]
fn apply_bellman_risk_neutral(mdp: &PyMdp, q: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(operators::apply_bellman_risk_neutral(&mdp.0, &q)
        .py()?
        .into_inner())
}

#[pyfunction]
fn x_to_q(mdp: &PyMdp, x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(operators::x_to_q(&mdp.0, &x).py()?.into_inner())
}

#[pyfunction]
fn q_to_x(mdp: &PyMdp, q: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(operators::q_to_x(&mdp.0, &q).py()?.into_inner())
}

#[pyfunction]
fn greedy_actions_from_x(x: Vec<f64>, num_actions: usize) -> PyResult<Vec<usize>> {
    check_rows(x.len(), num_actions)?;
    Ok(operators::greedy_actions_from_x(&x, num_actions))
}

#[pyfunction]
fn greedy_actions_from_q(q: Vec<f64>, num_actions: usize) -> PyResult<Vec<usize>> {
    check_rows(q.len(), num_actions)?;
    Ok(operators::greedy_actions_from_q(&q, num_actions))
}

#[pyfunction]
fn sup_log_distance(x1: Vec<f64>, x2: Vec<f64>) -> PyResult<f64> {
    vectors::sup_log_distance(&x1, &x2).py()
}

#[pyfunction]
fn linf_distance(q1: Vec<f64>, q2: Vec<f64>) -> PyResult<f64> {
    vectors::linf_distance(&q1, &q2).py()
}

/// Fixed point of F, returned as `(ln x*, iterations, converged)`.
#[pyfunction]
#[pyo3(signature = (mdp, tolerance = 1e-10, max_iterations = 1_000_000))]
fn fixed_point_f(
    mdp: &PyMdp,
    tolerance: f64,
    max_iterations: u64,
) -> PyResult<(Vec<f64>, u64, bool)> {
    let r = solvers::fixed_point_log_f(&mdp.0, None, options(tolerance, max_iterations)).py()?;
    Ok((r.solution, r.iterations, r.converged))
}

/// Fixed point of T, returned as `(Q*, iterations, converged)`.
#[pyfunction]
#[pyo3(signature = (mdp, tolerance = 1e-10, max_iterations = 1_000_000))]
fn fixed_point_t(
    mdp: &PyMdp,
    tolerance: f64,
    max_iterations: u64,
) -> PyResult<(Vec<f64>, u64, bool)> {
    let r = solvers::fixed_point_t(&mdp.0, None, options(tolerance, max_iterations)).py()?;
    Ok((r.solution.into_inner(), r.iterations, r.converged))
}

#[pyfunction]
#[pyo3(signature = (mdp, tolerance = 1e-10, max_iterations = 1_000_000))]
fn risk_neutral_value_iteration(
    mdp: &PyMdp,
    tolerance: f64,
    max_iterations: u64,
) -> PyResult<(Vec<f64>, u64, bool)> {
    let r =
        solvers::risk_neutral_value_iteration(&mdp.0, options(tolerance, max_iterations)).py()?;
    Ok((r.solution.into_inner(), r.iterations, r.converged))
}

/// `ln X_π`, the log of the F_π fixed point.
#[pyfunction]
#[pyo3(signature = (mdp, pi, tolerance = 1e-10, max_iterations = 1_000_000))]
fn policy_log_utility(
    mdp: &PyMdp,
    pi: Vec<Vec<f64>>,
    tolerance: f64,
    max_iterations: u64,
) -> PyResult<Vec<f64>> {
    let pi = policy(&mdp.0, pi)?;
    Ok(
        solvers::policy_log_utility(&mdp.0, &pi, options(tolerance, max_iterations))
            .py()?
            .solution,
    )
}

/// Exhaustive search over deterministic policies: `(best_actions, best_log_utility)`.
#[pyfunction]
#[pyo3(signature = (mdp, cap = DEFAULT_ENUMERATION_CAP))]
fn brute_force_optimal(mdp: &PyMdp, cap: u64) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let r = solvers::brute_force_optimal(&mdp.0, SolverOptions::default(), cap).py()?;
    Ok((r.best_actions, r.best_log_utility))
}

/// `(mean, std_error)` of `exp(−θ̂ Σ γ^j r_j)` over simulated episodes.
#[pyfunction]
#[pyo3(signature = (mdp, pi, state, action, episodes, seed, horizon = None))]
fn monte_carlo_utility(
    mdp: &PyMdp,
    pi: Vec<Vec<f64>>,
    state: usize,
    action: usize,
    episodes: usize,
    seed: u64,
    horizon: Option<usize>,
) -> PyResult<(f64, f64)> {
    let pi = policy(&mdp.0, pi)?;
    let r =
        solvers::monte_carlo_utility(&mdp.0, &pi, (state, action), horizon, episodes, seed).py()?;
    Ok((r.mean, r.std_error))
}

fn study_dict<'py>(py: Python<'py>, outcome: &tasks::StudyOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seeds", outcome.seeds.clone())?;
    d.set_item("n", outcome.median.iter().map(|r| r.n).collect::<Vec<_>>())?;
    d.set_item(
        "median_error",
        outcome.median.iter().map(|r| r.error).collect::<Vec<_>>(),
    )?;
    if let Some(g) = outcome.g_track_curve() {
        d.set_item(
            "median_g_track_err",
            g.into_iter().map(|p| p.1).collect::<Vec<_>>(),
        )?;
    }
    d.set_item("finals", outcome.finals.clone())?;
    d.set_item("violations", outcome.violations())?;
    Ok(d)
}

/// Two-timescale learner over several seeds; returns median curves and the
/// final `Q` of each seed.
#[pyfunction]
#[pyo3(signature = (mdp, num_steps, seeds, alpha = 0.9, beta = 0.6, sampling = "generative", epsilon = 0.1))]
#[allow(clippy::too_many_arguments)]
fn two_timescale<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    num_steps: u64,
    seeds: Vec<u64>,
    alpha: f64,
    beta: f64,
    sampling: &str,
    epsilon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = LearnerKind::TwoTimescale {
        alpha: StepSchedule::power_law(alpha),
        beta: StepSchedule::power_law(beta),
    };
    let study = LearnerStudy::new(kind, self::sampling(sampling, epsilon)?, seeds, num_steps);
    let outcome = py
        .detach(|| tasks::run_learner_study(&mdp.0, &study))
        .py()?;
    study_dict(py, &outcome)
}

/// One-timescale learner over several seeds; finals are `x` vectors.
#[pyfunction]
#[pyo3(signature = (mdp, num_steps, seeds, alpha = 0.7, sampling = "epsilon_greedy", epsilon = 0.1))]
fn one_timescale<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    num_steps: u64,
    seeds: Vec<u64>,
    alpha: f64,
    sampling: &str,
    epsilon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = LearnerKind::OneTimescale {
        alpha: StepSchedule::power_law(alpha),
    };
    let study = LearnerStudy::new(kind, self::sampling(sampling, epsilon)?, seeds, num_steps);
    let outcome = py
        .detach(|| tasks::run_learner_study(&mdp.0, &study))
        .py()?;
    study_dict(py, &outcome)
}

#[pyfunction]
fn compute_c1(c_ell: f64, x_star: f64, gamma: f64) -> f64 {
    learners::compute_c1(c_ell, x_star, gamma)
}

#[pyfunction]
fn c_tilde_2(c_u: f64, x_star: f64, gamma: f64, c1: f64) -> f64 {
    learners::c_tilde_2(c_u, x_star, gamma, c1)
}

#[pyfunction]
fn scalar_envelope(c_tilde_2: f64, n: u64) -> f64 {
    learners::scalar_envelope(c_tilde_2, n)
}

/// Scalar recursion averaged over seeds: `(n, mean, envelope)` lists.
#[pyfunction]
#[pyo3(signature = (num_steps, seeds, c_ell = 0.5, c_u = 2.0, x_star = 1.0, gamma = 0.9, noise = 0.3))]
#[allow(clippy::too_many_arguments)]
fn scalar_study(
    py: Python<'_>,
    num_steps: u64,
    seeds: Vec<u64>,
    c_ell: f64,
    c_u: f64,
    x_star: f64,
    gamma: f64,
    noise: f64,
) -> PyResult<(Vec<u64>, Vec<f64>, Vec<f64>)> {
    let settings = ScalarSettings {
        c_ell,
        c_u,
        x_star,
        gamma,
        noise,
        x0: None,
    };
    let out = py
        .detach(|| tasks::run_scalar_study(&settings, &seeds, num_steps))
        .py()?;
    Ok((out.snapshots, out.mean, out.envelope))
}

/// Least-squares fit of `ln error` on `ln n`: `(slope, intercept, r_squared)`.
#[pyfunction]
fn fit_loglog(points: Vec<(u64, f64)>, lo: u64, hi: u64) -> PyResult<(f64, f64, f64)> {
    let f = core_fit_loglog(&points, (lo, hi)).py()?;
    Ok((f.slope, f.intercept, f.r_squared))
}

/// Risk-neutral and risk-averse `Q` on the two-state example plus the greedy
/// actions of each.
#[pyfunction]
fn run_example<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
    let r = tasks::run_example().py()?;
    let d = PyDict::new(py);
    d.set_item("q_risk_neutral", r.q_risk_neutral)?;
    d.set_item("q_risk_sensitive", r.q_risk_sensitive)?;
    d.set_item("greedy_risk_neutral", r.greedy_risk_neutral)?;
    d.set_item("greedy_risk_sensitive", r.greedy_risk_sensitive)?;
    Ok(d)
}

/// Optimality oracle on random MDPs: `(passed, total)`.
#[pyfunction]
#[pyo3(signature = (count = 50, max_states = 4, max_actions = 3, seed = 42))]
fn oracle_check(
    py: Python<'_>,
    count: usize,
    max_states: usize,
    max_actions: usize,
    seed: u64,
) -> PyResult<(usize, usize)> {
    let settings = OracleSettings {
        count,
        max_states,
        max_actions,
        seed,
    };
    let report = py
        .detach(|| {
            let mdps = tasks::oracle_cases(&settings)?;
            tasks::run_oracle_check(&mdps, SolverOptions::default(), None)
        })
        .py()?;
    Ok((report.passed, report.total()))
}

#[pymodule]
fn riskq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_function(wrap_pyfunction!(apply_f, m)?)?;
    m.add_function(wrap_pyfunction!(apply_f_log, m)?)?;
    m.add_function(wrap_pyfunction!(apply_f_pi, m)?)?;
    m.add_function(wrap_pyfunction!(apply_t, m)?)?;
    m.add_function(wrap_pyfunction!(apply_bellman_risk_neutral, m)?)?;
    m.add_function(wrap_pyfunction!(x_to_q, m)?)?;
    m.add_function(wrap_pyfunction!(q_to_x, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_actions_from_x, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_actions_from_q, m)?)?;
    m.add_function(wrap_pyfunction!(sup_log_distance, m)?)?;
    m.add_function(wrap_pyfunction!(linf_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point_f, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point_t, m)?)?;
    m.add_function(wrap_pyfunction!(risk_neutral_value_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(policy_log_utility, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_utility, m)?)?;
    m.add_function(wrap_pyfunction!(two_timescale, m)?)?;
    m.add_function(wrap_pyfunction!(one_timescale, m)?)?;
    m.add_function(wrap_pyfunction!(compute_c1, m)?)?;
    m.add_function(wrap_pyfunction!(c_tilde_2, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_study, m)?)?;
    m.add_function(wrap_pyfunction!(fit_loglog, m)?)?;
    m.add_function(wrap_pyfunction!(run_example, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}
