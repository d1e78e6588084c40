//! Experiment tasks behind the CLI subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, Error, Result};
use crate::fixtures::{random_mdp, two_state_risky_fixture, ACTION_RISK, ACTION_SAFE, STATE_S};
use crate::learners::{
    c_tilde_2, check_timescale_pair, one_timescale_run, scalar_envelope, scalar_recursion_run,
    snapshot_grid, two_timescale_run, LearnerTrace, ScalarRecursionParams, StepSchedule,
    TraceConfig, TraceRow,
};
use crate::mdp::TabularMdp;
use crate::operators::{greedy_actions_from_q, greedy_actions_from_x, log_x_to_q};
use crate::rng::StreamRng;
use crate::sim::{Sampler, SamplerConfig, SamplingMode};
use crate::solvers::{
    brute_force_optimal, fixed_point_f, fixed_point_log_f, fixed_point_t, policy_log_utility,
    risk_neutral_value_iteration, SolverOptions, DEFAULT_ENUMERATION_CAP,
};
use crate::vectors::{linf_distance, StationaryPolicy};

use super::config::{OracleSettings, ScalarSettings};
use super::fit::{fit_loglog, RateFit};
use super::io::SummaryRow;

/// Both oracle checks use this slack, in log scale.
pub const ORACLE_SLACK: f64 = 1e-7;
/// Half-width of the accepted band around a predicted slope.
pub const SLOPE_BAND: f64 = 0.15;
pub const ORACLE_GAMMA_RANGE: (f64, f64) = (0.1, 0.95);
pub const ORACLE_RISK_RANGE: (f64, f64) = (0.05, 2.0);
pub const ORACLE_REWARD_RANGE: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Clone, Serialize)]
pub struct ExampleReport {
    pub q_risk_neutral: Vec<f64>,
    pub q_risk_sensitive: Vec<f64>,
    pub greedy_risk_neutral: Vec<usize>,
    pub greedy_risk_sensitive: Vec<usize>,
}

impl ExampleReport {
    pub fn table(&self) -> String {
        let names = [("s", "safe"), ("s", "risk"), ("s̄", "0"), ("s̄", "1")];
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<5} {:<6} {:>14} {:>14}",
            "state", "action", "risk-neutral", "risk-averse"
        );
        for (i, (s, a)) in names.iter().enumerate() {
            let _ = writeln!(
                out,
                "{s:<5} {a:<6} {:>14.6} {:>14.6}",
                self.q_risk_neutral[i], self.q_risk_sensitive[i]
            );
        }
        let label = |a: usize| if a == ACTION_SAFE { "safe" } else { "risk" };
        let _ = writeln!(
            out,
            "greedy at s: risk-neutral = {}, risk-averse = {}",
            label(self.greedy_risk_neutral[STATE_S]),
            label(self.greedy_risk_sensitive[STATE_S])
        );
        out
    }

    /// The two formulations must disagree at `s`: risk-neutral takes the
    /// gamble, risk-averse does not.
    pub fn check(&self) -> Result<()> {
        if self.greedy_risk_neutral[STATE_S] != ACTION_RISK {
            return Err(Error::CheckFailed(
                "risk-neutral greedy action at s is not risk".into(),
            ));
        }
        if self.greedy_risk_sensitive[STATE_S] != ACTION_SAFE {
            return Err(Error::CheckFailed(
                "risk-averse greedy action at s is not safe".into(),
            ));
        }
        Ok(())
    }
}

/// Solves the safe/risk example under both criteria.
pub fn run_example() -> Result<ExampleReport> {
    let mdp = two_state_risky_fixture();
    let rn = risk_neutral_value_iteration(&mdp, SolverOptions::default())?;
    let rs = fixed_point_t(&mdp, None, SolverOptions::default())?;
    if !(rn.converged && rs.converged) {
        return Err(Error::CheckFailed(
            "example solvers did not converge".into(),
        ));
    }
    let a = mdp.num_actions();
    Ok(ExampleReport {
        greedy_risk_neutral: greedy_actions_from_q(&rn.solution, a),
        greedy_risk_sensitive: greedy_actions_from_q(&rs.solution, a),
        q_risk_neutral: rn.solution.into_inner(),
        q_risk_sensitive: rs.solution.into_inner(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub log_x: Vec<f64>,
    pub q: Vec<f64>,
    pub greedy: Vec<usize>,
    pub iterations_f: u64,
    pub iterations_t: u64,
    pub converged: bool,
    /// `‖Q*_T − (−(γ/θ) ln x*)‖_∞`
    pub conjugacy_gap: f64,
}

/// Fixed points of `F` (in log space) and `T`, and the greedy policy.
pub fn solve(mdp: &TabularMdp, options: SolverOptions) -> Result<SolveReport> {
    let fx = fixed_point_log_f(mdp, None, options)?;
    let ft = fixed_point_t(mdp, None, options)?;
    let q_from_x = log_x_to_q(mdp, &fx.solution)?;
    Ok(SolveReport {
        greedy: greedy_actions_from_q(&ft.solution, mdp.num_actions()),
        conjugacy_gap: linf_distance(&q_from_x, &ft.solution)?,
        iterations_f: fx.iterations,
        iterations_t: ft.iterations,
        converged: fx.converged && ft.converged,
        log_x: fx.solution,
        q: ft.solution.into_inner(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCaseResult {
    pub greedy_actions: Vec<usize>,
    pub best_actions: Vec<usize>,
    /// Sup-log distance between the greedy policy's utility and the
    /// brute-force winner's.
    pub winner_gap: f64,
    /// `max_π max_i (ln x*_i − ln X_π,i)`; at most `ORACLE_SLACK` when `x*` is
    /// elementwise optimal.
    pub worst_dominance: f64,
    pub policies: usize,
}

impl OracleCaseResult {
    pub fn passed(&self) -> bool {
        self.winner_gap <= ORACLE_SLACK && self.worst_dominance <= ORACLE_SLACK
    }
}

/// Compares the greedy policy read off `x*` with exhaustive enumeration.
pub fn check_oracle_case(mdp: &TabularMdp, options: SolverOptions) -> Result<OracleCaseResult> {
    let x_star = fixed_point_log_f(mdp, None, options)?.solution;
    let a = mdp.num_actions();
    let greedy_actions = greedy_actions_from_x(&x_star, a);
    let greedy_policy = StationaryPolicy::deterministic(&greedy_actions, a)?;
    let greedy_utility = policy_log_utility(mdp, &greedy_policy, options)?.solution;
    let brute = brute_force_optimal(mdp, options, DEFAULT_ENUMERATION_CAP)?;
    let worst_dominance = brute
        .evaluations
        .iter()
        .flat_map(|e| x_star.iter().zip(&e.log_utility).map(|(x, xp)| x - xp))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(OracleCaseResult {
        greedy_actions,
        winner_gap: linf_distance(&greedy_utility, &brute.best_log_utility)?,
        best_actions: brute.best_actions,
        worst_dominance,
        policies: brute.evaluations.len(),
    })
}

/// The random MDPs of an oracle sweep.
///
/// Case `i` takes its shape and parameters from stream 1 of `seed`. Case 0
/// sits at the lower discount edge `γ = 0.1` and case 1 at the upper edge
/// `γ = 0.95`; the rest draw `γ` uniformly in between.
pub fn oracle_cases(settings: &OracleSettings) -> Result<Vec<TabularMdp>> {
    if settings.max_states == 0 || settings.max_actions == 0 {
        return Err(config("oracle size caps must be positive"));
    }
    let count = (settings.max_actions as u128).checked_pow(settings.max_states as u32);
    if !matches!(count, Some(c) if c <= DEFAULT_ENUMERATION_CAP as u128) {
        return Err(config(format!(
            "{}^{} policies exceed the enumeration cap {DEFAULT_ENUMERATION_CAP}",
            settings.max_actions, settings.max_states
        )));
    }
    let mut rng = StreamRng::new(settings.seed, 1);
    (0..settings.count)
        .map(|i| {
            let s = 1 + rng.index(settings.max_states);
            let a = 1 + rng.index(settings.max_actions);
            let gamma = match i {
                0 => ORACLE_GAMMA_RANGE.0,
                1 => ORACLE_GAMMA_RANGE.1,
                _ => rng.uniform_in(ORACLE_GAMMA_RANGE.0, ORACLE_GAMMA_RANGE.1),
            };
            let theta = rng.uniform_in(ORACLE_RISK_RANGE.0, ORACLE_RISK_RANGE.1);
            random_mdp(s, a, ORACLE_REWARD_RANGE, gamma, theta, rng.next_u64())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleFailure {
    pub index: usize,
    pub detail: String,
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OracleReport {
    pub passed: usize,
    pub failures: Vec<OracleFailure>,
    pub cases: Vec<OracleCaseResult>,
}

impl OracleReport {
    pub fn total(&self) -> usize {
        self.passed + self.failures.len()
    }
}

/// Runs the oracle on each MDP; failing ones are written to
/// `dump_dir/oracle_failure_<index>.json` for replay.
pub fn run_oracle_check(
    mdps: &[TabularMdp],
    options: SolverOptions,
    dump_dir: Option<&Path>,
) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    for (index, mdp) in mdps.iter().enumerate() {
        let detail = match check_oracle_case(mdp, options) {
            Ok(case) if case.passed() => {
                report.passed += 1;
                report.cases.push(case);
                continue;
            }
            Ok(case) => {
                let d = format!(
                    "winner gap {:e}, worst dominance {:e}",
                    case.winner_gap, case.worst_dominance
                );
                report.cases.push(case);
                d
            }
            Err(e @ (Error::OracleInconsistency(_) | Error::Domain(_))) => e.to_string(),
            Err(e) => return Err(e),
        };
        let dump = match dump_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("oracle_failure_{index}.json"));
                mdp.save(&path)?;
                Some(path)
            }
            None => None,
        };
        report.failures.push(OracleFailure {
            index,
            detail,
            dump,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerKind {
    TwoTimescale {
        alpha: StepSchedule,
        beta: StepSchedule,
    },
    OneTimescale {
        alpha: StepSchedule,
    },
}

#[derive(Debug, Clone)]
pub struct LearnerStudy {
    pub kind: LearnerKind,
    pub sampling: SamplingMode,
    pub seeds: Vec<u64>,
    pub num_steps: u64,
    pub snapshots: Vec<u64>,
    /// Count stability violations instead of aborting.
    pub lax: bool,
    pub keep_iterates: bool,
}

impl LearnerStudy {
    pub fn new(kind: LearnerKind, sampling: SamplingMode, seeds: Vec<u64>, num_steps: u64) -> Self {
        Self {
            kind,
            sampling,
            seeds,
            num_steps,
            snapshots: snapshot_grid(num_steps),
            lax: false,
            keep_iterates: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub seeds: Vec<u64>,
    pub traces: Vec<LearnerTrace>,
    /// Final `Q` (two-timescale) or `x` (one-timescale) per seed.
    pub finals: Vec<Vec<f64>>,
    /// Per-snapshot median over seeds.
    pub median: Vec<TraceRow>,
}

impl StudyOutcome {
    pub fn error_curve(&self) -> Vec<(u64, f64)> {
        self.median.iter().map(|r| (r.n, r.error)).collect()
    }

    pub fn g_track_curve(&self) -> Option<Vec<(u64, f64)>> {
        self.median
            .iter()
            .map(|r| r.g_track_err.map(|g| (r.n, g)))
            .collect()
    }

    pub fn violations(&self) -> u64 {
        self.traces.iter().map(|t| t.violations).sum()
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Runs one learner per seed (seed `s` drives stream 0 of `s`) and medians
/// the traces snapshot by snapshot.
pub fn run_learner_study(mdp: &TabularMdp, study: &LearnerStudy) -> Result<StudyOutcome> {
    if study.seeds.is_empty() {
        return Err(config("seeds list is empty"));
    }
    let options = SolverOptions::default();
    let reference = match study.kind {
        LearnerKind::TwoTimescale { alpha, beta } => {
            check_timescale_pair(&alpha, &beta)?;
            fixed_point_t(mdp, None, options)?.solution.into_inner()
        }
        LearnerKind::OneTimescale { alpha } => {
            alpha.validate()?;
            fixed_point_f(mdp, None, options)?.solution.into_inner()
        }
    };
    let trace_config = TraceConfig {
        snapshots: study.snapshots.clone(),
        keep_iterates: study.keep_iterates,
        strict: !study.lax,
        reference: Some(reference),
    };
    let runs: Vec<(Vec<f64>, LearnerTrace)> = study
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SamplerConfig {
                mode: study.sampling.clone(),
                seed,
                stream: 0,
            };
            let mut sampler = Sampler::new(&cfg, mdp)?;
            match study.kind {
                LearnerKind::TwoTimescale { alpha, beta } => {
                    let (state, trace) = two_timescale_run(
                        mdp,
                        &mut sampler,
                        &alpha,
                        &beta,
                        study.num_steps,
                        None,
                        None,
                        &trace_config,
                    )?;
                    Ok((state.q.into_inner(), trace))
                }
                LearnerKind::OneTimescale { alpha } => {
                    let (x, trace) = one_timescale_run(
                        mdp,
                        &mut sampler,
                        &alpha,
                        study.num_steps,
                        None,
                        &trace_config,
                    )?;
                    Ok((x.into_inner(), trace))
                }
            }
        })
        .collect::<Result<_>>()?;
    let (finals, traces): (Vec<_>, Vec<_>) = runs.into_iter().unzip();

    let rows = traces[0].rows.len();
    let median_rows = (0..rows)
        .map(|k| {
            let mut errs: Vec<f64> = traces.iter().map(|t| t.rows[k].error).collect();
            let g: Option<Vec<f64>> = traces.iter().map(|t| t.rows[k].g_track_err).collect();
            TraceRow {
                n: traces[0].rows[k].n,
                error: median(&mut errs),
                g_track_err: g.map(|mut g| median(&mut g)),
            }
        })
        .collect();
    Ok(StudyOutcome {
        seeds: study.seeds.clone(),
        traces,
        finals,
        median: median_rows,
    })
}

/// Slope fits for a two-timescale study: the `Q` error against `−β/2 ± 0.15`
/// and the `g`-tracking error against the one-sided `≤ −β/2 + 0.15`.
pub fn two_timescale_summary(
    outcome: &StudyOutcome,
    beta_exponent: f64,
    window: (u64, u64),
) -> Result<Vec<SummaryRow>> {
    let expected = -beta_exponent / 2.0;
    let q_fit = fit_loglog(&outcome.error_curve(), window)?;
    let g_curve = outcome
        .g_track_curve()
        .ok_or_else(|| Error::Fit("trace has no g-tracking column".into()))?;
    let g_fit = fit_loglog(&g_curve, window)?;
    Ok(vec![
        SummaryRow {
            label: "linf_err_q".into(),
            fit: q_fit,
            expected,
            lower: expected - SLOPE_BAND,
            upper: expected + SLOPE_BAND,
        },
        SummaryRow {
            label: "g_track_err".into(),
            fit: g_fit,
            expected,
            lower: f64::NEG_INFINITY,
            upper: expected + SLOPE_BAND,
        },
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarOutcome {
    pub c1: f64,
    pub c_tilde_2: f64,
    pub snapshots: Vec<u64>,
    /// Mean over seeds of `|x_n / x* − 1|`.
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub envelope: Vec<f64>,
}

impl ScalarOutcome {
    /// Snapshots `n ≥ min_n` where the mean error exceeds the envelope.
    pub fn envelope_breaches(&self, min_n: u64) -> Vec<u64> {
        self.snapshots
            .iter()
            .zip(self.mean.iter().zip(&self.envelope))
            .filter(|(n, (m, e))| **n >= min_n && m > e)
            .map(|(n, _)| *n)
            .collect()
    }

    pub fn mean_curve(&self) -> Vec<(u64, f64)> {
        self.snapshots
            .iter()
            .copied()
            .zip(self.mean.iter().copied())
            .collect()
    }
}

/// Runs the scalar recursion for each seed and averages `|x_n / x* − 1|`.
pub fn run_scalar_study(
    settings: &ScalarSettings,
    seeds: &[u64],
    num_steps: u64,
) -> Result<ScalarOutcome> {
    if seeds.is_empty() {
        return Err(config("seeds list is empty"));
    }
    let snapshots = snapshot_grid(num_steps);
    let params = |seed| ScalarRecursionParams {
        c_ell: settings.c_ell,
        c_u: settings.c_u,
        x_star: settings.x_star,
        gamma: settings.gamma,
        noise: settings.noise,
        num_steps,
        seed,
        x0: settings.x0,
    };
    let template = params(0);
    template.validate()?;
    let runs: Vec<Vec<(u64, f64)>> = seeds
        .par_iter()
        .map(|&seed| scalar_recursion_run(&params(seed), &snapshots))
        .collect::<Result<_>>()?;
    let c1 = template.c1();
    let ct2 = c_tilde_2(settings.c_u, settings.x_star, settings.gamma, c1);
    let k = runs.len() as f64;
    let mut mean = Vec::with_capacity(snapshots.len());
    let mut med = Vec::with_capacity(snapshots.len());
    for i in 0..snapshots.len() {
        let mut col: Vec<f64> = runs.iter().map(|r| r[i].1).collect();
        mean.push(col.iter().sum::<f64>() / k);
        med.push(median(&mut col));
    }
    Ok(ScalarOutcome {
        c1,
        c_tilde_2: ct2,
        envelope: snapshots.iter().map(|&n| scalar_envelope(ct2, n)).collect(),
        snapshots,
        mean,
        median: med,
    })
}

pub fn scalar_summary(outcome: &ScalarOutcome, window: (u64, u64)) -> Result<Vec<SummaryRow>> {
    let fit: RateFit = fit_loglog(&outcome.mean_curve(), window)?;
    Ok(vec![SummaryRow {
        label: "mean_rel_err".into(),
        fit,
        expected: -0.5,
        lower: -0.5 - SLOPE_BAND,
        upper: -0.5 + SLOPE_BAND,
    }])
}
