use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use riskq_core::harness::config::{
    ExperimentConfig, MdpSource, OracleSettings, ScalarSettings, Task,
};
use riskq_core::harness::io::{
    create_file, fmt_f64, write_median, write_metadata, write_solution, write_summary,
    write_traces, SummaryRow, TraceKind,
};
use riskq_core::harness::tasks::{
    check_oracle_case, oracle_cases, run_example, run_learner_study, run_oracle_check,
    run_scalar_study, scalar_summary, solve, two_timescale_summary, LearnerKind, LearnerStudy,
    StudyOutcome,
};
use riskq_core::learners::StepSchedule;
use riskq_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "riskq",
    version,
    about = "Risk-sensitive tabular Q-learning with exponential utilities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; explicit flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSV and metadata files
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Single seed (oracle-check: seed of the MDP generator)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated seed list for stochastic runs
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed points of F and T, greedy policy, and conjugacy check
    Solve {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Two-timescale (Q, g) learner
    #[command(name = "learn-2ts")]
    Learn2ts(LearnArgs),
    /// One-timescale learner on the utility scale
    #[command(name = "learn-1ts")]
    Learn1ts(LearnArgs),
    /// Scalar recursion and its finite-time envelope
    ScalarRate {
        #[arg(long)]
        steps: Option<u64>,
        /// Noise amplitude c (noise is uniform on [-c, c])
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Brute-force optimality check on random MDPs (or one MDP file)
    OracleCheck {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        max_states: Option<usize>,
        #[arg(long)]
        max_actions: Option<usize>,
    },
    /// Risk-neutral vs risk-averse values on the two-state example
    Example,
}

#[derive(Args)]
struct MdpArg {
    /// MDP JSON file (defaults to the two-state example)
    #[arg(long)]
    mdp: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    mdp: MdpArg,
    #[arg(long)]
    steps: Option<u64>,
    /// Power-law exponent of the Q (or x) step size
    #[arg(long)]
    alpha: Option<f64>,
    /// Power-law exponent of the g step size (learn-2ts only)
    #[arg(long)]
    beta: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::Domain(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::EnumerationCap { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn task_of(command: &Command) -> Task {
    match command {
        Command::Solve { .. } => Task::Solve,
        Command::Learn2ts(_) => Task::Learn2ts,
        Command::Learn1ts(_) => Task::Learn1ts,
        Command::ScalarRate { .. } => Task::ScalarRate,
        Command::OracleCheck { .. } => Task::OracleCheck,
        Command::Example => Task::Example,
    }
}

/// Flag values as a config layer that wins over the file.
fn flag_layer(cli: &Cli, file: &ExperimentConfig) -> ExperimentConfig {
    let task = task_of(&cli.command);
    let mut layer = ExperimentConfig {
        task: Some(task),
        out_dir: cli.out.clone(),
        seeds: cli.seeds.clone().or(cli.seed.map(|s| vec![s])),
        ..Default::default()
    };
    let mdp_flag = |m: &MdpArg| m.mdp.clone().map(|path| MdpSource::File { path });
    match &cli.command {
        Command::Solve { mdp, tolerance } => {
            layer.mdp = mdp_flag(mdp);
            layer.tolerance = *tolerance;
        }
        Command::Learn2ts(a) | Command::Learn1ts(a) => {
            layer.mdp = mdp_flag(&a.mdp);
            layer.num_steps = a.steps;
            layer.alpha = a.alpha.map(StepSchedule::power_law);
            layer.beta = a.beta.map(StepSchedule::power_law);
        }
        Command::ScalarRate { steps, noise } => {
            layer.num_steps = *steps;
            if let Some(noise) = noise {
                layer.scalar = Some(ScalarSettings {
                    noise: *noise,
                    ..file.scalar()
                });
            }
        }
        Command::OracleCheck {
            mdp,
            count,
            max_states,
            max_actions,
        } => {
            layer.mdp = mdp_flag(mdp);
            layer.seeds = None;
            let base = file.oracle();
            if count.is_some()
                || max_states.is_some()
                || max_actions.is_some()
                || cli.seed.is_some()
            {
                layer.oracle = Some(OracleSettings {
                    count: count.unwrap_or(base.count),
                    max_states: max_states.unwrap_or(base.max_states),
                    max_actions: max_actions.unwrap_or(base.max_actions),
                    seed: cli.seed.unwrap_or(base.seed),
                });
            }
        }
        Command::Example => {}
    }
    layer
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let layer = flag_layer(&cli, &file);
    let cfg = file.merged_with(layer);
    let out = cfg.out_dir.clone();
    match task_of(&cli.command) {
        Task::Example => example(&cfg, out.as_deref()),
        Task::Solve => solve_task(&cfg, out.as_deref()),
        Task::Learn2ts | Task::Learn1ts => learn(&cfg, task_of(&cli.command), out.as_deref()),
        Task::ScalarRate => scalar(&cfg, out.as_deref()),
        Task::OracleCheck => oracle(&cfg, out.as_deref()),
    }
}

fn example(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExitCode> {
    let report = run_example()?;
    print!("{}", report.table());
    if let Some(dir) = out {
        let f = create_file(dir, "example.json")?;
        serde_json::to_writer_pretty(f, &report)?;
        write_metadata(dir, cfg, None, json!({}))?;
    }
    match report.check() {
        Ok(()) => Ok(ExitCode::SUCCESS),
        Err(e) => {
            eprintln!("{e}");
            Ok(ExitCode::from(1))
        }
    }
}

fn solve_task(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExitCode> {
    let mdp = cfg.mdp()?;
    let report = solve(&mdp, cfg.solver_options()?)?;
    println!("state action {:>24} {:>24} {:>24} greedy", "x", "ln_x", "q");
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let i = mdp.index(s, a);
            println!(
                "{s:>5} {a:>6} {:>24} {:>24} {:>24} {}",
                fmt_f64(report.log_x[i].exp()),
                fmt_f64(report.log_x[i]),
                fmt_f64(report.q[i]),
                if report.greedy[s] == a { "*" } else { "" }
            );
        }
    }
    println!(
        "iterations F/T: {}/{}  converged: {}  conjugacy gap: {:e}",
        report.iterations_f, report.iterations_t, report.converged, report.conjugacy_gap
    );
    if let Some(dir) = out {
        write_solution(
            create_file(dir, "solution.csv")?,
            &mdp,
            &report.log_x,
            &report.q,
            &report.greedy,
        )?;
        write_metadata(
            dir,
            cfg,
            Some(&mdp),
            json!({"iterations_f": report.iterations_f, "iterations_t": report.iterations_t,
                   "converged": report.converged, "conjugacy_gap": report.conjugacy_gap}),
        )?;
    }
    Ok(if report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn print_summary(rows: &[SummaryRow]) {
    for row in rows {
        println!(
            "slope[{}] = {:.4} (r² {:.3}, {} points), expected {:.3}, band [{:.3}, {:.3}]: {}",
            row.label,
            row.fit.slope,
            row.fit.r_squared,
            row.fit.points,
            row.expected,
            row.lower,
            row.upper,
            if row.in_band() {
                "in band"
            } else {
                "out of band"
            }
        );
    }
}

fn learn(cfg: &ExperimentConfig, task: Task, out: Option<&Path>) -> Result<ExitCode> {
    let mdp = cfg.mdp()?;
    let alpha = cfg.alpha(task);
    let kind = match task {
        Task::Learn2ts => LearnerKind::TwoTimescale {
            alpha,
            beta: cfg.beta(),
        },
        _ => LearnerKind::OneTimescale { alpha },
    };
    let mut study = LearnerStudy::new(kind, cfg.sampling(task), cfg.seeds()?, cfg.num_steps()?);
    study.keep_iterates = cfg.keep_iterates.unwrap_or(false);
    let outcome = run_learner_study(&mdp, &study)?;
    let trace_kind = match kind {
        LearnerKind::TwoTimescale { .. } => TraceKind::TwoTimescale,
        LearnerKind::OneTimescale { .. } => TraceKind::OneTimescale,
    };
    report_study(&outcome, trace_kind);

    let window = cfg.fit_window()?;
    let summary = match kind {
        LearnerKind::TwoTimescale {
            beta: StepSchedule::PowerLaw { exponent },
            ..
        } => two_timescale_summary(&outcome, exponent, window).ok(),
        _ => None,
    };
    if let Some(rows) = &summary {
        print_summary(rows);
    }
    if let Some(dir) = out {
        let pairs: Vec<_> = outcome
            .seeds
            .iter()
            .copied()
            .zip(outcome.traces.iter())
            .collect();
        write_traces(create_file(dir, "trace.csv")?, trace_kind, &pairs)?;
        write_median(create_file(dir, "median.csv")?, trace_kind, &outcome.median)?;
        if let Some(rows) = &summary {
            write_summary(create_file(dir, "summary.csv")?, rows)?;
        }
        write_metadata(
            dir,
            cfg,
            Some(&mdp),
            json!({"violations": outcome.violations()}),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn report_study(outcome: &StudyOutcome, kind: TraceKind) {
    let column = kind.error_column();
    for (seed, trace) in outcome.seeds.iter().zip(&outcome.traces) {
        if let Some(last) = trace.rows.last() {
            println!("seed {seed}: n = {} {column} = {:.6e}", last.n, last.error);
        }
    }
    if let Some(last) = outcome.median.last() {
        print!("median: n = {} {column} = {:.6e}", last.n, last.error);
        if let Some(g) = last.g_track_err {
            print!(" g_track_err = {g:.6e}");
        }
        println!();
    }
    println!("stability violations: {}", outcome.violations());
}

fn scalar(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExitCode> {
    let settings = cfg.scalar();
    let seeds = cfg.seeds()?;
    let steps = cfg.num_steps()?;
    let outcome = run_scalar_study(&settings, &seeds, steps)?;
    println!(
        "C1 = {:.6}  C̃₂ = {:.6}  seeds = {}",
        outcome.c1,
        outcome.c_tilde_2,
        seeds.len()
    );
    println!(
        "{:>10} {:>14} {:>14} {:>14}",
        "n", "mean", "median", "envelope"
    );
    for i in 0..outcome.snapshots.len() {
        println!(
            "{:>10} {:>14.6e} {:>14.6e} {:>14.6e}",
            outcome.snapshots[i], outcome.mean[i], outcome.median[i], outcome.envelope[i]
        );
    }
    let breaches = outcome.envelope_breaches(100);
    println!("envelope breaches at n ≥ 100: {breaches:?}");
    let summary = scalar_summary(&outcome, cfg.fit_window()?).ok();
    if let Some(rows) = &summary {
        print_summary(rows);
    }
    if let Some(dir) = out {
        let mut w = csv::Writer::from_writer(create_file(dir, "scalar.csv")?);
        w.write_record(["n", "mean_rel_err", "median_rel_err", "envelope"])?;
        for i in 0..outcome.snapshots.len() {
            w.write_record([
                outcome.snapshots[i].to_string(),
                fmt_f64(outcome.mean[i]),
                fmt_f64(outcome.median[i]),
                fmt_f64(outcome.envelope[i]),
            ])?;
        }
        w.flush()?;
        if let Some(rows) = &summary {
            write_summary(create_file(dir, "summary.csv")?, rows)?;
        }
        write_metadata(
            dir,
            cfg,
            None,
            json!({"c1": outcome.c1, "c_tilde_2": outcome.c_tilde_2,
                   "box_mechanism": "iterates clamped to [c_ell, c_u] after each update",
                   "noise": "uniform on [-c, c]"}),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExitCode> {
    let options = cfg.solver_options()?;
    if let Some(source) = &cfg.mdp {
        let mdp = source.load()?;
        let case = check_oracle_case(&mdp, options)?;
        println!(
            "greedy {:?} vs brute-force {:?}: winner gap {:e}, worst dominance {:e} over {} policies",
            case.greedy_actions, case.best_actions, case.winner_gap, case.worst_dominance, case.policies
        );
        return Ok(if case.passed() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        });
    }
    let settings = cfg.oracle();
    let mdps = oracle_cases(&settings)?;
    let dump_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("oracle-failures"));
    let report = run_oracle_check(&mdps, options, Some(&dump_dir))?;
    for failure in &report.failures {
        println!("case {} failed: {}", failure.index, failure.detail);
        if let Some(path) = &failure.dump {
            println!("  replay with: riskq oracle-check --mdp {}", path.display());
        }
    }
    println!("{}/{} passed", report.passed, report.total());
    if let Some(dir) = out {
        write_metadata(
            dir,
            cfg,
            None,
            json!({"passed": report.passed, "failed": report.failures.len()}),
        )?;
    }
    Ok(if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
