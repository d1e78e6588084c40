//! Experiment harness: configuration, orchestration, slope fitting and
//! persistence.

pub mod config;
pub mod fit;
pub mod io;
pub mod tasks;

pub use config::{ExperimentConfig, MdpSource, OracleSettings, ScalarSettings, Task};
pub use fit::{fit_loglog, RateFit};
pub use tasks::{
    run_example, run_learner_study, run_oracle_check, run_scalar_study, LearnerKind, LearnerStudy,
};
