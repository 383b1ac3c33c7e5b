//! Experiment harness: configuration, learner runner, equivalence report,
//! and curve exports behind the `okreg` command-line interface.

pub mod config;
pub mod export;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, KernelDescriptor, LearnerKind};
pub use export::{export_curves, import_curves, ExportFormat};
pub use report::{equivalence_report, CheckStatus, EquivalenceReport};
pub use runner::{prepare_task, run_experiment, run_learner, CurveRecord, RunOutput};
