//! Online kernel regression with effective target shift and target
//! correction.
//!
//! An online learner that consumes a stream sample by sample ends up with a
//! different predictor than an offline learner fitted to the same data. In
//! kernel form the gap is structural: the offline solution works with the
//! full Gram matrix, the online one only with its strictly upper-triangular
//! (past-to-present) part. This crate builds both closed forms, the
//! effective targets that make an offline fit reproduce an online run, the
//! corrected targets that make an online run reproduce the offline fit, and
//! a causal block-wise correction usable on a live stream — including a
//! variant driven by the empirical tangent kernel of a small network.
//!
//! Modules:
//! - [`kernel`]: kernel evaluation, Gram assembly, directional masks, decay
//!   diagonal.
//! - [`regression`]: offline ridge, streaming SGD, and the equivalent closed
//!   forms.
//! - [`shift`]: effective targets and their one-step dynamics.
//! - [`correction`]: exact and block-wise target correction with an
//!   independent cross-check route.
//! - [`ntk`]: small MLPs, exact Jacobians, empirical-NTK snapshots, and the
//!   corrected training loop.
//! - [`tasks`]: deterministic synthetic tasks and presentation orders.
//! - [`io`]: matrix files and predictor descriptors.

pub mod correction;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod ntk;
pub mod regression;
pub mod shift;
pub mod tasks;

pub use error::{Error, Result};
pub use kernel::{
    decay_diag, directional_mask, eval_kernel, gram, gram_self, DecayDiagonal, FeatureMap,
    GramBundle, KernelSpec,
};
pub use regression::{
    minibatch_closed_form, offline_predict, online_closed_form, sgd_run, HyperParams,
    OrderedDataset, Predictor, SgdOptions, SgdRun, WeightState,
};
pub use shift::{effective_targets, online_residual, shift_one_step, Provenance, TargetMatrix};
pub use correction::{
    corrected_targets, correction_one_step, eval_block_loss, iterative_correction,
    iterative_correction_bcg_oracle, CorrectionCoefficients, CorrectionPipeline, CorrectionStep,
};
