//! A desk-scale unlearning laboratory.
//!
//! A tiny additive-logit softmax language model is trained on templated
//! facts, then unlearned with each objective from [`crate::losses`]. The
//! corpus shares template parameter rows across syntactically similar
//! questions, which is the modeling hypothesis under which collateral
//! forgetting concentrates on syntactically similar neighbors; the runs
//! make that effect measurable through utility traces, gradient-norm
//! probes, and the train/test regularization sweep.

mod corpus;
mod model;
mod sweep;
mod train;

pub use corpus::{
    build_toy_corpus, CorpusOracleGenerator, CorpusSizes, ToyCorpus, ToyFact, IDK_SURFACE,
};
pub use model::{GradBuffer, ToyModel};
pub use sweep::{regularization_sweep, SweepCell, SweepTable, SWEEP_SET_KINDS};
pub use train::{
    default_spec, fact_prob, fact_top1, fit_initial, gradient_norm_probe, init_model, mean_nll,
    nll_grad, objective_grad, objective_value, rud_by_kind, toy_forget_efficacy, toy_utility,
    unlearn, utility_by_kind, FitParams, FitResult, RunTrace, TraceStep, UnlearnParams,
    UnlearnRun, DEFAULT_FE_BAND,
};

use alloc::boxed::Box;
use alloc::string::String;

use crate::losses::LossError;
use crate::neighborset::NeighborSetError;

/// Errors from corpus construction, fitting, and unlearning runs.
#[derive(Debug, thiserror::Error)]
pub enum ToyLabError {
    #[error("infeasible corpus sizes: {0}")]
    InfeasibleSizes(String),
    #[error("corpus construction failed: {0}")]
    Corpus(String),
    #[error(transparent)]
    Pipeline(#[from] NeighborSetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("fit did not converge within {epochs} epochs")]
    NonConvergence { epochs: usize },
    #[error("forget efficacy never entered the target band after {steps} steps")]
    BandNeverReached {
        steps: usize,
        /// The partial run up to the failure, for inspection.
        run: Box<UnlearnRun>,
    },
    #[error("gradient probe set is empty")]
    EmptyProbe,
}
