//! Data-driven structured pruning for model personalization.
//!
//! A trained source network is specialized to an unlabeled target dataset by
//! accumulating per-unit absolute activations over the target data (the
//! ledger), dropping the lowest-scoring units, and selecting the sparsity
//! that maximizes held-out target accuracy. Adaptation uses forward passes
//! only: no labels, no gradients.
//!
//! The crate also ships the comparison methods (gradient fine-tuning,
//! SVD factorization, magnitude and random pruning) behind a common
//! [`strategy::Strategy`] trait, an exact MAC/memory instrumentation layer,
//! and the experiment harness that produces the sparsity, data-efficiency,
//! and class-count studies as CSV reports.

pub mod data;
mod error;
pub mod experiment;
pub mod io;
pub mod ledger;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod prune;
pub mod report;
pub mod rng;
pub mod strategy;
pub mod synth;
pub mod tensor;

pub use data::{kfold, Fold, LabeledDataset, Provenance};
pub use error::{Error, Result};
pub use ledger::{ActivationLedger, ActivationSite, UnitScore};
pub use net::{adam_step, cross_entropy_loss, AdamState, GradientSet, LayerSpec, Network};
pub use prune::{
    prune, safe_ramp, sweep, sweep_with_refinement, threshold_for_sparsity, PruneMask, SweepEntry,
    SweepResult,
};
pub use tensor::{Shape, Tensor};
