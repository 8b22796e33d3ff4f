//! Fairness metrics and fair binary classification for annotated tabular data.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure function of
//! its inputs and an explicit seed: ingestion, timing, reports and the command line
//! live in the `fairbench` companion crate.
//!
//! Conventions used throughout:
//! - the sensitive attribute `S` is binarized, `1` = privileged, `0` = unprivileged;
//! - the label `Y` is binary with `1` the favorable outcome;
//! - metrics whose denominator is empty are reported as `None` ("absent"), never `0`.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod inprocess;
pub mod metrics;
pub mod model;
mod optim;
pub mod postprocess;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use dataset::{AttributeKind, AttributeRole, AttributeSpec, Dataset, Encoding, SplitPlan};
pub use error::{Error, Result};
pub use metrics::{Classifier, ConfusionMatrix, Correctness, Determinism, FairnessReport};
pub use model::{TrainOptions, TrainedModel};
