//! Gaze-based expertise grading: session ingestion, fixation detection,
//! windowed features, group statistics, a multi-stream classifier and the
//! subject-disjoint evaluation protocol around it.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fixation;
pub mod nn;
pub mod plot;
pub mod session;
pub mod stats;
pub mod synth;
pub mod windowing;

pub use error::{Error, Result};
