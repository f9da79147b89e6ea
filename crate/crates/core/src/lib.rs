//! Information-geometric analysis of probabilistic classifiers.
//!
//! A classifier evaluated on `N` samples with `C` classes is a point on a
//! product of `N` probability simplices. Taking square roots of the
//! probabilities maps each simplex onto the positive orthant of a
//! `(C-1)`-sphere, which gives closed-form geodesics and a natural
//! divergence (the sample-averaged Bhattacharyya distance).
//!
//! The crate is organised by concern:
//!
//! - [`model`]: prediction matrices, labels, and the divergences between models.
//! - [`geodesic`]: great-circle geodesics between two models.
//! - [`trajectory`]: progress along the ignorance-to-truth geodesic, reindexing
//!   of checkpoint sequences, trajectory distances and Riemann lengths.
//! - [`imprint`]: mapping a representation onto a new task with class-mean
//!   classifier rows.
//! - [`embed`]: InPCA, the signed isometric embedding of a set of models.
//! - [`stats`]: mean trajectories, tube radii and normalized distance curves.
//! - [`synth`]: synthetic tasks, a logistic-regression trainer and brute-force
//!   oracles.
//! - [`io`], [`manifest`], [`pipeline`], [`config`]: file formats and plumbing.

pub mod config;
pub mod embed;
pub mod error;
pub mod geodesic;
pub mod imprint;
pub mod io;
pub mod manifest;
pub mod minimize;
pub mod model;
mod par;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod trajectory;

pub use error::{Error, ErrorKind, Result};
pub use geodesic::GeodesicSegment;
pub use imprint::{FeatureMatrix, ImprintedClassifier};
pub use model::{LabelVector, PredictionMatrix, SampleDivergences, TaskSpec};
pub use trajectory::{ReindexedCurve, Trajectory};
