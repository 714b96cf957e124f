//! Training-free verification of LLM reasoning traces.
//!
//! Each trace is reduced to the difference between the hidden states
//! captured at the end and at the start of its reasoning block. Labeled
//! differences are averaged into a success and a failure centroid, new
//! traces are classified by which centroid is nearer, and candidate sets
//! are reranked by their distance to the success centroid.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod matrix;
pub mod store;
pub mod synth;
pub mod verifier;

pub use error::{Error, Result};
pub use matrix::LayerMatrix;
pub use store::{CentroidPair, Label, Manifest, TrajectoryRecord};
pub use verifier::{ActivationDelta, Verdict, VerifierScore};
