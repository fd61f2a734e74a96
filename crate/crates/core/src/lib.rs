//! Numerical laboratory for random products of `SL(d, R)` matrices.
//!
//! The crate covers the combinatorics of admissible topologies, the geometry
//! of flags and configuration spaces, Lyapunov spectra and Oseledets frames,
//! sampled stationary measures with dimension estimators, and entropy
//! estimators tied together by Ledrappier-Young style consistency reports.

pub mod entropy;
pub mod error;
pub mod flag;
pub mod harness;
pub mod kdtree;
pub mod linalg;
pub mod measure;
pub mod parallel;
pub mod plot;
pub mod stats;
pub mod topology;
pub mod walk;

pub use error::{Error, Result};
