//! Random structural causal model benchmarks.
//!
//! A [`soi::SpaceOfInterest`] describes a family of causal models. From it the
//! crate samples graphs and mechanisms ([`scm::sample_scm`]), observational
//! data, causal queries with Monte-Carlo ground truths ([`queries`]),
//! characterization metrics ([`analysis`]) and statistical checks of the
//! sampled models ([`verify`]). [`eval`] drives external estimators over
//! generated benchmarks.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod mechanisms;
pub mod queries;
pub mod scm;
pub mod seed;
pub mod soi;
pub mod verify;

pub use error::{Error, Result};
