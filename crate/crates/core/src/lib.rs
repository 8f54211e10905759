//! Exact and analytic world counting for branching measure ensembles.
//!
//! The crate enumerates worlds produced by repeated decoherence events as
//! frequency classes in log-domain arithmetic, applies a mangling transition
//! region in world size, and measures how closely counting unmangled worlds
//! recovers measure-weighted outcome frequencies.

pub mod branching;
pub mod coherence_toy;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod lognormal;
pub mod mangling;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::LogValue;
