//! Finite-key key-rate analysis for three-intensity decoy-state BB84 with a
//! leaky transmitter.
//!
//! The pipeline runs from channel-model counts, through trace-distance
//! constrained decoy linear programs, to a phase-error bound and the final
//! key length. [`optimizer::optimize`] wraps it in the max-min search over
//! Alice/Bob settings and Eve's phases.

pub mod channel;
pub mod concentration;
pub mod error;
pub mod estimation;
pub mod leakage;
pub mod lp;
pub mod optimizer;
pub mod params;
pub mod pipeline;
pub mod security;
pub mod stats;
pub mod sweep;

pub use error::Error;
