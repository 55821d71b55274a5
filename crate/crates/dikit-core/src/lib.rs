//! Certification toolkit for device-independent key rates in routed Bell
//! scenarios: local CHSH self-tests bound how compatible a party's two
//! measurements can be, the bounds transfer to the long-range state through
//! marginal constraints, and entropic uncertainty turns them into certified
//! secret-key-rate lower bounds. Every construction is checked against exact
//! qubit-scale computations.

pub mod analytic;
pub mod entropy;
pub mod error;
pub mod linalg;
pub mod model;
pub mod npo;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
