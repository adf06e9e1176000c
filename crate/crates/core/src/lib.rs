//! Downlink inter-cell interference in a 19-cell hexagonal network:
//! geometry, path-loss averaging, closed-form moments, typical-set
//! construction, Monte-Carlo convolution and a Burr-XII surrogate model.

pub mod burr;
pub mod cache;
pub mod closed_form;
pub mod config;
pub mod error;
pub mod geometry;
pub mod mcp;
pub mod numeric;
pub mod propagation;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod typical_set;

pub use error::{Error, Result};
