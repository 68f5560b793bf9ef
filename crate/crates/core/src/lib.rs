//! Comb-based multiaxis noise spectroscopy for a single qubit.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod noise;
pub mod pauli;
pub mod filters;
pub mod pulse_control;
pub mod quadrature;
pub mod reconstruction;

pub use error::{QnsError, Result};
