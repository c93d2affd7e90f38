//! Time-varying regression and model-reference adaptive control with first-
//! and higher-order parameter update laws.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod models;
pub mod output;
pub mod scenarios;
pub mod signals;
pub mod tuners;
pub mod verify;

pub use error::{Error, Result};
