//! Benchmark tests for quantum devices: tests, canonical forms, classical
//! thresholds and a truncated-Fock optical simulator.

pub mod benchmark;
pub mod builtins;
pub mod canonical;
pub mod cv;
pub mod error;
pub mod model;
pub mod random;
pub mod tensor;

pub use error::{QbError, Result};
