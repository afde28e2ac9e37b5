//! Multi-operator mmWave spectrum sharing.
//!
//! Operators share one band and decide jointly which BS serves each UE
//! (association `A`) and which BSs estimate and null which UEs
//! (coordination `C`), subject to per-operator coordination budgets. The
//! crate provides the geometric channel model, RZF beamforming, interference
//! and rate evaluation, block-coordinate descent over `(A, C)`, learned rate
//! models and the hybrid explore/exploit control loop.

pub mod beamforming;
pub mod channel;
pub mod config;
pub mod coordination;
pub mod error;
pub mod evaluator;
pub mod hybrid;
pub mod interference;
pub mod matrix;
pub mod optimizer;
pub mod rate_model;
pub mod report;
pub mod scenario;
pub mod topology;

pub use config::Config;
pub use coordination::{SharingDecision, SharingProblem};
pub use error::{Error, Result};
pub use matrix::BinMatrix;
pub use topology::NetworkTopology;
