//! Optimal principal-agent contracts in partially observed linear systems.
//!
//! The library builds and prices the closed-form optimal contract of the
//! single-agent problem, verifies agent-side optimality numerically
//! (participation, incentive compatibility, stationarity, the sufficient
//! condition on the adjoint), and computes the mean-field interacting-agents
//! equilibrium with its fixed-point and Pontryagin oracles.
//!
//! Modules follow the pipeline:
//!
//! - [`grid`], [`numerics`], [`rng`], [`mc`] — deterministic integration and
//!   reproducible Monte Carlo plumbing.
//! - [`model`] — coefficients, prior, control set, effort costs,
//!   Hamiltonians and the best-response map.
//! - [`filter`] — posterior-variance Riccati equation, filter simulation,
//!   and observation-only reconstruction.
//! - [`contract`] — the closed-form optimal contract, adjoint processes,
//!   payoff evaluation, and the principal's value.
//! - [`agent`] — Monte Carlo valuation and the optimality checks.
//! - [`mfg`] — the mean-field equilibrium and its verification oracles.
//! - [`config`], [`runner`] — the batch CLI: JSON experiment configs, CSV
//!   and JSON report outputs, machine-readable exit codes.
//!
//! Every simulation is bit-reproducible: paths draw from ChaCha12 streams
//! keyed by `(master_seed, path_index)` and reductions run in a fixed
//! order regardless of thread count (see [`rng`] and [`mc`]).

pub mod agent;
pub mod config;
pub mod contract;
pub mod error;
pub mod filter;
pub mod grid;
pub mod mc;
pub mod mfg;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
pub use grid::{Path, TimeGrid};
pub use mc::{McConfig, McEstimate};
pub use model::{
    best_response, hamiltonian_cara, hamiltonian_general, hamiltonian_linear, CaraParams,
    Coefficient, ControlSet, CostFunction, LinearModel, QuadraticCost,
};
