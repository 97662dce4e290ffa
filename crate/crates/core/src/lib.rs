//! Competitive equilibria of Eisenberg-Gale markets whose buyers are
//! auto-bidders with budgets and return-on-spend (RoS) targets.
//!
//! The crate covers the offline equilibrium (dual solve, allocation recovery
//! and optimality checks), the first-best revenue benchmark, the
//! market-clearing mechanism with misreport probes, and the decentralized
//! online algorithm with regret instrumentation.

pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod first_best;
pub mod io;
pub mod lp;
pub mod market;
pub mod mechanism;
pub mod online;
pub mod tolerance;

pub use equilibrium::{
    solve_dual, solve_equilibrium, DualPoint, DualSolverOptions, EquilibriumSolution,
};
pub use error::{Error, Result};
pub use market::{MarketInstance, SampleSpec, ValueFamily};
