//! Least-squares model averaging over nested candidate models: Mallows-type
//! weight selection, exact simplex solvers, loss/risk oracles, and a Monte
//! Carlo harness.

pub mod cli_report;
pub mod dgp;
pub mod error;
#[doc(hidden)]
pub mod mat;
pub mod montecarlo;
pub mod nested_projection;
pub mod objectives;
pub mod simplex_solver;

#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};
