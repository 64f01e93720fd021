//! Comparison methods for system identification and forecasting:
//! uniform-sampling alignment ([`lsq`]), GP Bayesian optimization ([`bo`])
//! and exact dynamic mode decomposition ([`dmd`]).
//!
//! The parametric methods are given the true initial position and velocity
//! and align simulated trajectories with observed normalized positions.

pub mod bo;
pub mod dmd;
pub mod gp;
pub mod lsq;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, BallState, PhysParams};
use crate::stats::mse;

pub use bo::{identify_bo, BoConfig};
pub use dmd::{identify_dmd, DmdForecaster};
pub use gp::GpModel;
pub use lsq::{align_candidates, identify_lsq};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("no observations")]
    EmptyObservation,
    #[error("budget too small: {0}")]
    Budget(String),
    #[error("Cholesky factorization failed (jitter {jitter:e})")]
    CholeskyFailure { jitter: f64 },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lsq,
    Bo,
    Dmd,
    Smc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lsq => "lsq",
            Method::Bo => "bo",
            Method::Dmd => "dmd",
            Method::Smc => "smc",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lsq" => Ok(Method::Lsq),
            "bo" => Ok(Method::Bo),
            "dmd" => Ok(Method::Dmd),
            "smc" => Ok(Method::Smc),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub theta_hat: PhysParams,
    /// Trajectory MSE in normalized units².
    pub objective: f64,
    pub n_evals: usize,
    pub wall_time: f64,
    pub method: Method,
}

/// Mean squared error between the trajectory simulated from `init` under
/// `candidate` and the observed normalized positions. Candidates that cannot
/// be simulated score `+inf`.
pub fn trajectory_objective(candidate: &PhysParams, init: &BallState, observed: &[[f64; 2]], dt: f64) -> f64 {
    if observed.is_empty() {
        return f64::INFINITY;
    }
    let mut start = *init;
    if start.y < candidate.table_h {
        start.y = candidate.table_h;
    }
    match dynamics::simulate_frames(&start, candidate, observed.len(), dt) {
        Ok(traj) => mse(&traj.normalized_positions(), observed),
        Err(_) => f64::INFINITY,
    }
}
