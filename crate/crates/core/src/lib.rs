//! Simulation, synthetic video, and online identification of a hybrid
//! bouncing-ball system.
//!
//! - [`dynamics`]: event-accurate integrator for flight, bounce and rolling.
//! - [`video`]: rendering, frame differencing and centroid tracking.
//! - [`dataset`]: domain-randomized clip generation and the `V2P1` container.
//! - [`baselines`]: sampling alignment, GP Bayesian optimization and DMD.
//! - [`smc`]: particle filter over joint state and parameters.
//! - [`interception`]: closed-loop catching experiment with a slow arm.
//! - [`bench`]: evaluation grids shared by the CLI and the acceptance suite.

pub mod baselines;
pub mod bench;
pub mod dataset;
pub mod dynamics;
pub mod fmt;
pub mod interception;
pub mod params;
pub mod smc;
pub mod stats;
pub mod video;

pub use dynamics::{BallState, Mode, PhysParams, Trajectory};
