//! Robotic fish swimming pipeline: a D2Q9 lattice-Boltzmann pool, an
//! articulated four-link fish coupled to it through an immersed boundary,
//! the position-control MDP around it, a soft actor-critic trainer, a
//! CPG-PID baseline controller and servo calibration tools.

pub mod baseline;
pub mod body;
pub mod calibrate;
pub mod coupling;
pub mod env;
pub mod error;
pub mod fluid;
pub mod harness;
pub mod sac;

pub use error::{Error, Result};
