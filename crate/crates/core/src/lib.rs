//! Simulation and verification toolkit for dX/dt = beta1 (X < B), beta2 (X > B)
//! driven by Brownian paths.

pub mod analytics;
pub mod error;
pub mod excursions;
pub mod lipschitz;
pub mod localtime;
pub mod mc;
pub mod paths;
pub mod quadrature;
pub mod rayknight;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
