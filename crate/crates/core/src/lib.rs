//! Security analysis of binary template databases matched under a Hamming
//! threshold: attack complexities, near-collision and master-template
//! probabilities, exact ball intersections and Monte Carlo attack simulators.

pub mod accuracy_bounds;
pub mod adaptive;
pub mod ball_solver;
pub mod combinatorics;
pub mod error;
pub mod io;
pub mod master_template;
pub mod metric_bounds;
pub mod reproduce;
pub mod simulate;

pub use error::{Error, Result};
