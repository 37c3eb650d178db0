//! Monte-Carlo simulation of downlink coordinated multipoint joint
//! processing with dynamic base-station clustering.

pub mod channel;
pub mod clustering;
pub mod config;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mumimo;
pub mod results;
pub mod seeding;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
