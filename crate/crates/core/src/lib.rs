//! Cavity-coupled quantum-dot single-photon source: emitter and cavity
//! model, photon-counting Monte Carlo, correlation analysis and fitting.

pub mod analysis;
pub mod budget;
pub mod correlate;
pub mod error;
pub mod fitting;
pub mod mc;
pub mod model;
pub mod polarization;
pub mod rng;
pub mod spatial;

pub use error::{Error, Result};
