//! Electrode-confined conduction states in diamond and the spin-to-charge
//! readout figures that follow from them.

pub mod broadening;
pub mod config;
pub mod eigen;
pub mod electrostatics;
pub mod error;
pub mod grid;
pub mod io;
pub mod photoionization;
pub mod pipeline;
pub mod quadrature;
pub mod root;
pub mod scc;
pub mod units;

pub use error::{Error, Result};
