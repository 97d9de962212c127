//! Ensemble-level learning dynamics, epistemic thermodynamics and
//! Wasserstein-2 transport.

pub mod error;
pub mod numeric;
pub mod rng;

pub mod landscape;
pub mod ensemble;

pub use error::{Error, Result};
pub mod dynamics;
pub mod thermo;
pub mod transport;
pub mod io;
pub mod verify;
