//! Simulation and fitting toolkit for a large-spin paramagnetic ensemble
//! coupled to a microwave cavity.

pub mod cavity;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fitkit;
pub mod io;
pub mod spectra;
pub mod spinham;

pub use error::{Error, Result};
