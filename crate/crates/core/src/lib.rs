//! Event-level simulation and analysis of photon-counting frequency locks
//! that hold quantum-dot emitters on the flank of an atomic-vapour filter.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod detection;
pub mod drift;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod interference;
pub mod io;
pub mod rng;
pub mod spectra;

pub use error::{Error, Result};
