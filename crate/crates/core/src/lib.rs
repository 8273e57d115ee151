//! Partitioned simulation of a Lamé solid coupled to a quasi-linear Stokes
//! fluid across a shared interface, with an estimate-verification harness.

pub mod cli;
pub mod config;
pub mod coupling;
pub mod error;
pub mod fem;
pub mod fluid;
pub mod law;
pub mod mesh;
pub mod mms;
pub mod norms;
pub mod solid;
pub mod trace;
pub mod verify;

pub use error::{FsiError, Result};
