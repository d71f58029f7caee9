//! Numerical verification of the BV-BFV structure of General Relativity in
//! ADM variables on discretized manifolds with boundary.

#![allow(clippy::needless_range_loop)]

pub mod adm;
pub mod boundary;
pub mod bv;
pub mod error;
pub mod graded;
pub mod grid;
pub mod io;
pub mod presets;
pub mod state;
pub mod tensor;
pub mod verification;

pub use error::{Error, Result};
