//! Homogenized micropolar flow through thin porous media.
//!
//! The crate solves the periodic cell problems of the three thickness regimes
//! (PTPM: cell height comparable to the period, HTPM: period much smaller than
//! the height, VTPM: period much larger than the height), assembles the flow
//! factors `K1, K2, L1, L2`, and solves the resulting 2D Darcy problem.

pub mod cellsolver;
pub mod cli;
pub mod darcy;
pub mod error;
pub mod factors;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod oracles;
pub mod params;
pub mod vtpm;

pub use error::{Error, Result};
