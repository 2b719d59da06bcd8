//! Numerical toolkit for open hyperbolic and Euclidean surfaces: trapped
//! sets and escape rates, Schottky groups and their exponent of convergence,
//! limiting measures of plane waves, and semiclassical matrix elements.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod quadrature;
pub mod schottky;
pub mod semiclassics;
pub mod stats;
pub mod symbols;

pub use error::{Error, Result};
