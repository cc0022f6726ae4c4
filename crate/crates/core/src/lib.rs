//! Lossless in-line coordinate (ILC) projections of tabular data, box rule
//! induction over the projected polylines, decision-tree guided search,
//! evaluation and local explanations.

pub mod boxes;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod guide;
pub mod linear;
pub mod projection;
pub mod reproduce;
pub mod session;
pub mod tree;

pub use error::{Error, Result};

#[cfg(test)]
extern crate self as ilc2d;

#[cfg(test)]
mod properties;
