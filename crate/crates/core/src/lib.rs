//! Relative Kähler–Ricci flows and Bergman iteration on model curves.
//!
//! Fibers are either an elliptic curve `C/(Z + τZ)` sampled on the unit square
//! or the circle-symmetric Riemann sphere sampled in the moment coordinate.
//! Weights are stored as a sampled correction `u = φ − φ₀` to a fixed reference.

pub mod cli;
pub mod family;
pub mod field_core;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod quantization;
pub mod report;
