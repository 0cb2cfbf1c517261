//! Weak Poincaré rate functions for convolution measures μ∗ν.
//!
//! The crate turns drift data for `μ(dx) = e^{-V(x)}dx` perturbed by a
//! probability measure ν into a rate function `α` in
//! `Var(f) ≤ α(r) ∫|∇f|² d(μ∗ν) + r Osc²(f)`, certifies the drift
//! inequality behind it numerically, and checks the result by Monte Carlo.

// `!(x > 0.0)` is used on purpose so NaN fails range checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod grid;
pub mod lyapunov;
pub mod model;
pub mod pipeline;
pub mod quad;
pub mod rates;
pub mod verify;

pub use error::{Error, Result};
