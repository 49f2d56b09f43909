//! Simulation of the penalized stochastic p-Laplace equation
//!
//! `du + (-div(|∇u|^{p-2}∇u) + |u|^{p-2}u + psi_eps(u)) dt = G(u) dW + (beta(u) + f) dt`
//!
//! on an interval with homogeneous Neumann conditions, by a semi-implicit
//! Euler-Maruyama scheme: one strongly monotone operator equation per step.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod mesh;
pub mod model;
pub mod noise;
pub mod operator;
pub mod solver;
pub mod stepper;
pub mod harness;

pub use error::{Error, Result};
