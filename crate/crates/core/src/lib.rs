//! Total-variation image reconstruction over ReLU networks with bounded weights.
//!
//! The crate minimizes the discretized L1-L2-TV energy
//!
//! ```text
//! E(u) = w * ( a1 * sum |T u - g| + a2 * sum |T u - g|^2 + lambda * sum phi(grad u) )
//! ```
//!
//! either over the parameters of a ReLU multilayer perceptron `u = u_theta`
//! ([`energy::energy_nn`], [`optimize::train`]) or directly over pixel values
//! ([`energy::energy_fd`], [`optimize::solve_fd`]). Closed-form minimizers for a
//! 1D step and a 2D disk live in [`oracles`], together with a computable
//! a-posteriori error bound.

pub mod energy;
pub mod error;
pub mod forwardops;
pub mod gridops;
pub mod imaging;
pub mod netgrad;
pub mod optimize;
pub mod oracles;
pub mod rng;

pub use error::{Error, Result};
pub use gridops::{Boundary, Field, GradField, Grid, Smoothing, TvVariant};
pub use netgrad::{NetworkSpec, ParamVector};
