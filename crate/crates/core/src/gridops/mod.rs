//! Grids, fields, difference stencils, discrete TV and its smoothings.

mod field;
mod grid;
pub mod smoothing;
pub mod stencil;
mod tv;

pub use field::Field;
pub use grid::{Axis, Boundary, Grid};
pub use smoothing::{
    huber2, huber21, lift2, lift21, maxlift2, maxlift21, norm_21, Smoothing,
};
pub use stencil::{divergence, grad_adjoint, grad_fb, grad_forward, GradField, GradientKind, Stencil};
pub use tv::{tv_discrete, TvVariant};
