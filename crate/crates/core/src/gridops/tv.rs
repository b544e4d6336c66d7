use serde::{Deserialize, Serialize};

use super::field::Field;
use super::smoothing::{group_value, Smoothing};
use super::stencil::{GradientKind, Stencil};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TvVariant {
    /// Isotropic TV: forward differences, Euclidean norm per node.
    #[default]
    Tv2,
    /// Forward-backward differences with the averaged `|.|_{2,1}` norm (2D only).
    Tv21,
}

impl TvVariant {
    pub fn gradient_kind(self) -> GradientKind {
        match self {
            TvVariant::Tv2 => GradientKind::Forward,
            TvVariant::Tv21 => GradientKind::ForwardBackward,
        }
    }

    pub fn stencil(self, grid: &super::Grid) -> Result<Stencil> {
        if self == TvVariant::Tv21 && grid.dim() != 2 {
            return Err(Error::Unsupported("TV21 requires a 2D grid".into()));
        }
        Stencil::new(grid, self.gradient_kind())
    }
}

/// Discrete total variation `w * sum_x phi(grad u(x))` with `w = measure / N`.
pub fn tv_discrete(u: &Field, variant: TvVariant, smoothing: Smoothing, gamma: f64) -> Result<f64> {
    smoothing.validate_gamma(gamma)?;
    let st = variant.stencil(u.grid())?;
    let c = st.channels();
    let mut grad = vec![0.0; u.len() * c];
    st.apply_slice(u.values(), &mut grad);
    let s: f64 = grad.chunks_exact(c).map(|ch| group_value(smoothing, ch, gamma)).sum();
    Ok(u.grid().weight() * s)
}
