//! Closed-form minimizers of the continuous model and a computable error bound.

use serde::{Deserialize, Serialize};

use crate::energy::EnergySpec;
use crate::error::{Error, Result};
use crate::forwardops::ForwardOp;
use crate::gridops::{Boundary, Field, Grid, Stencil, GradientKind};

/// 1D step `g = 1_{x > 0}` on `(-l_ell, l_u)` with `lambda = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step1DParams {
    pub l_ell: f64,
    pub l_u: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Disk indicator `g = 1_{B_R}` in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskParams {
    pub radius: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
}

impl Step1DParams {
    fn validate(&self) -> Result<()> {
        if !(self.l_ell > 0.0 && self.l_u > 0.0) {
            return Err(Error::invalid("interval arms must be positive"));
        }
        if !(self.alpha1 >= 0.0) {
            return Err(Error::invalid("alpha1 must be nonnegative"));
        }
        if !(self.alpha2 > 0.0) {
            return Err(Error::invalid("the step solution needs alpha2 > 0"));
        }
        Ok(())
    }
}

/// Plateau values `(c1, c2)` of the minimizer `c1 on the upper arm, c2 on the lower arm`.
///
/// Each plateau first balances its own data terms against the unit jump cost;
/// if the two resulting values would cross, the jump vanishes and both take the
/// common value minimizing the pure data term.
pub fn step1d_solution(p: &Step1DParams) -> Result<(f64, f64)> {
    p.validate()?;
    let Step1DParams { l_ell, l_u, alpha1: a1, alpha2: a2 } = *p;
    let c1 = if a1 * l_u >= 1.0 { 1.0 } else { 1.0 - (1.0 - a1 * l_u) / (2.0 * a2 * l_u) };
    let c2 = if a1 * l_ell >= 1.0 { 0.0 } else { (1.0 - a1 * l_ell) / (2.0 * a2 * l_ell) };
    if c1 > c2 {
        return Ok((c1, c2));
    }
    let c = ((2.0 * a2 * l_u + a1 * (l_u - l_ell)) / (2.0 * a2 * (l_ell + l_u))).clamp(0.0, 1.0);
    Ok((c, c))
}

pub fn step1d_energy(p: &Step1DParams, c1: f64, c2: f64) -> f64 {
    let Step1DParams { l_ell, l_u, alpha1: a1, alpha2: a2 } = *p;
    a1 * l_ell * c2.abs()
        + a1 * l_u * (c1 - 1.0).abs()
        + a2 * l_ell * c2 * c2
        + a2 * l_u * (c1 - 1.0) * (c1 - 1.0)
        + (c1 - c2).abs()
}

/// Amplitude `a` of the minimizer `a * 1_{B_R}`.
pub fn disk_solution(p: &DiskParams) -> f64 {
    let DiskParams { radius: r, alpha1: a1, alpha2: a2, lambda } = *p;
    if r < 2.0 * lambda / (2.0 * a2 + a1) {
        0.0
    } else if a1 > 0.0 && r > 2.0 * lambda / a1 {
        1.0
    } else if a2 > 0.0 {
        (2.0 * a2 + a1) / (2.0 * a2) - lambda / (a2 * r)
    } else {
        // pure L1: at r = 2 lambda / a1 every amplitude in [0, 1] is optimal
        1.0
    }
}

pub fn disk_energy(p: &DiskParams, a: f64) -> f64 {
    let DiskParams { radius: r, alpha1: a1, alpha2: a2, lambda } = *p;
    let area = std::f64::consts::PI * r * r;
    a1 * (1.0 - a).abs() * area + a2 * (1.0 - a) * (1.0 - a) * area + lambda * 2.0 * std::f64::consts::PI * r * a.abs()
}

/// The 1D step observation on `[lo, hi]` with jump at `jump`.
pub fn step_observation(grid: &Grid, jump: f64) -> Field {
    Field::from_fn(grid, |x| if x[0] > jump { 1.0 } else { 0.0 })
}

/// Two-valued field: `upper` right of `jump`, `lower` left of it.
pub fn step_field(grid: &Grid, jump: f64, upper: f64, lower: f64) -> Field {
    Field::from_fn(grid, |x| if x[0] > jump { upper } else { lower })
}

/// `amplitude * 1_{B_R(center)}` sampled at the nodes (open disk).
pub fn disk_field(grid: &Grid, center: (f64, f64), radius: f64, amplitude: f64) -> Field {
    Field::from_fn(grid, |x| {
        let (dx, dy) = (x[0] - center.0, x[1] - center.1);
        if dx * dx + dy * dy < radius * radius {
            amplitude
        } else {
            0.0
        }
    })
}

/// The standard disk test grid: `[0,1]^2` with Dirichlet boundary.
pub fn disk_grid(n: usize) -> Result<Grid> {
    Grid::unit_square(n, n, Boundary::Dirichlet)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBound {
    pub rho1: f64,
    pub rho2: f64,
    pub rho: f64,
}

const XI_EPS: f64 = 1e-8;

/// Computable bound on `|u* - v|` for operators with coercivity `alpha2`:
/// `rho1 = 2 |T*(Tv - g)|`, `rho2 = |xi| / alpha2` with
/// `xi = alpha1 T*(r / (|r| + eps)) + lambda D^T(Dv / (|Dv| + eps))`, `r = Tv - g`,
/// `D` the forward-difference gradient. Norms are quadrature-weighted.
pub fn error_estimate(v: &Field, g: &Field, spec: &EnergySpec, op: &ForwardOp) -> Result<ErrorBound> {
    if !(spec.alpha2 > 0.0) {
        return Err(Error::invalid("the error estimate needs alpha2 > 0"));
    }
    v.grid().ensure_same(g.grid())?;
    let grid = v.grid();
    op.check_grid(grid)?;
    let n = grid.len();

    let mut r = vec![0.0; n];
    op.apply_slice(grid, v.values(), &mut r);
    for (ri, gi) in r.iter_mut().zip(g.values()) {
        *ri -= gi;
    }
    let mut t_r = vec![0.0; n];
    op.adjoint_slice(grid, &r, &mut t_r);
    let rho1 = 2.0 * weighted_norm(grid, &t_r);

    let sign: Vec<f64> = r.iter().map(|x| x / (x.abs() + XI_EPS)).collect();
    let mut xi = vec![0.0; n];
    op.adjoint_slice(grid, &sign, &mut xi);
    xi.iter_mut().for_each(|x| *x *= spec.alpha1);

    let st = Stencil::new(grid, GradientKind::Forward)?;
    let c = st.channels();
    let mut p = vec![0.0; n * c];
    st.apply_slice(v.values(), &mut p);
    for node in p.chunks_exact_mut(c) {
        let norm = node.iter().map(|x| x * x).sum::<f64>().sqrt();
        node.iter_mut().for_each(|x| *x /= norm + XI_EPS);
    }
    let mut dt = vec![0.0; n];
    st.adjoint_slice(&p, &mut dt);
    for (x, d) in xi.iter_mut().zip(&dt) {
        *x += spec.lambda * d;
    }
    let rho2 = weighted_norm(grid, &xi) / spec.alpha2;
    Ok(ErrorBound { rho1, rho2, rho: rho1 + rho2 })
}

fn weighted_norm(grid: &Grid, x: &[f64]) -> f64 {
    (grid.weight() * x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(a1: f64, a2: f64) -> Step1DParams {
        Step1DParams { l_ell: 1.0, l_u: 1.0, alpha1: a1, alpha2: a2 }
    }

    #[test]
    fn step_examples() {
        let (c1, c2) = step1d_solution(&unit(0.5, 1.25)).unwrap();
        assert!((c1 - 0.8).abs() < 1e-15 && (c2 - 0.2).abs() < 1e-15);
        assert!((step1d_energy(&unit(0.5, 1.25), c1, c2) - 0.9).abs() < 1e-15);
        assert_eq!(step1d_solution(&unit(2.0, 1.0)).unwrap(), (1.0, 0.0));
        assert_eq!(step1d_solution(&unit(0.1, 0.2)).unwrap(), (0.5, 0.5));
        assert!(step1d_solution(&unit(0.1, 0.0)).is_err());
    }

    #[test]
    fn step_energy_examples() {
        let p = Step1DParams { l_ell: 0.7, l_u: 1.3, alpha1: 0.4, alpha2: 2.0 };
        assert_eq!(step1d_energy(&p, 1.0, 0.0), 1.0);
        assert!((step1d_energy(&p, 0.0, 0.0) - (0.4 * 1.3 + 2.0 * 1.3)).abs() < 1e-15);
    }

    #[test]
    fn disk_examples() {
        let p = DiskParams { radius: 0.25, alpha1: 1.0, alpha2: 7.0, lambda: 1.0 };
        assert!((disk_solution(&p) - 0.5).abs() < 1e-15);
        assert!((disk_energy(&p, 0.5) - 1.227184630308513).abs() < 1e-12);
        assert_eq!(disk_solution(&DiskParams { radius: 0.1, ..p }), 0.0);
        assert_eq!(disk_solution(&DiskParams { radius: 3.0, ..p }), 1.0);
        assert_eq!(disk_energy(&p, 1.0), 2.0 * std::f64::consts::PI * 0.25);
        assert!((disk_energy(&p, 0.0) - 8.0 * std::f64::consts::PI / 16.0).abs() < 1e-15);
    }

    #[test]
    fn estimate_vanishes_on_exact_fit() {
        let grid = Grid::line(0.0, 2.0, 100, Boundary::Neumann).unwrap();
        let g = step_observation(&grid, 1.0);
        let b = error_estimate(&g, &g, &EnergySpec::default(), &ForwardOp::Identity).unwrap();
        assert_eq!(b.rho1, 0.0);
        assert!(b.rho2 > 0.0);
        let zero_a2 = EnergySpec { alpha2: 0.0, ..EnergySpec::default() };
        assert!(error_estimate(&g, &g, &zero_a2, &ForwardOp::Identity).is_err());
    }

    #[test]
    fn estimate_on_constants_by_hand() {
        // N = 4 on [0, 4], v = 1, g = 0: r = 1, xi = a1 * 1/(1 + eps), grad v = 0
        let grid = Grid::line(0.0, 4.0, 4, Boundary::Neumann).unwrap();
        let v = Field::constant(&grid, 1.0);
        let g = Field::zeros(&grid);
        let spec = EnergySpec { alpha1: 3.0, alpha2: 2.0, ..EnergySpec::default() };
        let b = error_estimate(&v, &g, &spec, &ForwardOp::Identity).unwrap();
        assert!((b.rho1 - 4.0).abs() < 1e-15);
        let expected = 3.0 / (1.0 + XI_EPS) * 2.0 / 2.0;
        assert!((b.rho2 - expected).abs() < 1e-14, "{}", b.rho2);
    }
}
