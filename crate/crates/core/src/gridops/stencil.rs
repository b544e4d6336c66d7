//! Finite-difference gradients with ghost-value boundary handling, and their
//! exact transposes.

use serde::{Deserialize, Serialize};

use super::field::Field;
use super::grid::{Boundary, Grid};
use crate::error::{Error, Result};

/// Which difference quotients make up a node's gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientKind {
    /// One forward difference per axis.
    Forward,
    /// Forward differences on every axis followed by backward differences on
    /// every axis (2D only): `(d0+, d1+, d0-, d1-)`.
    ForwardBackward,
}

#[derive(Debug, Clone, Copy)]
struct Difference {
    axis: usize,
    backward: bool,
}

fn differences(grid: &Grid, kind: GradientKind) -> Result<Vec<Difference>> {
    let d = grid.dim();
    let fwd = (0..d).map(|axis| Difference { axis, backward: false });
    match kind {
        GradientKind::Forward => Ok(fwd.collect()),
        GradientKind::ForwardBackward => {
            if d != 2 {
                return Err(Error::Unsupported(
                    "forward-backward gradient is only defined on 2D grids".into(),
                ));
            }
            Ok(fwd.chain((0..d).map(|axis| Difference { axis, backward: true })).collect())
        }
    }
}

pub fn channel_count(grid: &Grid, kind: GradientKind) -> Result<usize> {
    differences(grid, kind).map(|d| d.len())
}

/// Per-node gradient samples, node-major (`values[node * channels + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct GradField {
    grid: Grid,
    kind: GradientKind,
    channels: usize,
    values: Vec<f64>,
}

impl GradField {
    pub fn new(grid: Grid, kind: GradientKind, values: Vec<f64>) -> Result<Self> {
        let channels = channel_count(&grid, kind)?;
        if values.len() != grid.len() * channels {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * channels,
                actual: values.len(),
            });
        }
        Ok(GradField { grid, kind, channels, values })
    }

    pub fn zeros(grid: &Grid, kind: GradientKind) -> Result<Self> {
        let channels = channel_count(grid, kind)?;
        Ok(GradField { grid: grid.clone(), kind, channels, values: vec![0.0; grid.len() * channels] })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> GradientKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.channels..(node + 1) * self.channels]
    }

    /// Quadrature-weighted inner product over nodes and channels.
    pub fn inner(&self, other: &GradField) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        if self.kind != other.kind {
            return Err(Error::invalid("gradient fields of different stencils"));
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(self.grid.weight() * s)
    }
}

/// Linear gradient operator of one stencil kind on one grid.
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: Grid,
    kind: GradientKind,
    diffs: Vec<Difference>,
    // per-axis (node count, stride, 1/h)
    axes: Vec<(usize, usize, f64)>,
}

impl Stencil {
    pub fn new(grid: &Grid, kind: GradientKind) -> Result<Self> {
        let diffs = differences(grid, kind)?;
        let strides = grid.strides();
        let axes = (0..grid.dim())
            .map(|k| (grid.axis(k).nodes, strides[k], 1.0 / grid.spacing(k)))
            .collect();
        Ok(Stencil { grid: grid.clone(), kind, diffs, axes })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> GradientKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.diffs.len()
    }

    fn axis_index(&self, node: usize, axis: usize) -> usize {
        let (n, stride, _) = self.axes[axis];
        (node / stride) % n
    }

    /// `out[node * C + k] = k-th difference quotient at node`.
    pub fn apply_slice(&self, u: &[f64], out: &mut [f64]) {
        let c = self.diffs.len();
        let dirichlet = self.grid.bc() == Boundary::Dirichlet;
        for node in 0..u.len() {
            for (k, d) in self.diffs.iter().enumerate() {
                let (n, stride, inv_h) = self.axes[d.axis];
                let i = self.axis_index(node, d.axis);
                let v = if d.backward {
                    if i > 0 {
                        (u[node] - u[node - stride]) * inv_h
                    } else if dirichlet {
                        u[node] * inv_h
                    } else {
                        0.0
                    }
                } else if i + 1 < n {
                    (u[node + stride] - u[node]) * inv_h
                } else if dirichlet {
                    -u[node] * inv_h
                } else {
                    0.0
                };
                out[node * c + k] = v;
            }
        }
    }

    /// Transpose of [`Stencil::apply_slice`]: `out = D^T p` (overwrites `out`).
    pub fn adjoint_slice(&self, p: &[f64], out: &mut [f64]) {
        let c = self.diffs.len();
        let dirichlet = self.grid.bc() == Boundary::Dirichlet;
        out.iter_mut().for_each(|x| *x = 0.0);
        for node in 0..out.len() {
            for (k, d) in self.diffs.iter().enumerate() {
                let pv = p[node * c + k];
                if pv == 0.0 {
                    continue;
                }
                let (n, stride, inv_h) = self.axes[d.axis];
                let i = self.axis_index(node, d.axis);
                let s = pv * inv_h;
                if d.backward {
                    if i > 0 {
                        out[node] += s;
                        out[node - stride] -= s;
                    } else if dirichlet {
                        out[node] += s;
                    }
                } else if i + 1 < n {
                    out[node + stride] += s;
                    out[node] -= s;
                } else if dirichlet {
                    out[node] -= s;
                }
            }
        }
    }

    pub fn apply(&self, u: &Field) -> Result<GradField> {
        self.grid.ensure_same(u.grid())?;
        let mut out = vec![0.0; u.len() * self.channels()];
        self.apply_slice(u.values(), &mut out);
        GradField::new(self.grid.clone(), self.kind, out)
    }

    /// `D^T p`, the adjoint with respect to the quadrature-weighted inner products.
    pub fn adjoint(&self, p: &GradField) -> Result<Field> {
        self.grid.ensure_same(p.grid())?;
        if p.kind() != self.kind {
            return Err(Error::invalid("gradient field stencil does not match operator"));
        }
        let mut out = vec![0.0; self.grid.len()];
        self.adjoint_slice(p.values(), &mut out);
        Field::new(self.grid.clone(), out)
    }
}

/// Forward-difference gradient (1 channel in 1D, 2 in 2D).
pub fn grad_forward(u: &Field) -> Result<GradField> {
    Stencil::new(u.grid(), GradientKind::Forward)?.apply(u)
}

/// Forward-backward gradient (4 channels, 2D only).
pub fn grad_fb(u: &Field) -> Result<GradField> {
    Stencil::new(u.grid(), GradientKind::ForwardBackward)?.apply(u)
}

/// Transpose of the gradient that produced `p`: `<grad u, p> = <u, grad_adjoint(p)>`.
pub fn grad_adjoint(p: &GradField) -> Result<Field> {
    Stencil::new(p.grid(), p.kind())?.adjoint(p)
}

/// Discrete divergence, the negative adjoint: `<grad u, p> = -<u, divergence(p)>`.
pub fn divergence(p: &GradField) -> Result<Field> {
    Ok(grad_adjoint(p)?.map(|v| -v))
}
