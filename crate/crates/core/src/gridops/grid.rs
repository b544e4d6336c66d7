use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Ghost value equals the boundary value, so outward differences vanish.
    #[default]
    Neumann,
    /// Ghost value is zero.
    Dirichlet,
}

/// One axis of a grid: the closed interval `[lo, hi]` split into `nodes` equal cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.nodes as f64
    }

    /// Coordinate of node `i` (cell center).
    pub fn coord(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.spacing()
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Uniform cell-centered lattice on an interval or a rectangle.
///
/// Node `i` on an axis sits at `lo + (i + 1/2) h` with `h = (hi - lo) / nodes`,
/// so pixel images map onto `[0,1]^2` one cell per pixel and refinement by an
/// integer factor keeps the domain fixed. Nodes are stored row-major: in 2D the
/// flat index of `(i, j)` is `i * n1 + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
    bc: Boundary,
}

impl Grid {
    pub fn new(axes: Vec<Axis>, bc: Boundary) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::invalid(format!(
                "grid dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (k, ax) in axes.iter().enumerate() {
            if ax.nodes == 0 {
                return Err(Error::invalid(format!("axis {k} has no nodes")));
            }
            if !(ax.lo.is_finite() && ax.hi.is_finite() && ax.hi > ax.lo) {
                return Err(Error::invalid(format!(
                    "axis {k} bounds [{}, {}] are not an interval",
                    ax.lo, ax.hi
                )));
            }
        }
        Ok(Grid { axes, bc })
    }

    pub fn line(lo: f64, hi: f64, nodes: usize, bc: Boundary) -> Result<Self> {
        Grid::new(vec![Axis { lo, hi, nodes }], bc)
    }

    pub fn rect(x: (f64, f64), y: (f64, f64), n0: usize, n1: usize, bc: Boundary) -> Result<Self> {
        Grid::new(
            vec![
                Axis { lo: x.0, hi: x.1, nodes: n0 },
                Axis { lo: y.0, hi: y.1, nodes: n1 },
            ],
            bc,
        )
    }

    pub fn unit_square(n0: usize, n1: usize, bc: Boundary) -> Result<Self> {
        Grid::rect((0.0, 1.0), (0.0, 1.0), n0, n1, bc)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    pub fn with_bc(&self, bc: Boundary) -> Grid {
        Grid { axes: self.axes.clone(), bc }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.nodes).collect()
    }

    /// Total node count N.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].spacing()
    }

    pub fn measure(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    /// Uniform quadrature weight `measure / N`.
    pub fn weight(&self) -> f64 {
        self.measure() / self.len() as f64
    }

    /// Row-major strides, one per axis.
    pub fn strides(&self) -> Vec<usize> {
        match self.axes.len() {
            1 => vec![1],
            _ => vec![self.axes[1].nodes, 1],
        }
    }

    pub fn coords(&self, index: usize) -> Vec<f64> {
        match self.axes.len() {
            1 => vec![self.axes[0].coord(index)],
            _ => {
                let n1 = self.axes[1].nodes;
                vec![self.axes[0].coord(index / n1), self.axes[1].coord(index % n1)]
            }
        }
    }

    /// All node coordinates as an `N x dim` matrix in storage order.
    pub fn nodes(&self) -> Array2<f64> {
        let n = self.len();
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        for idx in 0..n {
            for (k, x) in self.coords(idx).into_iter().enumerate() {
                out[[idx, k]] = x;
            }
        }
        out
    }

    /// Same domain and boundary condition, `factor` times more nodes per axis.
    pub fn refine(&self, factor: usize) -> Result<Grid> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be positive"));
        }
        let axes = self
            .axes
            .iter()
            .map(|a| Axis { nodes: a.nodes * factor, ..*a })
            .collect();
        Grid::new(axes, self.bc)
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.shape(), other.shape())))
        }
    }
}
