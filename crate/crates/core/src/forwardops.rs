//! Observation operators `T`: identity, inpainting mask, Gaussian blur.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gridops::{Field, Grid};

/// Square correlation kernel with odd side length, normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    sigma: Option<f64>,
    weights: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from a row-major `size x size` matrix, normalizing it to sum 1.
    pub fn from_matrix(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::invalid(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::DimensionMismatch { expected: size * size, actual: weights.len() });
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("kernel entries must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("kernel has zero mass"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Kernel { size, sigma: None, weights })
    }

    /// Parses whitespace-separated rows of a square matrix; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("kernel entry {t:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::Format("kernel matrix is not square".into()));
        }
        Kernel::from_matrix(size, rows.into_iter().flatten().collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Kernel::parse(&std::fs::read_to_string(path)?)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.size + b]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.weights.len();
        (0..n).all(|i| self.weights[i] == self.weights[n - 1 - i])
    }
}

/// `size x size` Gaussian with entries proportional to `exp(-(i^2 + j^2) / (2 sigma^2))`
/// on the centered integer lattice.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel> {
    if size % 2 == 0 {
        return Err(Error::invalid(format!("kernel size must be odd, got {size}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as i64;
    // relative to the center entry, so tiny sigma underflows to a clean delta
    let mut w = Vec::with_capacity(size * size);
    for i in -r..=r {
        for j in -r..=r {
            w.push((-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let mut k = Kernel::from_matrix(size, w)?;
    k.sigma = Some(sigma);
    Ok(k)
}

#[derive(Clone, PartialEq)]
pub enum ForwardOp {
    Identity,
    /// Keep where the mask is 1, zero where it is 0.
    Mask(Field),
    /// Same-size correlation with zero padding.
    Blur(Kernel),
}

impl fmt::Debug for ForwardOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForwardOp::Identity => write!(f, "Identity"),
            ForwardOp::Mask(m) => write!(f, "Mask({:?})", m.grid().shape()),
            ForwardOp::Blur(k) => write!(f, "Blur({}x{}, sigma={:?})", k.size, k.size, k.sigma),
        }
    }
}

impl ForwardOp {
    /// Mask operator; entries must be exactly 0 or 1.
    pub fn mask(mask: Field) -> Result<Self> {
        if mask.values().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("mask entries must be 0 or 1"));
        }
        Ok(ForwardOp::Mask(mask))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ForwardOp::Identity)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ForwardOp::Identity => "identity",
            ForwardOp::Mask(_) => "mask",
            ForwardOp::Blur(_) => "blur",
        }
    }

    /// Checks that the operator can act on fields of `grid`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        match self {
            ForwardOp::Identity => Ok(()),
            ForwardOp::Mask(m) => m.grid().ensure_same(grid),
            ForwardOp::Blur(_) => {
                if grid.dim() == 2 {
                    Ok(())
                } else {
                    Err(Error::Unsupported("blur requires a 2D grid".into()))
                }
            }
        }
    }

    pub fn apply_slice(&self, grid: &Grid, u: &[f64], out: &mut [f64]) {
        match self {
            ForwardOp::Identity => out.copy_from_slice(u),
            ForwardOp::Mask(m) => {
                for ((o, &x), &k) in out.iter_mut().zip(u).zip(m.values()) {
                    *o = x * k;
                }
            }
            ForwardOp::Blur(k) => correlate(grid, k, u, out, false),
        }
    }

    pub fn adjoint_slice(&self, grid: &Grid, r: &[f64], out: &mut [f64]) {
        match self {
            ForwardOp::Blur(k) => correlate(grid, k, r, out, true),
            _ => self.apply_slice(grid, r, out),
        }
    }

    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.check_grid(u.grid())?;
        let mut out = vec![0.0; u.len()];
        self.apply_slice(u.grid(), u.values(), &mut out);
        Field::new(u.grid().clone(), out)
    }

    pub fn adjoint(&self, r: &Field) -> Result<Field> {
        self.check_grid(r.grid())?;
        let mut out = vec![0.0; r.len()];
        self.adjoint_slice(r.grid(), r.values(), &mut out);
        Field::new(r.grid().clone(), out)
    }
}

/// `out(i,j) = sum_{a,b} k(a,b) u(i + a - r, j + b - r)`, zero outside the grid.
/// With `flipped` the kernel is rotated by 180 degrees, which gives the adjoint;
/// the summation order is the same in both modes, so a symmetric kernel yields
/// bit-identical results.
fn correlate(grid: &Grid, k: &Kernel, u: &[f64], out: &mut [f64], flipped: bool) {
    let (n0, n1) = (grid.axis(0).nodes as i64, grid.axis(1).nodes as i64);
    let size = k.size as i64;
    let r = size / 2;
    let weight = |a: i64, b: i64| {
        let (a, b) = if flipped { (size - 1 - a, size - 1 - b) } else { (a, b) };
        k.weights[(a * size + b) as usize]
    };
    for i in 0..n0 {
        for j in 0..n1 {
            let mut acc = 0.0;
            for a in 0..size {
                let ii = i + a - r;
                if ii < 0 || ii >= n0 {
                    continue;
                }
                for b in 0..size {
                    let jj = j + b - r;
                    if jj < 0 || jj >= n1 {
                        continue;
                    }
                    acc += weight(a, b) * u[(ii * n1 + jj) as usize];
                }
            }
            out[(i * n1 + j) as usize] = acc;
        }
    }
}
