use std::io::{Read, Write};

use super::grid::{Axis, Boundary, Grid};
use crate::error::{Error, Result};

/// Nodal values on a [`Grid`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: values.len() });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Field { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Field { grid: grid.clone(), values: vec![value; grid.len()] }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Field { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.ensure_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { grid: self.grid.clone(), values })
    }

    /// Quadrature-weighted inner product `w * sum(a_i b_i)`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(self.grid.weight() * s)
    }

    /// Weighted discrete L2 norm `sqrt(w * sum u_i^2)`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (self.grid.weight() * s).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    const MAGIC: &'static [u8; 8] = b"DTVFLD01";

    /// Binary layout: magic, `u32` dim, `u32` bc (0 Neumann, 1 Dirichlet), per
    /// axis `u64` nodes, `f64` lo, `f64` hi, then the values; all little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        let bc: u32 = match self.grid.bc() {
            Boundary::Neumann => 0,
            Boundary::Dirichlet => 1,
        };
        w.write_all(&bc.to_le_bytes())?;
        for ax in self.grid.axes() {
            w.write_all(&(ax.nodes as u64).to_le_bytes())?;
            w.write_all(&ax.lo.to_le_bytes())?;
            w.write_all(&ax.hi.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Field> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a field file".into()));
        }
        let dim = read_u32(&mut r)? as usize;
        let bc = match read_u32(&mut r)? {
            0 => Boundary::Neumann,
            1 => Boundary::Dirichlet,
            other => return Err(Error::Format(format!("unknown boundary tag {other}"))),
        };
        if dim == 0 || dim > 2 {
            return Err(Error::Format(format!("unsupported dimension {dim}")));
        }
        let mut axes = Vec::with_capacity(dim);
        for _ in 0..dim {
            let nodes = read_u64(&mut r)? as usize;
            let lo = read_f64(&mut r)?;
            let hi = read_f64(&mut r)?;
            axes.push(Axis { lo, hi, nodes });
        }
        let grid = Grid::new(axes, bc)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(read_f64(&mut r)?);
        }
        Field::new(grid, values)
    }

    /// Affinely rescales `[min, max]` to the full 16-bit range and writes a binary PGM.
    /// A 1D field is written as a single row.
    pub fn write_pgm16(&self, w: impl Write) -> Result<()> {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (height, width) = match self.grid.dim() {
            1 => (1, self.grid.axis(0).nodes),
            _ => (self.grid.axis(0).nodes, self.grid.axis(1).nodes),
        };
        let scaled: Vec<f64> = self.values.iter().map(|v| (v - lo) / span).collect();
        crate::imaging::write_pgm(w, width, height, &scaled, 65535)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
