use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Fully connected ReLU network with scalar output and no output activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>) -> Result<Self> {
        let spec = NetworkSpec { input_dim, hidden_widths };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.input_dim) {
            return Err(Error::invalid(format!("input_dim must be 1 or 2, got {}", self.input_dim)));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        Ok(())
    }

    /// Hidden layers plus the output layer.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// `(fan_in, fan_out)` for every affine layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_widths);
        dims.push(1);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Parameter count `M = sum (fan_in + 1) * fan_out`.
    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|&(i, o)| (i + 1) * o).sum()
    }
}

/// Flat parameter vector; per layer the weight matrix (`fan_in x fan_out`,
/// row-major) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::DimensionMismatch { expected: spec.param_count(), actual: values.len() });
        }
        Ok(ParamVector { values })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        ParamVector { values: vec![0.0; spec.param_count()] }
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ParamVector { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.values.len() != spec.param_count() {
            return Err(Error::DimensionMismatch { expected: spec.param_count(), actual: self.values.len() });
        }
        Ok(())
    }

    /// Weight and bias views of each layer.
    fn layer_views<'a>(&'a self, spec: &NetworkSpec) -> Vec<(ArrayView2<'a, f64>, ArrayView2<'a, f64>)> {
        let mut offset = 0;
        spec.layers()
            .into_iter()
            .map(|(fi, fo)| {
                let w = ArrayView2::from_shape((fi, fo), &self.values[offset..offset + fi * fo]).expect("layout");
                offset += fi * fo;
                let b = ArrayView2::from_shape((1, fo), &self.values[offset..offset + fo]).expect("layout");
                offset += fo;
                (w, b)
            })
            .collect()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Stream::Init);
    let mut values = Vec::with_capacity(spec.param_count());
    for (fi, fo) in spec.layers() {
        let bound = (6.0 / (fi + fo) as f64).sqrt();
        values.extend((0..fi * fo).map(|_| rng.random_range(-bound..=bound)));
        values.extend(std::iter::repeat_n(0.0, fo));
    }
    Ok(ParamVector { values })
}

/// Componentwise projection onto `[-c, c]`.
pub fn clamp(theta: &ParamVector, c: f64) -> Result<ParamVector> {
    let mut out = theta.clone();
    clamp_in_place(&mut out.values, c)?;
    Ok(out)
}

pub fn clamp_in_place(values: &mut [f64], c: f64) -> Result<()> {
    if !(c >= 0.0) {
        return Err(Error::invalid(format!("weight bound must be nonnegative, got {c}")));
    }
    for v in values {
        *v = v.clamp(-c, c);
    }
    Ok(())
}

fn check_points(spec: &NetworkSpec, points: &ArrayView2<f64>) -> Result<()> {
    if points.ncols() != spec.input_dim {
        return Err(Error::DimensionMismatch { expected: spec.input_dim, actual: points.ncols() });
    }
    Ok(())
}

/// Evaluates the network at each row of `points`; returns an `n x 1` column.
///
/// Uses the same array operations as [`record_forward`], so the two agree bit for bit.
pub fn forward(spec: &NetworkSpec, theta: &ParamVector, points: ArrayView2<f64>) -> Result<Array2<f64>> {
    theta.check(spec)?;
    check_points(spec, &points)?;
    let layers = theta.layer_views(spec);
    let last = layers.len() - 1;
    let mut h = points.to_owned();
    for (k, (w, b)) in layers.into_iter().enumerate() {
        h = h.dot(&w);
        h += &b;
        if k < last {
            h.mapv_inplace(|x| x.max(0.0));
        }
    }
    Ok(h)
}

/// Tape handles for one network's parameters.
#[derive(Debug, Clone)]
pub struct NetworkVars {
    layers: Vec<(Var, Var)>,
    count: usize,
}

impl NetworkVars {
    /// Registers every layer's weight and bias as a tape parameter.
    pub fn register(tape: &mut Tape, spec: &NetworkSpec, theta: &ParamVector) -> Result<Self> {
        theta.check(spec)?;
        let layers = theta
            .layer_views(spec)
            .into_iter()
            .map(|(w, b)| (tape.param(w.to_owned()), tape.param(b.to_owned())))
            .collect();
        Ok(NetworkVars { layers, count: theta.len() })
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Flattens the parameter gradients into the canonical layout.
    pub fn gather(&self, tape: &Tape, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count);
        for &(w, b) in &self.layers {
            for v in [w, b] {
                match grads.get(v) {
                    Some(g) => out.extend(g.iter().copied()),
                    None => {
                        let n = out.len();
                        out.resize(n + tape.value(v).len(), 0.0);
                    }
                }
            }
        }
        out
    }
}

/// Records the network evaluation at `points` on `tape`; returns the `n x 1` output node.
pub fn record_forward(tape: &mut Tape, vars: &NetworkVars, points: Var) -> Result<Var> {
    let last = vars.layers.len() - 1;
    let mut h = points;
    for (k, &(w, b)) in vars.layers.iter().enumerate() {
        h = tape.affine(h, w, b, k < last)?;
    }
    Ok(h)
}

const CHECKPOINT_MAGIC: &[u8; 7] = b"DEEPTV1";

/// Writes `magic, u32 input_dim, u32 hidden count, u32 widths..., u64 M, f64 theta...`, little-endian.
pub fn write_checkpoint(mut w: impl Write, spec: &NetworkSpec, theta: &ParamVector) -> Result<()> {
    theta.check(spec)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(spec.input_dim as u32).to_le_bytes())?;
    w.write_all(&(spec.hidden_widths.len() as u32).to_le_bytes())?;
    for &width in &spec.hidden_widths {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    w.write_all(&(theta.len() as u64).to_le_bytes())?;
    for v in &theta.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<(NetworkSpec, ParamVector)> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a parameter checkpoint".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let input_dim = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let hidden = u32::from_le_bytes(b4) as usize;
    if hidden > 1 << 16 {
        return Err(Error::Format(format!("implausible layer count {hidden}")));
    }
    let mut widths = Vec::with_capacity(hidden);
    for _ in 0..hidden {
        r.read_exact(&mut b4)?;
        widths.push(u32::from_le_bytes(b4) as usize);
    }
    let spec = NetworkSpec::new(input_dim, widths).map_err(|e| Error::Format(e.to_string()))?;
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    if count != spec.param_count() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} parameters, architecture needs {}",
            spec.param_count()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    Ok((spec, ParamVector { values }))
}

/// Two-neuron network `x -> relu(x/h + 1) - relu(x/h)`, a ramp of width `h`
/// rising from 0 at `x = -h` to 1 at `x = 0`.
pub fn ramp_network(h: f64) -> (NetworkSpec, ParamVector) {
    let spec = NetworkSpec { input_dim: 1, hidden_widths: vec![2] };
    // W1 (1x2), b1 (1x2), W2 (2x1), b2
    let values = vec![1.0 / h, 1.0 / h, 1.0, 0.0, 1.0, -1.0, 0.0];
    (spec, ParamVector { values })
}
