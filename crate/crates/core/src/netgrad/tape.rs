//! Matrix-valued reverse-mode differentiation.
//!
//! Every recorded value is an `Array2<f64>`; scalars are `1 x 1`. Operations
//! are appended to the [`Tape`] in evaluation order, so one reverse sweep over
//! the node list visits each node after all of its consumers.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::gridops::smoothing::{group_grad, group_value};
use crate::gridops::Smoothing;

/// A linear map between flat vectors, with its exact transpose.
pub trait LinearMap: Send + Sync {
    fn input_len(&self) -> usize;
    /// Shape of the output when laid out as a matrix (row-major).
    fn output_shape(&self) -> (usize, usize);
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn adjoint(&self, y: &[f64], out: &mut [f64]);
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    /// `a + b` with `b` a single row broadcast over the rows of `a`.
    AddRow(Var, Var),
    Relu(Var),
    /// `x W + b`, optionally followed by ReLU; evaluated in place.
    Affine { x: Var, w: Var, b: Var, relu: bool },
    /// Elementwise `a - b` for a constant `b`.
    SubConst(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    /// Weighted sum of scalars.
    Combine(Vec<(Var, f64)>),
    Linear(Var, Arc<dyn LinearMap>),
    GroupNorm { input: Var, smoothing: Smoothing, gamma: f64 },
    /// Largest absolute entry over several nodes, in order.
    MaxAbs(Vec<Var>),
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Constant => "Constant",
            Op::Param => "Param",
            Op::MatMul(..) => "MatMul",
            Op::AddRow(..) => "AddRow",
            Op::Relu(_) => "Relu",
            Op::Affine { .. } => "Affine",
            Op::SubConst(_) => "SubConst",
            Op::Abs(_) => "Abs",
            Op::Square(_) => "Square",
            Op::Sum(_) => "Sum",
            Op::Combine(_) => "Combine",
            Op::Linear(..) => "Linear",
            Op::GroupNorm { .. } => "GroupNorm",
            Op::MaxAbs(_) => "MaxAbs",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Record of one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let val = self.value(v);
        if val.dim() != (1, 1) {
            return Err(Error::Tape(format!("node {} has shape {:?}, not a scalar", v.0, val.dim())));
        }
        Ok(val[[0, 0]])
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Param, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(Error::Tape(format!("matmul {:?} x {:?}", va.dim(), vb.dim())));
        }
        let out = va.dot(vb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return Err(Error::Tape(format!("add_row {:?} + {:?}", va.dim(), vr.dim())));
        }
        let out = va + vr;
        let ng = self.needs(a) || self.needs(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        let ng = self.needs(a);
        self.push(out, Op::Relu(a), ng)
    }

    /// Fused `x W + b` (bias broadcast over rows), with ReLU if `relu`.
    /// Gives the same values as `matmul`, `add_row` and `relu` in sequence.
    pub fn affine(&mut self, x: Var, w: Var, b: Var, relu: bool) -> Result<Var> {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        if vx.ncols() != vw.nrows() || vb.nrows() != 1 || vb.ncols() != vw.ncols() {
            return Err(Error::Tape(format!("affine {:?} x {:?} + {:?}", vx.dim(), vw.dim(), vb.dim())));
        }
        let mut out = vx.dot(vw);
        out += vb;
        if relu {
            out.mapv_inplace(|v| v.max(0.0));
        }
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(out, Op::Affine { x, w, b, relu }, ng))
    }

    /// `a - c` for a constant array `c` of the same shape.
    pub fn sub_const(&mut self, a: Var, c: &Array2<f64>) -> Result<Var> {
        let va = self.value(a);
        if va.dim() != c.dim() {
            return Err(Error::Tape(format!("sub_const {:?} - {:?}", va.dim(), c.dim())));
        }
        let out = va - c;
        let ng = self.needs(a);
        Ok(self.push(out, Op::SubConst(a), ng))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::abs);
        let ng = self.needs(a);
        self.push(out, Op::Abs(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x * x);
        let ng = self.needs(a);
        self.push(out, Op::Square(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.needs(a);
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a), ng)
    }

    /// `sum_k c_k * s_k` over scalar nodes `s_k`.
    pub fn combine(&mut self, terms: Vec<(Var, f64)>) -> Result<Var> {
        let mut acc = 0.0;
        for &(v, c) in &terms {
            acc += c * self.scalar(v)?;
        }
        let ng = terms.iter().any(|&(v, _)| self.needs(v));
        Ok(self.push(Array2::from_elem((1, 1), acc), Op::Combine(terms), ng))
    }

    /// Applies `map` to the flattened value of `a`.
    pub fn linear(&mut self, a: Var, map: Arc<dyn LinearMap>) -> Result<Var> {
        let va = self.value(a);
        if va.len() != map.input_len() {
            return Err(Error::Tape(format!(
                "linear map expects {} inputs, got {}",
                map.input_len(),
                va.len()
            )));
        }
        let x = va.as_standard_layout();
        let shape = map.output_shape();
        let mut out = Array2::zeros(shape);
        map.apply(x.as_slice().expect("standard layout"), out.as_slice_mut().expect("fresh array"));
        let ng = self.needs(a);
        Ok(self.push(out, Op::Linear(a, map), ng))
    }

    /// Row-wise smoothed Euclidean norm (see [`group_value`]); output is `rows x 1`.
    pub fn group_norm(&mut self, a: Var, smoothing: Smoothing, gamma: f64) -> Var {
        let va = self.value(a);
        let out: Vec<f64> = va
            .rows()
            .into_iter()
            .map(|r| {
                let r = r.to_vec();
                group_value(smoothing, &r, gamma)
            })
            .collect();
        let n = out.len();
        let out = Array2::from_shape_vec((n, 1), out).expect("shape");
        let ng = self.needs(a);
        self.push(out, Op::GroupNorm { input: a, smoothing, gamma }, ng)
    }

    /// `max |x|` over all entries of `vars`; the subgradient is a signed unit
    /// mass on the first maximal entry in argument order.
    pub fn max_abs(&mut self, vars: Vec<Var>) -> Var {
        let m = vars
            .iter()
            .flat_map(|&v| self.value(v).iter().copied())
            .fold(0.0_f64, |m, x| m.max(x.abs()));
        let ng = vars.iter().any(|&v| self.needs(v));
        self.push(Array2::from_elem((1, 1), m), Op::MaxAbs(vars), ng)
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Tape("output is not on this tape".into()));
        }
        if self.value(output).dim() != (1, 1) {
            return Err(Error::Tape(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).dim()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(mut g) = grads[idx].take() else { continue };
            match &node.op {
                // leaves keep their adjoint
                Op::Constant | Op::Param => grads[idx] = Some(g),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(*row) {
                        let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *row, gr);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Affine { x, w, b, relu } => {
                    if *relu {
                        // the output is positive exactly where the pre-activation is
                        Zip::from(&mut g).and(&node.value).for_each(|d, &y| {
                            if y <= 0.0 {
                                *d = 0.0;
                            }
                        });
                    }
                    if self.needs(*b) {
                        let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.needs(*w) {
                        let gw = self.value(*x).t().dot(&g);
                        accumulate(&mut grads, *w, gw);
                    }
                    if self.needs(*x) {
                        let gx = g.dot(&self.value(*w).t());
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Relu(a) => {
                    // derivative at exactly 0 is taken as 0
                    Zip::from(&mut g).and(self.value(*a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut grads, *a, g);
                }
                Op::SubConst(a) => accumulate(&mut grads, *a, g),
                Op::Abs(a) => {
                    Zip::from(&mut g).and(self.value(*a)).for_each(|d, &x| {
                        *d *= if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    });
                    accumulate(&mut grads, *a, g);
                }
                Op::Square(a) => {
                    Zip::from(&mut g).and(self.value(*a)).for_each(|d, &x| *d *= 2.0 * x);
                    accumulate(&mut grads, *a, g);
                }
                Op::Sum(a) => {
                    let s = g[[0, 0]];
                    let ga = Array2::from_elem(self.value(*a).dim(), s);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Combine(terms) => {
                    let s = g[[0, 0]];
                    for &(v, c) in terms {
                        if self.needs(v) {
                            accumulate(&mut grads, v, Array2::from_elem((1, 1), c * s));
                        }
                    }
                }
                Op::Linear(a, map) => {
                    let gs = g.as_standard_layout();
                    let va = self.value(*a);
                    let mut ga = Array2::zeros(va.dim());
                    map.adjoint(gs.as_slice().expect("standard layout"), ga.as_slice_mut().expect("fresh array"));
                    accumulate(&mut grads, *a, ga);
                }
                Op::GroupNorm { input, smoothing, gamma } => {
                    let va = self.value(*input);
                    let mut ga = Array2::zeros(va.dim());
                    for ((row, mut out), seed) in va.rows().into_iter().zip(ga.rows_mut()).zip(g.iter()) {
                        let r = row.to_vec();
                        let mut o = vec![0.0; r.len()];
                        group_grad(*smoothing, &r, *gamma, *seed, &mut o);
                        out.iter_mut().zip(o).for_each(|(d, x)| *d = x);
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::MaxAbs(vars) => {
                    let s = g[[0, 0]];
                    let m = node.value[[0, 0]];
                    let mut placed = false;
                    for &v in vars {
                        if !self.needs(v) {
                            continue;
                        }
                        let mut gv = Array2::zeros(self.value(v).dim());
                        if !placed && m > 0.0 {
                            if let Some((pos, &x)) =
                                self.value(v).iter().enumerate().find(|(_, x)| x.abs() == m)
                            {
                                let ncols = gv.ncols();
                                gv[[pos / ncols, pos % ncols]] = s * x.signum();
                                placed = true;
                            }
                        }
                        accumulate(&mut grads, v, gv);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_readout_gives_unit_vector() {
        let mut t = Tape::new();
        let p = t.param(array![[0.3, -1.0, 2.0]]);
        // select entry 1 via a constant matmul
        let sel = t.constant(array![[0.0], [1.0], [0.0]]);
        let y = t.matmul(p, sel).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(p).unwrap(), &array![[0.0, 1.0, 0.0]]);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut t = Tape::new();
        let p = t.param(array![[1.0, 2.0]]);
        let r = t.relu(p);
        assert!(t.backward(r).is_err());
    }

    #[test]
    fn untouched_params_get_no_gradient() {
        let mut t = Tape::new();
        let a = t.param(array![[1.0, -2.0]]);
        let b = t.param(array![[5.0]]);
        let s = t.sum(a);
        let g = t.backward(s).unwrap();
        assert!(g.get(b).is_none());
        assert_eq!(g.get(a).unwrap(), &array![[1.0, 1.0]]);
    }

    #[test]
    fn elementwise_rules() {
        let mut t = Tape::new();
        let x = t.param(array![[-2.0, 0.0, 3.0]]);
        let r = t.relu(x);
        let ab = t.abs(x);
        let sq = t.square(x);
        let (sr, sa, ss) = (t.sum(r), t.sum(ab), t.sum(sq));
        let out = t.combine(vec![(sr, 1.0), (sa, 10.0), (ss, 100.0)]).unwrap();
        assert_eq!(t.scalar(out).unwrap(), 3.0 + 50.0 + 1300.0);
        let g = t.backward(out).unwrap();
        // relu' = (0, 0, 1); abs' = (-1, 0, 1); square' = 2x
        assert_eq!(g.get(x).unwrap(), &array![[-10.0 - 400.0, 0.0, 1.0 + 10.0 + 600.0]]);
    }

    #[test]
    fn max_abs_picks_first_maximum() {
        let mut t = Tape::new();
        let a = t.param(array![[1.0, -3.0]]);
        let b = t.param(array![[3.0, 0.5]]);
        let m = t.max_abs(vec![a, b]);
        assert_eq!(t.scalar(m).unwrap(), 3.0);
        let g = t.backward(m).unwrap();
        assert_eq!(g.get(a).unwrap(), &array![[0.0, -1.0]]);
        assert_eq!(g.get(b).unwrap(), &array![[0.0, 0.0]]);
    }

    #[test]
    fn affine_matches_primitives() {
        let x0 = array![[0.5, -1.0], [2.0, 0.25], [-0.3, 0.7]];
        let w0 = array![[1.0, -2.0, 0.5], [0.3, 0.0, -1.5]];
        let b0 = array![[0.1, 0.2, -0.4]];
        for relu in [false, true] {
            let mut t = Tape::new();
            let (x, w, b) = (t.param(x0.clone()), t.param(w0.clone()), t.param(b0.clone()));
            let fused = t.affine(x, w, b, relu).unwrap();
            let sq = t.square(fused);
            let out = t.sum(sq);
            let g1 = t.backward(out).unwrap();

            let mut u = Tape::new();
            let (x2, w2, b2) = (u.param(x0.clone()), u.param(w0.clone()), u.param(b0.clone()));
            let mut h = u.matmul(x2, w2).unwrap();
            h = u.add_row(h, b2).unwrap();
            if relu {
                h = u.relu(h);
            }
            assert_eq!(t.value(fused), u.value(h));
            let sq2 = u.square(h);
            let out2 = u.sum(sq2);
            let g2 = u.backward(out2).unwrap();
            for (a, c) in [(x, x2), (w, w2), (b, b2)] {
                assert_eq!(g1.get(a), g2.get(c));
            }
        }
    }

    #[test]
    fn add_row_broadcast_gradient() {
        let mut t = Tape::new();
        let a = t.param(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let b = t.param(array![[10.0, 20.0]]);
        let c = t.add_row(a, b).unwrap();
        let sq = t.square(c);
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        // d/db sum (a+b)^2 = 2 * column sums of (a+b)
        assert_eq!(g.get(b).unwrap(), &array![[2.0 * (11.0 + 13.0 + 15.0), 2.0 * (22.0 + 24.0 + 26.0)]]);
        assert_eq!(g.get(a).unwrap()[[2, 1]], 52.0);
    }
}
