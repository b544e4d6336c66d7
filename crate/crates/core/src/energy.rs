//! The discrete L1-L2-TV energy over network parameters and over pixel values.
//!
//! Both parameterizations are evaluated by the same recorded expression, so a
//! network and the field of its node values have identical energies.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forwardops::ForwardOp;
use crate::gridops::{Field, Grid, Smoothing, Stencil, TvVariant};
use crate::netgrad::{self, LinearMap, NetworkSpec, NetworkVars, ParamVector, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySpec {
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub tv: TvVariant,
    pub smoothing: Smoothing,
    pub gamma: f64,
    /// Weight of the `|theta|_inf` penalty; only meaningful for networks.
    pub alpha_theta: f64,
}

impl Default for EnergySpec {
    fn default() -> Self {
        EnergySpec {
            alpha1: 0.5,
            alpha2: 1.25,
            lambda: 1.0,
            tv: TvVariant::Tv2,
            smoothing: Smoothing::Huber,
            gamma: 1e-10,
            alpha_theta: 0.0,
        }
    }
}

impl EnergySpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("lambda", self.lambda),
            ("alpha_theta", self.alpha_theta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        self.smoothing.validate_gamma(self.gamma)
    }
}

struct OpMap {
    grid: Grid,
    op: ForwardOp,
}

impl LinearMap for OpMap {
    fn input_len(&self) -> usize {
        self.grid.len()
    }

    fn output_shape(&self) -> (usize, usize) {
        (self.grid.len(), 1)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.op.apply_slice(&self.grid, x, out);
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.op.adjoint_slice(&self.grid, y, out);
    }
}

impl LinearMap for Stencil {
    fn input_len(&self) -> usize {
        self.grid().len()
    }

    fn output_shape(&self) -> (usize, usize) {
        (self.grid().len(), self.channels())
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.apply_slice(x, out);
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.adjoint_slice(y, out);
    }
}

/// An energy bound to its data: spec, observation `g` (which fixes the grid) and forward operator.
#[derive(Clone)]
pub struct Problem {
    spec: EnergySpec,
    g: Field,
    op: ForwardOp,
    points: Array2<f64>,
    g_col: Array2<f64>,
    stencil: Arc<Stencil>,
    op_map: Option<Arc<OpMap>>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("spec", &self.spec)
            .field("grid", self.g.grid())
            .field("op", &self.op)
            .finish()
    }
}

impl Problem {
    pub fn new(spec: EnergySpec, g: Field, op: ForwardOp) -> Result<Self> {
        spec.validate()?;
        let grid = g.grid().clone();
        op.check_grid(&grid)?;
        let stencil = Arc::new(spec.tv.stencil(&grid)?);
        let op_map = (!op.is_identity()).then(|| Arc::new(OpMap { grid: grid.clone(), op: op.clone() }));
        let g_col = Array2::from_shape_vec((grid.len(), 1), g.values().to_vec()).expect("shape");
        Ok(Problem { spec, points: grid.nodes(), g_col, g, op, stencil, op_map })
    }

    pub fn spec(&self) -> &EnergySpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        self.g.grid()
    }

    pub fn observation(&self) -> &Field {
        &self.g
    }

    pub fn op(&self) -> &ForwardOp {
        &self.op
    }

    /// Node coordinates, one row per node.
    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    /// Records `w [a1 sum|Tu-g| + a2 sum|Tu-g|^2 + lambda sum phi(grad u)] + a_theta max|theta|`
    /// for the `N x 1` node-value column `u`.
    fn record(&self, tape: &mut Tape, u: Var, theta: Option<&[Var]>) -> Result<Var> {
        let s = &self.spec;
        let w = self.grid().weight();
        let mut terms = Vec::with_capacity(4);
        if s.alpha1 > 0.0 || s.alpha2 > 0.0 {
            let tu = match &self.op_map {
                Some(m) => tape.linear(u, m.clone())?,
                None => u,
            };
            let r = tape.sub_const(tu, &self.g_col)?;
            if s.alpha1 > 0.0 {
                let a = tape.abs(r);
                terms.push((tape.sum(a), w * s.alpha1));
            }
            if s.alpha2 > 0.0 {
                let q = tape.square(r);
                terms.push((tape.sum(q), w * s.alpha2));
            }
        }
        if s.lambda > 0.0 {
            let grad = tape.linear(u, self.stencil.clone())?;
            let phi = tape.group_norm(grad, s.smoothing, s.gamma);
            terms.push((tape.sum(phi), w * s.lambda));
        }
        if let Some(vars) = theta {
            if s.alpha_theta > 0.0 {
                terms.push((tape.max_abs(vars.to_vec()), s.alpha_theta));
            }
        }
        tape.combine(terms)
    }

    fn check_net(&self, net: &NetworkSpec) -> Result<()> {
        if self.spec.smoothing == Smoothing::None {
            return Err(Error::invalid("network energies need a smoothed TV (huber, lift or maxlift)"));
        }
        if net.input_dim != self.grid().dim() {
            return Err(Error::DimensionMismatch { expected: self.grid().dim(), actual: net.input_dim });
        }
        Ok(())
    }

    fn tape_nn(&self, net: &NetworkSpec, theta: &ParamVector) -> Result<(Tape, NetworkVars, Var)> {
        self.check_net(net)?;
        let mut tape = Tape::new();
        let vars = NetworkVars::register(&mut tape, net, theta)?;
        let p = tape.constant(self.points.clone());
        let u = netgrad::record_forward(&mut tape, &vars, p)?;
        let out = self.record(&mut tape, u, Some(&vars.vars()))?;
        Ok((tape, vars, out))
    }

    /// Energy of the network `u_theta`.
    pub fn energy_nn(&self, net: &NetworkSpec, theta: &ParamVector) -> Result<f64> {
        let (tape, _, out) = self.tape_nn(net, theta)?;
        tape.scalar(out)
    }

    /// Energy and its gradient with respect to `theta` (canonical layout).
    pub fn energy_nn_with_grad(&self, net: &NetworkSpec, theta: &ParamVector) -> Result<(f64, Vec<f64>)> {
        let (tape, vars, out) = self.tape_nn(net, theta)?;
        let grads = tape.backward(out)?;
        Ok((tape.scalar(out)?, vars.gather(&tape, &grads)))
    }

    /// Network values at the grid nodes.
    pub fn sample(&self, net: &NetworkSpec, theta: &ParamVector) -> Result<Field> {
        let y = netgrad::forward(net, theta, self.points.view())?;
        Field::new(self.grid().clone(), y.into_raw_vec_and_offset().0)
    }

    fn tape_fd(&self, u: &[f64]) -> Result<(Tape, Var, Var)> {
        if u.len() != self.grid().len() {
            return Err(Error::DimensionMismatch { expected: self.grid().len(), actual: u.len() });
        }
        let mut tape = Tape::new();
        let col = Array2::from_shape_vec((u.len(), 1), u.to_vec()).expect("shape");
        let leaf = tape.param(col);
        let out = self.record(&mut tape, leaf, None)?;
        Ok((tape, leaf, out))
    }

    /// Energy of pixel values `u`; the `alpha_theta` penalty does not apply.
    pub fn energy_fd(&self, u: &Field) -> Result<f64> {
        self.grid().ensure_same(u.grid())?;
        let (tape, _, out) = self.tape_fd(u.values())?;
        tape.scalar(out)
    }

    /// Energy of pixel values and a subgradient with respect to them.
    pub fn energy_fd_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (tape, leaf, out) = self.tape_fd(u)?;
        let grads = tape.backward(out)?;
        let g = grads.get(leaf).map(|g| g.iter().copied().collect()).unwrap_or_else(|| vec![0.0; u.len()]);
        Ok((tape.scalar(out)?, g))
    }
}

/// `E_theta(u_theta)` for observation `g` on its grid.
pub fn energy_nn(
    spec: &EnergySpec,
    net: &NetworkSpec,
    theta: &ParamVector,
    g: &Field,
    op: &ForwardOp,
) -> Result<f64> {
    Problem::new(spec.clone(), g.clone(), op.clone())?.energy_nn(net, theta)
}

/// `E_FD(u)` for observation `g`.
pub fn energy_fd(spec: &EnergySpec, u: &Field, g: &Field, op: &ForwardOp) -> Result<f64> {
    Problem::new(spec.clone(), g.clone(), op.clone())?.energy_fd(u)
}

/// Whether the network and the pixel field describe the same reconstruction:
/// node values agree to 1e-12 and the two energies (without the parameter
/// penalty) agree to 1e-10.
pub fn value_consistency(problem: &Problem, net: &NetworkSpec, theta: &ParamVector, u_fd: &Field) -> Result<bool> {
    problem.grid().ensure_same(u_fd.grid())?;
    let nodes = problem.sample(net, theta)?;
    let close = nodes.values().iter().zip(u_fd.values()).all(|(a, b)| (a - b).abs() <= 1e-12);
    if !close {
        return Ok(false);
    }
    let mut plain = problem.clone();
    plain.spec.alpha_theta = 0.0;
    let e_nn = plain.energy_nn(net, theta)?;
    let e_fd = plain.energy_fd(u_fd)?;
    Ok((e_nn - e_fd).abs() <= 1e-10)
}
