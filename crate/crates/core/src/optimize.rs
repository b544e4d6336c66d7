//! Projected Adam with best-iterate tracking.

use serde::{Deserialize, Serialize};

use crate::energy::Problem;
use crate::error::{Error, Result};
use crate::gridops::Field;
use crate::netgrad::{self, NetworkSpec, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Bound on `|theta|_inf`; `None` leaves the parameters unconstrained.
    pub weight_bound: Option<f64>,
    /// Keep every `log_every`-th loss in the history (0 keeps none).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            iterations: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            weight_bound: None,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        if let Some(c) = self.weight_bound {
            if !(c >= 0.0) {
                return Err(Error::invalid(format!("weight bound must be nonnegative, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub loss: f64,
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub best_theta: Vec<f64>,
    pub best_loss: f64,
    /// Iteration at which `best_theta` was found (0 is the initial point).
    pub best_iteration: usize,
    /// Number of times the best iterate was replaced.
    pub updates: usize,
    pub history: Vec<HistoryEntry>,
}

impl TrainState {
    pub fn new(theta: Vec<f64>, loss: f64) -> Self {
        let n = theta.len();
        TrainState {
            best_theta: theta.clone(),
            theta,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            best_loss: loss,
            best_iteration: 0,
            updates: 0,
            history: Vec::new(),
        }
    }
}

/// One Adam update with bias correction, followed by the projection onto
/// `[-c, c]` if a bound is configured. The moments are not projected.
pub fn adam_step(state: &mut TrainState, gradient: &[f64], config: &TrainConfig) -> Result<()> {
    if gradient.len() != state.theta.len() {
        return Err(Error::DimensionMismatch { expected: state.theta.len(), actual: gradient.len() });
    }
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            iteration: state.step as usize,
            reason: format!("non-finite gradient entry {i}"),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((x, m), v), &g) in state.theta.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(gradient) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
    }
    if let Some(c) = config.weight_bound {
        netgrad::clamp_in_place(&mut state.theta, c)?;
    }
    Ok(())
}

/// Reported to the observer after every evaluated iterate.
#[derive(Debug)]
pub struct TrainEvent<'a> {
    pub iteration: usize,
    pub loss: f64,
    pub best_loss: f64,
    pub improved: bool,
    pub state: &'a TrainState,
}

/// Minimizes `loss` from `theta0`: evaluate the start, then `iterations` times
/// step on the current iterate's gradient and evaluate the new iterate. The best
/// iterate is replaced only on strict improvement.
pub fn minimize(
    theta0: Vec<f64>,
    config: &TrainConfig,
    mut loss: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    mut observer: impl FnMut(&TrainEvent<'_>) -> Result<()>,
) -> Result<TrainState> {
    config.validate()?;
    let mut theta0 = theta0;
    if let Some(c) = config.weight_bound {
        netgrad::clamp_in_place(&mut theta0, c)?;
    }
    let (l0, mut grad) = loss(&theta0)?;
    check_loss(l0, 0)?;
    let mut state = TrainState::new(theta0, l0);
    record(&mut state, config, 0, l0);
    observer(&TrainEvent { iteration: 0, loss: l0, best_loss: l0, improved: true, state: &state })?;
    for k in 1..=config.iterations {
        adam_step(&mut state, &grad, config).map_err(|e| match e {
            Error::Diverged { reason, .. } => Error::Diverged { iteration: k, reason },
            other => other,
        })?;
        let (l, g) = loss(&state.theta)?;
        check_loss(l, k)?;
        grad = g;
        let improved = l < state.best_loss;
        if improved {
            state.best_loss = l;
            state.best_theta.copy_from_slice(&state.theta);
            state.best_iteration = k;
            state.updates += 1;
        }
        record(&mut state, config, k, l);
        observer(&TrainEvent { iteration: k, loss: l, best_loss: state.best_loss, improved, state: &state })?;
    }
    Ok(state)
}

fn check_loss(l: f64, iteration: usize) -> Result<()> {
    if l.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { iteration, reason: format!("loss is {l}") })
    }
}

fn record(state: &mut TrainState, config: &TrainConfig, iteration: usize, loss: f64) {
    let last = iteration == config.iterations;
    if config.log_every > 0 && (iteration % config.log_every == 0 || last) {
        state.history.push(HistoryEntry { iteration, loss, best_loss: state.best_loss });
    }
}

/// Trains the network from Glorot initialization seeded by `config.seed`.
pub fn train(problem: &Problem, net: &NetworkSpec, config: &TrainConfig) -> Result<TrainState> {
    train_with(problem, net, config, netgrad::init_params(net, config.seed)?, |_| Ok(()))
}

/// Trains from `theta0`, reporting every iterate to `observer`.
pub fn train_with(
    problem: &Problem,
    net: &NetworkSpec,
    config: &TrainConfig,
    theta0: ParamVector,
    observer: impl FnMut(&TrainEvent<'_>) -> Result<()>,
) -> Result<TrainState> {
    net.validate()?;
    if theta0.len() != net.param_count() {
        return Err(Error::DimensionMismatch { expected: net.param_count(), actual: theta0.len() });
    }
    minimize(
        theta0.into_vec(),
        config,
        |theta| problem.energy_nn_with_grad(net, &ParamVector::from_vec_unchecked(theta.to_vec())),
        observer,
    )
}

/// Minimizes the pixel energy with the same loop, starting from the observation.
/// The weight bound is ignored.
pub fn solve_fd(problem: &Problem, config: &TrainConfig) -> Result<Field> {
    let state = solve_fd_state(problem, config)?;
    Field::new(problem.grid().clone(), state.best_theta)
}

pub fn solve_fd_state(problem: &Problem, config: &TrainConfig) -> Result<TrainState> {
    let config = TrainConfig { weight_bound: None, ..config.clone() };
    minimize(
        problem.observation().values().to_vec(),
        &config,
        |u| problem.energy_fd_with_grad(u),
        |_| Ok(()),
    )
}
