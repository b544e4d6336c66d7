//! Pointwise TV integrands: the Euclidean norm and its three smoothings.
//!
//! The 4-channel forms average the two 2-vector halves, `|w|_{2,1} = (|w_a| + |w_b|) / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// Plain Euclidean norm; not differentiable at 0.
    None,
    /// Quadratic below `gamma`, linear above; approximates the norm from below.
    #[default]
    Huber,
    /// `sqrt(|v|^2 + gamma)`; approximates the norm from above.
    Lift,
    /// `max(|v|, gamma)`.
    MaxLift,
}

impl Smoothing {
    pub fn validate_gamma(self, gamma: f64) -> Result<()> {
        let ok = match self {
            Smoothing::None => true,
            Smoothing::Huber => gamma > 0.0,
            Smoothing::Lift | Smoothing::MaxLift => gamma >= 0.0,
        };
        if ok && gamma.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("gamma = {gamma} is not admissible for {self:?} smoothing")))
        }
    }

    /// Value of the smoothed norm given the Euclidean norm `r = |v|_2 >= 0`.
    #[inline]
    pub fn of_norm(self, r: f64, gamma: f64) -> f64 {
        match self {
            Smoothing::None => r,
            Smoothing::Huber => {
                if r <= gamma {
                    r * r / (2.0 * gamma)
                } else {
                    r - 0.5 * gamma
                }
            }
            Smoothing::Lift => (r * r + gamma).sqrt(),
            Smoothing::MaxLift => r.max(gamma),
        }
    }

    /// `phi(v)` for a 2-vector given by its components.
    #[inline]
    pub fn eval2(self, a: f64, b: f64, gamma: f64) -> f64 {
        match self {
            // avoid the sqrt round trip so that lift(v, 0) matches the norm
            Smoothing::Lift => (a * a + b * b + gamma).sqrt(),
            _ => self.of_norm(a.hypot(b), gamma),
        }
    }

    /// Derivative scale `s` with `d phi / d v = s * v` for a 2-vector `v`.
    #[inline]
    pub fn grad_scale2(self, a: f64, b: f64, gamma: f64) -> f64 {
        let r2 = a * a + b * b;
        match self {
            Smoothing::None => {
                if r2 > 0.0 {
                    1.0 / r2.sqrt()
                } else {
                    0.0
                }
            }
            Smoothing::Huber => {
                let r = r2.sqrt();
                if r <= gamma {
                    1.0 / gamma
                } else {
                    1.0 / r
                }
            }
            Smoothing::Lift => {
                let d = (r2 + gamma).sqrt();
                if d > 0.0 {
                    1.0 / d
                } else {
                    0.0
                }
            }
            Smoothing::MaxLift => {
                let r = r2.sqrt();
                if r > gamma {
                    1.0 / r
                } else {
                    0.0
                }
            }
        }
    }
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// `|w|_{2,1} = (|(w1,w2)|_2 + |(w3,w4)|_2) / 2`.
pub fn norm_21(w: [f64; 4]) -> f64 {
    0.5 * (norm2([w[0], w[1]]) + norm2([w[2], w[3]]))
}

/// Huber function of a 2-vector; requires `gamma > 0`.
pub fn huber2(v: [f64; 2], gamma: f64) -> Result<f64> {
    Smoothing::Huber.validate_gamma(gamma)?;
    Ok(Smoothing::Huber.eval2(v[0], v[1], gamma))
}

pub fn huber21(w: [f64; 4], gamma: f64) -> Result<f64> {
    Ok(0.5 * (huber2([w[0], w[1]], gamma)? + huber2([w[2], w[3]], gamma)?))
}

/// `sqrt(v1^2 + v2^2 + gamma)`; requires `gamma >= 0`.
pub fn lift2(v: [f64; 2], gamma: f64) -> Result<f64> {
    Smoothing::Lift.validate_gamma(gamma)?;
    Ok(Smoothing::Lift.eval2(v[0], v[1], gamma))
}

pub fn lift21(w: [f64; 4], gamma: f64) -> Result<f64> {
    Ok(0.5 * (lift2([w[0], w[1]], gamma)? + lift2([w[2], w[3]], gamma)?))
}

/// `max(|v|_2, gamma)`.
pub fn maxlift2(v: [f64; 2], gamma: f64) -> f64 {
    norm2(v).max(gamma)
}

pub fn maxlift21(w: [f64; 4], gamma: f64) -> f64 {
    0.5 * (maxlift2([w[0], w[1]], gamma) + maxlift2([w[2], w[3]], gamma))
}

/// Smoothed norm of one node's gradient channels.
///
/// Channels are consumed in pairs and the pair values averaged; a single
/// channel (1D) is treated as the pair `(v, 0)`. With two pairs this is the
/// `|.|_{2,1}` family, with one pair the plain 2-norm family.
#[inline]
pub fn group_value(smoothing: Smoothing, channels: &[f64], gamma: f64) -> f64 {
    match channels.len() {
        1 => smoothing.eval2(channels[0], 0.0, gamma),
        2 => smoothing.eval2(channels[0], channels[1], gamma),
        _ => {
            let pairs = channels.len() / 2;
            let s: f64 = channels
                .chunks_exact(2)
                .map(|p| smoothing.eval2(p[0], p[1], gamma))
                .sum();
            s / pairs as f64
        }
    }
}

/// Writes `d group_value / d channels` into `out`, scaled by `seed`.
#[inline]
pub fn group_grad(smoothing: Smoothing, channels: &[f64], gamma: f64, seed: f64, out: &mut [f64]) {
    match channels.len() {
        1 => {
            out[0] = seed * smoothing.grad_scale2(channels[0], 0.0, gamma) * channels[0];
        }
        n => {
            let scale = seed / (n / 2) as f64;
            for (p, o) in channels.chunks_exact(2).zip(out.chunks_exact_mut(2)) {
                let s = scale * smoothing.grad_scale2(p[0], p[1], gamma);
                o[0] = s * p[0];
                o[1] = s * p[1];
            }
        }
    }
}
