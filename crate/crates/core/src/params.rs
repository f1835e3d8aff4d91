//! Model parameters and their unconstrained reparameterisation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of free parameters `(mu, alpha, beta, sigma)`.
pub const N_PARAMS: usize = 4;

pub const PARAM_NAMES: [&str; N_PARAMS] = ["mu", "alpha", "beta", "sigma"];

/// Parameters of the spatiotemporal Hawkes intensity.
///
/// `mu` is the background rate per region-month, `alpha` the excitation mass
/// each past event spreads over future months, `beta` the geometric decay of the
/// temporal kernel and `sigma` the spatial bandwidth. `t_max` is the fixed lag
/// truncation and is never estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub t_max: usize,
}

impl ModelParams {
    pub fn new(mu: f64, alpha: f64, beta: f64, sigma: f64, t_max: usize) -> Result<Self> {
        let p = Self { mu, alpha, beta, sigma, t_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu >= 0.0
            && self.alpha >= 0.0
            && self.beta > 0.0
            && self.beta <= 1.0
            && self.sigma > 0.0
            && self.mu + self.alpha > 0.0
            && self.t_max >= 1
            && self.as_array().iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid model parameters {self:?}")))
        }
    }

    pub fn as_array(&self) -> [f64; N_PARAMS] {
        [self.mu, self.alpha, self.beta, self.sigma]
    }

    pub fn from_array(v: [f64; N_PARAMS], t_max: usize) -> Self {
        Self { mu: v[0], alpha: v[1], beta: v[2], sigma: v[3], t_max }
    }

    /// `[ln mu, ln alpha, logit beta, ln sigma]`.
    pub fn to_unconstrained(&self) -> [f64; N_PARAMS] {
        [self.mu.ln(), self.alpha.ln(), logit(self.beta), self.sigma.ln()]
    }

    pub fn from_unconstrained(u: &[f64], t_max: usize) -> Self {
        Self { mu: u[0].exp(), alpha: u[1].exp(), beta: inv_logit(u[2]), sigma: u[3].exp(), t_max }
    }

    /// Log-determinant of the Jacobian of the inverse transform, evaluated at
    /// these (constrained) values.
    pub fn log_jacobian(&self) -> f64 {
        self.mu.ln() + self.alpha.ln() + self.beta.ln() + (1.0 - self.beta).ln() + self.sigma.ln()
    }

    /// `dθ/du` per coordinate, for chaining natural-space gradients.
    pub fn unconstrained_scale(&self) -> [f64; N_PARAMS] {
        [self.mu, self.alpha, self.beta * (1.0 - self.beta), self.sigma]
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Numerically stable logistic function.
pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
