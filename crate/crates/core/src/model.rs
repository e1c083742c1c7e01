//! The discretized stochastic-volatility model with correlated jumps.
//!
//! ```text
//! Y_t = mu + sqrt(V_{t-1}) eps_y + Z_y J_t
//! V_t = alpha + beta V_{t-1} + sigma_v sqrt(V_{t-1}) eps_v + Z_v J_t
//! ```
//!
//! `J_t ~ Bernoulli(lambda)`, `Z_v ~ Exp(mean mu_v)`,
//! `Z_y | Z_v ~ N(mu_y + rho_j Z_v, sigma_y^2)` and `corr(eps_y, eps_v) = rho`.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use thiserror::Error;

use crate::rng::rng_from_seed;

/// Names of the ten model parameters, in canonical order.
pub const PARAM_NAMES: [&str; 10] = [
    "mu", "mu_y", "sigma_y", "lambda", "alpha", "beta", "rho", "sigma_v", "rho_j", "mu_v",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {}", .0.join(", "))]
    Validation(Vec<String>),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("initial variance must be finite and nonnegative, got {0}")]
    InvalidInitialVariance(f64),
    #[error("nonstationary: |beta| = {0} >= 1, stationary variance mean undefined")]
    Nonstationary(f64),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
}

/// One point of the ten-parameter family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcjParams {
    /// Per-step return drift.
    pub mu: f64,
    /// Mean of the return-jump size.
    pub mu_y: f64,
    /// Standard deviation of the return-jump size.
    pub sigma_y: f64,
    /// Per-step jump probability.
    pub lambda: f64,
    /// Variance drift.
    pub alpha: f64,
    /// Coefficient on lagged variance.
    pub beta: f64,
    /// Correlation of the diffusive shocks.
    pub rho: f64,
    /// Volatility of variance.
    pub sigma_v: f64,
    /// Loading of the variance jump in the return-jump mean.
    pub rho_j: f64,
    /// Mean of the exponential variance-jump size.
    pub mu_v: f64,
}

impl SvcjParams {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.mu,
            self.mu_y,
            self.sigma_y,
            self.lambda,
            self.alpha,
            self.beta,
            self.rho,
            self.sigma_v,
            self.rho_j,
            self.mu_v,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        Self {
            mu: a[0],
            mu_y: a[1],
            sigma_y: a[2],
            lambda: a[3],
            alpha: a[4],
            beta: a[5],
            rho: a[6],
            sigma_v: a[7],
            rho_j: a[8],
            mu_v: a[9],
        }
    }

    /// Index of a parameter name in [`PARAM_NAMES`].
    pub fn index_of(name: &str) -> Result<usize, ModelError> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<f64, ModelError> {
        Ok(self.to_array()[Self::index_of(name)?])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        let mut a = self.to_array();
        a[Self::index_of(name)?] = value;
        *self = Self::from_array(a);
        Ok(())
    }

    /// Checks every hard constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut bad = Vec::new();
        for (name, v) in PARAM_NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() {
                bad.push(format!("{name} (must be finite)"));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            bad.push("lambda (must lie in [0, 1])".to_string());
        }
        if !(self.sigma_y > 0.0) {
            bad.push("sigma_y (must be > 0)".to_string());
        }
        if !(self.sigma_v > 0.0) {
            bad.push("sigma_v (must be > 0)".to_string());
        }
        if !(self.mu_v > 0.0) {
            bad.push("mu_v (must be > 0)".to_string());
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            bad.push("rho (must lie in (-1, 1))".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Validation(bad))
        }
    }

    /// Soft diagnostics that do not make the parameters invalid.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.beta.abs() >= 1.0 {
            w.push(format!(
                "beta = {} has |beta| >= 1; the variance recursion is not stationary",
                self.beta
            ));
        }
        w
    }

    pub fn is_stationary(&self) -> bool {
        self.beta.abs() < 1.0
    }

    /// Starting variance for simulation: the stationary mean of the jump-free
    /// recursion when it exists, else 1.
    pub fn default_v0(&self) -> f64 {
        if self.is_stationary() {
            (self.alpha / (1.0 - self.beta)).max(0.0)
        } else {
            1.0
        }
    }
}

impl fmt::Display for SvcjParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = PARAM_NAMES
            .iter()
            .zip(self.to_array())
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Free function form of [`SvcjParams::validate`].
pub fn validate_params(p: &SvcjParams) -> Result<(), ModelError> {
    p.validate()
}

/// Simulated returns together with the latent states that produced them.
///
/// `v[t]` is the variance after step `t`; the return `y[t]` used the variance
/// from the previous step (`v0` for `t = 0`). Jump sizes are zero wherever
/// `j[t] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub v0: f64,
    pub v: Vec<f64>,
    pub j: Vec<u8>,
    pub zy: Vec<f64>,
    pub zv: Vec<f64>,
    pub y: Vec<f64>,
}

impl LatentPath {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Variance in effect when `y[t]` was drawn.
    pub fn lagged_v(&self, t: usize) -> f64 {
        if t == 0 {
            self.v0
        } else {
            self.v[t - 1]
        }
    }
}

/// Simulates `horizon` steps. Negative variance proposals are truncated at 0.
pub fn simulate_path(
    p: &SvcjParams,
    v0: f64,
    horizon: usize,
    seed: u64,
) -> Result<LatentPath, ModelError> {
    p.validate()?;
    if horizon == 0 {
        return Err(ModelError::ZeroHorizon);
    }
    if !(v0.is_finite() && v0 >= 0.0) {
        return Err(ModelError::InvalidInitialVariance(v0));
    }

    let mut rng = rng_from_seed(seed);
    let jump_v = Exp::new(1.0 / p.mu_v).expect("mu_v validated positive");
    let rho_c = (1.0 - p.rho * p.rho).sqrt();

    let mut path = LatentPath {
        v0,
        v: Vec::with_capacity(horizon),
        j: Vec::with_capacity(horizon),
        zy: Vec::with_capacity(horizon),
        zv: Vec::with_capacity(horizon),
        y: Vec::with_capacity(horizon),
    };

    let mut v_prev = v0;
    for _ in 0..horizon {
        let jump = rng.random::<f64>() < p.lambda;
        let (zv, zy) = if jump {
            let zv: f64 = jump_v.sample(&mut rng);
            let n: f64 = StandardNormal.sample(&mut rng);
            (zv, p.mu_y + p.rho_j * zv + p.sigma_y * n)
        } else {
            (0.0, 0.0)
        };
        let e1: f64 = StandardNormal.sample(&mut rng);
        let e2: f64 = StandardNormal.sample(&mut rng);
        let eps_y = e1;
        let eps_v = p.rho * e1 + rho_c * e2;

        let sv = v_prev.sqrt();
        let y = p.mu + sv * eps_y + zy;
        let v = (p.alpha + p.beta * v_prev + p.sigma_v * sv * eps_v + zv).max(0.0);

        path.y.push(y);
        path.v.push(v);
        path.j.push(jump as u8);
        path.zy.push(zy);
        path.zv.push(zv);
        v_prev = v;
    }
    Ok(path)
}

/// Closed-form first moments of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpliedMoments {
    pub mean_return: f64,
    /// `None` when `|beta| >= 1`.
    pub stationary_mean_v: Option<f64>,
}

impl ImpliedMoments {
    pub fn require_stationary_mean_v(&self, p: &SvcjParams) -> Result<f64, ModelError> {
        self.stationary_mean_v
            .ok_or(ModelError::Nonstationary(p.beta.abs()))
    }
}

/// `E[Y] = mu + lambda (mu_y + rho_j mu_v)` and, when stationary,
/// `E[V] = (alpha + lambda mu_v) / (1 - beta)` (ignoring truncation at 0).
pub fn implied_moments(p: &SvcjParams) -> Result<ImpliedMoments, ModelError> {
    p.validate()?;
    let mean_return = p.mu + p.lambda * (p.mu_y + p.rho_j * p.mu_v);
    let stationary_mean_v = p
        .is_stationary()
        .then(|| (p.alpha + p.lambda * p.mu_v) / (1.0 - p.beta));
    Ok(ImpliedMoments {
        mean_return,
        stationary_mean_v,
    })
}
