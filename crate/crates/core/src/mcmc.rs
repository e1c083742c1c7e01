//! Gibbs sampler with data augmentation for one estimation window.
//!
//! The latent state holds the variance path `v[0..=T]`, jump indicators and
//! jump sizes. `v[t]` is the variance in effect for return `y[t]`, and
//! `v[t + 1]` is generated from it by the variance recursion, so every step
//! contributes one bivariate normal term
//!
//! ```text
//! ry_t = y_t - mu - J_t Zy_t                 ~ N(0, v_t)
//! rv_t = v_{t+1} - alpha - beta v_t - J_t Zv_t
//! rv_t | ry_t                                ~ N(psi ry_t, omega v_t)
//! ```
//!
//! with `psi = rho sigma_v` and `omega = sigma_v^2 (1 - rho^2)`. Working in
//! `(psi, omega)` makes every parameter block conjugate.
//!
//! Jump sizes at non-jump steps are stored as zero. They are integrated out of
//! the parameter updates and redrawn from their prior when the jump indicator
//! is resampled.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, StandardNormal};
use thiserror::Error;

use crate::model::SvcjParams;
use crate::rng::{rng_from_seed, SvcjRng};

/// Minimum number of returns in a window.
pub const MIN_WINDOW: usize = 30;

/// Sweeps between proposal-scale adjustments during burn-in.
const TUNE_INTERVAL: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McmcError {
    #[error("window too short: {0} observations, need at least {MIN_WINDOW}")]
    WindowTooShort(usize),
    #[error("non-finite return at index {0}")]
    NonFinite(usize),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("chain too short to summarize: {0} draws, need at least 2")]
    ChainTooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPrior {
    pub mean: f64,
    pub var: f64,
}

/// Inverse gamma with density proportional to `x^(-shape-1) exp(-scale/x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaPrior {
    /// Mean when `shape > 1`, otherwise the mode.
    pub fn center(&self) -> f64 {
        if self.shape > 1.0 {
            self.scale / (self.shape - 1.0)
        } else {
            self.scale / (self.shape + 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateNormalPrior {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

/// Normal prior whose variance is `var_ratio * omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledNormalPrior {
    pub mean: f64,
    pub var_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub mu: NormalPrior,
    pub mu_y: NormalPrior,
    pub sigma_y_sq: InvGammaPrior,
    pub lambda: BetaPrior,
    /// Joint prior on `(alpha, beta)`.
    pub alpha_beta: BivariateNormalPrior,
    pub mu_v: InvGammaPrior,
    pub rho_j: NormalPrior,
    pub psi: ScaledNormalPrior,
    pub omega: InvGammaPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mu: NormalPrior { mean: 0.0, var: 25.0 },
            mu_y: NormalPrior { mean: 0.0, var: 100.0 },
            sigma_y_sq: InvGammaPrior { shape: 5.0, scale: 20.0 },
            lambda: BetaPrior { a: 2.0, b: 40.0 },
            alpha_beta: BivariateNormalPrior {
                mean: [0.0, 0.0],
                cov: [[1.0, 0.0], [0.0, 1.0]],
            },
            mu_v: InvGammaPrior { shape: 10.0, scale: 20.0 },
            rho_j: NormalPrior { mean: 0.0, var: 4.0 },
            psi: ScaledNormalPrior { mean: 0.0, var_ratio: 0.5 },
            omega: InvGammaPrior { shape: 2.5, scale: 0.1 },
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<(), McmcError> {
        let mut bad = Vec::new();
        let mut pos = |name: &str, x: f64| {
            if !(x.is_finite() && x > 0.0) {
                bad.push(format!("{name} must be positive"));
            }
        };
        pos("mu.var", self.mu.var);
        pos("mu_y.var", self.mu_y.var);
        pos("rho_j.var", self.rho_j.var);
        pos("sigma_y_sq.shape", self.sigma_y_sq.shape);
        pos("sigma_y_sq.scale", self.sigma_y_sq.scale);
        pos("mu_v.shape", self.mu_v.shape);
        pos("mu_v.scale", self.mu_v.scale);
        pos("omega.shape", self.omega.shape);
        pos("omega.scale", self.omega.scale);
        pos("lambda.a", self.lambda.a);
        pos("lambda.b", self.lambda.b);
        pos("psi.var_ratio", self.psi.var_ratio);
        let c = self.alpha_beta.cov;
        if !(c[0][0] > 0.0 && c[1][1] > 0.0 && c[0][1] == c[1][0])
            || c[0][0] * c[1][1] - c[0][1] * c[1][0] <= 0.0
        {
            bad.push("alpha_beta.cov must be symmetric positive definite".into());
        }
        let finite = [
            self.mu.mean,
            self.mu_y.mean,
            self.rho_j.mean,
            self.psi.mean,
            self.alpha_beta.mean[0],
            self.alpha_beta.mean[1],
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            bad.push("prior means must be finite".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(McmcError::InvalidPrior(bad.join("; ")))
        }
    }

    /// Parameters at the prior centers, used to start a chain.
    pub fn center(&self) -> (SvcjParams, f64, f64) {
        let omega = self.omega.center();
        let psi = self.psi.mean;
        let sigma_v = (psi * psi + omega).sqrt();
        let params = SvcjParams {
            mu: self.mu.mean,
            mu_y: self.mu_y.mean,
            sigma_y: self.sigma_y_sq.center().sqrt(),
            lambda: self.lambda.a / (self.lambda.a + self.lambda.b),
            alpha: self.alpha_beta.mean[0],
            beta: self.alpha_beta.mean[1],
            rho: psi / sigma_v,
            sigma_v,
            rho_j: self.rho_j.mean,
            mu_v: self.mu_v.center(),
        };
        (params, psi, omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial random-walk step on `ln v_t`; adapted during burn-in.
    pub v_proposal_sd: f64,
    pub v_floor: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 5000,
            burn_in: 2500,
            thin: 1,
            v_proposal_sd: 0.25,
            v_floor: 1e-6,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        let err = |m: &str| Err(McmcError::InvalidConfig(m.to_string()));
        if self.n_iter == 0 {
            return err("n_iter must be positive");
        }
        if self.burn_in >= self.n_iter {
            return err("burn_in must be smaller than n_iter");
        }
        if self.thin == 0 {
            return err("thin must be positive");
        }
        if !(self.v_proposal_sd.is_finite() && self.v_proposal_sd > 0.0) {
            return err("v_proposal_sd must be positive");
        }
        if !(self.v_floor.is_finite() && self.v_floor > 0.0) {
            return err("v_floor must be positive");
        }
        Ok(())
    }

    /// Number of draws kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

/// The eleven blocks of a sweep, in update order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Step {
    Jumps = 0,
    JumpSizeY,
    JumpSizeV,
    Lambda,
    MuYRhoJ,
    SigmaY,
    MuV,
    Mu,
    AlphaBeta,
    PsiOmega,
    Volatility,
}

/// Set of sweep blocks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepMask(u16);

impl StepMask {
    pub const ALL: StepMask = StepMask((1 << 11) - 1);
    pub const NONE: StepMask = StepMask(0);

    pub fn only(step: Step) -> Self {
        StepMask(1 << step as u16)
    }

    pub fn with(self, step: Step) -> Self {
        StepMask(self.0 | (1 << step as u16))
    }

    pub fn without(self, step: Step) -> Self {
        StepMask(self.0 & !(1 << step as u16))
    }

    pub fn contains(self, step: Step) -> bool {
        self.0 & (1 << step as u16) != 0
    }
}

/// Switches used by diagnostics and tests to isolate parts of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepControl {
    pub steps: StepMask,
    /// When false, every block samples from its prior-only conditional and
    /// the variance path is left untouched.
    pub likelihood: bool,
    /// Replaces the variance-path target with a flat density on `ln v_t`.
    pub flat_v_target: bool,
}

impl Default for SweepControl {
    fn default() -> Self {
        Self {
            steps: StepMask::ALL,
            likelihood: true,
            flat_v_target: false,
        }
    }
}

/// Current draw of every unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    /// `rho` and `sigma_v` are kept in sync with `psi` and `omega`.
    pub params: SvcjParams,
    pub psi: f64,
    pub omega: f64,
    /// Length `T + 1`.
    pub v: Vec<f64>,
    pub j: Vec<u8>,
    pub zy: Vec<f64>,
    pub zv: Vec<f64>,
}

impl SamplerState {
    /// Start of a chain: variance from a 20-step centered moving variance of
    /// the demeaned returns, no jumps, parameters at prior centers.
    pub fn initial(returns: &[f64], priors: &Priors, v_floor: f64) -> Self {
        let n = returns.len();
        let mean = returns.iter().sum::<f64>() / n.max(1) as f64;
        let sq: Vec<f64> = returns.iter().map(|r| (r - mean).powi(2)).collect();
        let v = (0..=n)
            .map(|t| {
                let lo = t.saturating_sub(10);
                let hi = (t + 10).min(n);
                let lo = lo.min(hi.saturating_sub(1));
                let w = &sq[lo..hi];
                let var = if w.is_empty() {
                    0.0
                } else {
                    w.iter().sum::<f64>() / w.len() as f64
                };
                var.max(v_floor)
            })
            .collect();
        let (params, psi, omega) = priors.center();
        Self {
            params,
            psi,
            omega,
            v,
            j: vec![0; n],
            zy: vec![0.0; n],
            zv: vec![0.0; n],
        }
    }

    /// Builds a state from known parameters and latent values, e.g. to
    /// start at the truth of a simulation.
    pub fn from_parts(
        params: SvcjParams,
        v: Vec<f64>,
        j: Vec<u8>,
        zy: Vec<f64>,
        zv: Vec<f64>,
    ) -> Self {
        let psi = params.rho * params.sigma_v;
        let omega = params.sigma_v * params.sigma_v * (1.0 - params.rho * params.rho);
        Self {
            params,
            psi,
            omega,
            v,
            j,
            zy,
            zv,
        }
    }

    pub fn jump_count(&self) -> usize {
        self.j.iter().map(|&j| j as usize).sum()
    }

    fn sync_sigma_v(&mut self) {
        let sigma_v = (self.psi * self.psi + self.omega).sqrt();
        self.params.sigma_v = sigma_v;
        self.params.rho = self.psi / sigma_v;
    }

    #[inline]
    fn ry(&self, y: &[f64], t: usize) -> f64 {
        y[t] - self.params.mu - if self.j[t] == 1 { self.zy[t] } else { 0.0 }
    }

    #[inline]
    fn rv(&self, t: usize) -> f64 {
        let p = &self.params;
        self.v[t + 1] - p.alpha - p.beta * self.v[t] - if self.j[t] == 1 { self.zv[t] } else { 0.0 }
    }
}

/// Proposal settings for the variance path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VTuning {
    pub proposal_sd: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepStats {
    pub v_proposed: usize,
    pub v_accepted: usize,
    pub jump_count: usize,
}

fn numerical(msg: impl Into<String>) -> McmcError {
    McmcError::Numerical(msg.into())
}

fn check_precision(name: &str, prec: f64) -> Result<(), McmcError> {
    if prec.is_finite() && prec > 0.0 {
        Ok(())
    } else {
        Err(numerical(format!("non-positive conditional precision for {name}: {prec}")))
    }
}

fn normal(rng: &mut SvcjRng, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Draw from `N(h/prec, 1/prec)`.
fn normal_canonical(rng: &mut SvcjRng, name: &str, prec: f64, h: f64) -> Result<f64, McmcError> {
    check_precision(name, prec)?;
    Ok(normal(rng, h / prec, prec.recip().sqrt()))
}

fn inv_gamma(rng: &mut SvcjRng, name: &str, shape: f64, scale: f64) -> Result<f64, McmcError> {
    if !(shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0) {
        return Err(numerical(format!(
            "degenerate inverse-gamma conditional for {name}: shape {shape}, scale {scale}"
        )));
    }
    let g = Gamma::new(shape, 1.0 / scale).map_err(|e| numerical(format!("{name}: {e}")))?;
    let x: f64 = g.sample(rng);
    let out = 1.0 / x;
    if out.is_finite() && out > 0.0 {
        Ok(out)
    } else {
        Err(numerical(format!("{name} draw underflowed")))
    }
}

/// Draw from the bivariate normal with precision `prec` and canonical mean `h`
/// (mean = prec^-1 h).
fn bivariate_canonical(
    rng: &mut SvcjRng,
    name: &str,
    prec: [[f64; 2]; 2],
    h: [f64; 2],
) -> Result<[f64; 2], McmcError> {
    let det = prec[0][0] * prec[1][1] - prec[0][1] * prec[1][0];
    if !(det.is_finite() && det > 0.0 && prec[0][0] > 0.0) {
        return Err(numerical(format!("singular conditional precision for {name}")));
    }
    let c00 = prec[1][1] / det;
    let c01 = -prec[0][1] / det;
    let c11 = prec[0][0] / det;
    let m0 = c00 * h[0] + c01 * h[1];
    let m1 = c01 * h[0] + c11 * h[1];
    let l00 = c00.sqrt();
    let l10 = c01 / l00;
    let rem = c11 - l10 * l10;
    if !(rem > 0.0 && l00.is_finite()) {
        return Err(numerical(format!("conditional covariance for {name} not positive definite")));
    }
    let l11 = rem.sqrt();
    let z0: f64 = StandardNormal.sample(rng);
    let z1: f64 = StandardNormal.sample(rng);
    Ok([m0 + l00 * z0, m1 + l10 * z0 + l11 * z1])
}

/// Draw from `N(mean, sd^2)` restricted to `[0, inf)`.
///
/// Plain rejection when the mean is nonnegative; otherwise the translated
/// exponential proposal of Robert (1995), whose acceptance stays above 0.75
/// for any truncation point.
pub fn sample_nonneg_normal(rng: &mut SvcjRng, mean: f64, sd: f64) -> f64 {
    let a = -mean / sd;
    if a <= 0.0 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= a {
                return mean + sd * z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / rate;
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - rate).powi(2) {
            return (mean + sd * z).max(0.0);
        }
    }
}

/// Draw from the density proportional to `exp(h x - prec x^2 / 2)` on `x >= 0`.
fn nonneg_canonical(rng: &mut SvcjRng, prec: f64, h: f64) -> Result<f64, McmcError> {
    if prec > 0.0 && prec.is_finite() {
        Ok(sample_nonneg_normal(rng, h / prec, prec.recip().sqrt()))
    } else if prec == 0.0 && h < 0.0 {
        let e: f64 = Exp1.sample(rng);
        Ok(e / -h)
    } else {
        Err(numerical(format!(
            "improper conditional for volatility jump size: precision {prec}, linear term {h}"
        )))
    }
}

/// Runs one sweep over the blocks selected in `control`, in canonical order.
pub fn gibbs_sweep(
    state: &mut SamplerState,
    y: &[f64],
    priors: &Priors,
    tuning: &VTuning,
    control: &SweepControl,
    rng: &mut SvcjRng,
) -> Result<SweepStats, McmcError> {
    let n = y.len();
    if state.v.len() != n + 1 || state.j.len() != n || state.zy.len() != n || state.zv.len() != n
    {
        return Err(McmcError::InvalidConfig(format!(
            "state lengths inconsistent with {n} returns"
        )));
    }
    let lik = control.likelihood;
    let steps = control.steps;
    let mut stats = SweepStats::default();

    if steps.contains(Step::Jumps) {
        update_jumps(state, y, lik, rng)?;
    }
    if steps.contains(Step::JumpSizeY) {
        update_jump_size_y(state, y, lik, rng)?;
    }
    if steps.contains(Step::JumpSizeV) {
        update_jump_size_v(state, y, lik, rng)?;
    }
    if steps.contains(Step::Lambda) {
        let k = state.jump_count() as f64;
        let b = Beta::new(priors.lambda.a + k, priors.lambda.b + n as f64 - k)
            .map_err(|e| numerical(format!("lambda: {e}")))?;
        state.params.lambda = b.sample(rng);
    }
    if steps.contains(Step::MuYRhoJ) {
        update_mu_y_rho_j(state, priors, rng)?;
    }
    if steps.contains(Step::SigmaY) {
        let p = state.params;
        let (mut k, mut ss) = (0.0, 0.0);
        for t in 0..n {
            if state.j[t] == 1 {
                k += 1.0;
                ss += (state.zy[t] - p.mu_y - p.rho_j * state.zv[t]).powi(2);
            }
        }
        let s2 = inv_gamma(
            rng,
            "sigma_y^2",
            priors.sigma_y_sq.shape + 0.5 * k,
            priors.sigma_y_sq.scale + 0.5 * ss,
        )?;
        state.params.sigma_y = s2.sqrt();
    }
    if steps.contains(Step::MuV) {
        let (mut k, mut sum) = (0.0, 0.0);
        for t in 0..n {
            if state.j[t] == 1 {
                k += 1.0;
                sum += state.zv[t];
            }
        }
        state.params.mu_v =
            inv_gamma(rng, "mu_v", priors.mu_v.shape + k, priors.mu_v.scale + sum)?;
    }
    if steps.contains(Step::Mu) {
        update_mu(state, y, priors, lik, rng)?;
    }
    if steps.contains(Step::AlphaBeta) {
        update_alpha_beta(state, y, priors, lik, rng)?;
    }
    if steps.contains(Step::PsiOmega) {
        update_psi_omega(state, y, priors, lik, rng)?;
    }
    if steps.contains(Step::Volatility) && lik {
        let (prop, acc) = update_volatility(state, y, tuning, control.flat_v_target, rng)?;
        stats.v_proposed = prop;
        stats.v_accepted = acc;
    }
    stats.jump_count = state.jump_count();
    Ok(stats)
}

/// Bivariate log-density kernel of step `t` for given residuals.
#[inline]
fn step_kernel(ry: f64, rv: f64, s: f64, psi: f64, omega: f64) -> f64 {
    let e = rv - psi * ry;
    -0.5 * ry * ry / s - 0.5 * e * e / (omega * s)
}

fn update_jumps(
    state: &mut SamplerState,
    y: &[f64],
    lik: bool,
    rng: &mut SvcjRng,
) -> Result<(), McmcError> {
    let p = state.params;
    let (psi, omega) = (state.psi, state.omega);
    let log_on = p.lambda.ln();
    let log_off = (1.0 - p.lambda).ln();
    for t in 0..y.len() {
        if state.j[t] == 0 {
            // Non-jump sizes are not stored; draw them from the prior.
            let zv: f64 = Exp1.sample(rng);
            let zv = zv * p.mu_v;
            state.zv[t] = zv;
            state.zy[t] = normal(rng, p.mu_y + p.rho_j * zv, p.sigma_y);
        }
        let u: f64 = rng.random();
        let on = if p.lambda <= 0.0 {
            false
        } else if p.lambda >= 1.0 {
            true
        } else {
            let (mut l1, mut l0) = (log_on, log_off);
            if lik {
                let s = state.v[t];
                let base_y = y[t] - p.mu;
                let base_v = state.v[t + 1] - p.alpha - p.beta * s;
                l1 += step_kernel(base_y - state.zy[t], base_v - state.zv[t], s, psi, omega);
                l0 += step_kernel(base_y, base_v, s, psi, omega);
            }
            let prob = 1.0 / (1.0 + (l0 - l1).exp());
            u < prob
        };
        state.j[t] = on as u8;
        if !on {
            state.zv[t] = 0.0;
            state.zy[t] = 0.0;
        }
    }
    Ok(())
}

fn update_jump_size_y(
    state: &mut SamplerState,
    y: &[f64],
    lik: bool,
    rng: &mut SvcjRng,
) -> Result<(), McmcError> {
    let p = state.params;
    let (psi, omega) = (state.psi, state.omega);
    let prior_prec = 1.0 / (p.sigma_y * p.sigma_y);
    for t in 0..y.len() {
        if state.j[t] == 0 {
            state.zy[t] = 0.0;
            continue;
        }
        let m0 = p.mu_y + p.rho_j * state.zv[t];
        let mut prec = prior_prec;
        let mut h = m0 * prior_prec;
        if lik {
            let s = state.v[t];
            let a = y[t] - p.mu;
            let rv = state.rv(t);
            let c = rv - psi * a;
            prec += (1.0 + psi * psi / omega) / s;
            h += a / s - psi * c / (omega * s);
        }
        state.zy[t] = normal_canonical(rng, "jump size in returns", prec, h)?;
    }
    Ok(())
}

fn update_jump_size_v(
    state: &mut SamplerState,
    y: &[f64],
    lik: bool,
    rng: &mut SvcjRng,
) -> Result<(), McmcError> {
    let p = state.params;
    let (psi, omega) = (state.psi, state.omega);
    let sy2 = p.sigma_y * p.sigma_y;
    for t in 0..y.len() {
        if state.j[t] == 0 {
            state.zv[t] = 0.0;
            continue;
        }
        let mut prec = p.rho_j * p.rho_j / sy2;
        let mut h = p.rho_j * (state.zy[t] - p.mu_y) / sy2 - 1.0 / p.mu_v;
        if lik {
            let s = state.v[t];
            let ry = state.ry(y, t);
            let e = state.v[t + 1] - p.alpha - p.beta * s - psi * ry;
            prec += 1.0 / (omega * s);
            h += e / (omega * s);
        }
        state.zv[t] = nonneg_canonical(rng, prec, h)?;
    }
    Ok(())
}

fn update_mu_y_rho_j(
    state: &mut SamplerState,
    priors: &Priors,
    rng: &mut SvcjRng,
) -> Result<(), McmcError> {
    let w = 1.0 / (state.params.sigma_y * state.params.sigma_y);
    let p0 = [1.0 / priors.mu_y.var, 1.0 / priors.rho_j.var];
    let mut prec = [[p0[0], 0.0], [0.0, p0[1]]];
    let mut h = [p0[0] * priors.mu_y.mean, p0[1] * priors.rho_j.mean];
    for t in 0..state.j.len() {
        if state.j[t] == 1 {
            let (x, z) = (state.zv[t], state.zy[t]);
            prec[0][0] += w;
            prec[0][1] += w * x;
            prec[1][1] += w * x * x;
            h[0] += w * z;
            h[1] += w * x * z;
        }
    }
    prec[1][0] = prec[0][1];
    let [mu_y, rho_j] = bivariate_canonical(rng, "(mu_y, rho_j)", prec, h)?;
    state.params.mu_y = mu_y;
    state.params.rho_j = rho_j;
    Ok(())
}

fn update_mu(
    state: &mut SamplerState,
    y: &[f64],
    priors: &Priors,
    lik: bool,
    rng: &mut SvcjRng,
) -> Result<(), McmcError> {
    let mut prec = 1.0 / priors.mu.var;
    let mut h = priors.mu.mean / priors.mu.var;
    if lik {
        let (psi, omega) = (state.psi, state.omega);
        let k = 1.0 + psi * psi / omega;
        for t in 0..y.len() {
            let s = state.v[t];
            let a = y[t] - if state.j[t] == 1 { state.zy[t] } else { 0.0 };
            let c = state.rv(t) - psi * a;
            prec += k / s;
            h += a / s - psi * c / (omega * s);
        }
    }
    state.params.mu = normal_canonical(rng, "mu", prec, h)?;
    Ok(())
}

fn update_alpha_beta(
    state: &mut SamplerState,
    y: &[f64],
    priors: &Priors,
    lik: bool,
    rng: &mut SvcjRng,
) -> Result<(), McmcError> {
    let c = priors.alpha_beta.cov;
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let p0 = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
    let m0 = priors.alpha_beta.mean;
    let mut prec = p0;
    let mut h = [
        p0[0][0] * m0[0] + p0[0][1] * m0[1],
        p0[1][0] * m0[0] + p0[1][1] * m0[1],
    ];
    if lik {
        let (psi, omega) = (state.psi, state.omega);
        for t in 0..y.len() {
            let s = state.v[t];
            let jz = if state.j[t] == 1 { state.zv[t] } else { 0.0 };
            let target = state.v[t + 1] - jz - psi * state.ry(y, t);
            let w = 1.0 / (omega * s);
            prec[0][0] += w;
            prec[0][1] += w * s;
            prec[1][1] += w * s * s;
            h[0] += w * target;
            h[1] += w * s * target;
        }
        prec[1][0] = prec[0][1];
    }
    let [alpha, beta] = bivariate_canonical(rng, "(alpha, beta)", prec, h)?;
    state.params.alpha = alpha;
    state.params.beta = beta;
    Ok(())
}

fn update_psi_omega(
    state: &mut SamplerState,
    y: &[f64],
    priors: &Priors,
    lik: bool,
    rng: &mut SvcjRng,
) -> Result<(), McmcError> {
    let kappa0 = 1.0 / priors.psi.var_ratio;
    let psi0 = priors.psi.mean;
    let (mut syy, mut syv, mut svv, mut n) = (0.0, 0.0, 0.0, 0.0);
    if lik {
        for t in 0..y.len() {
            let s = state.v[t];
            let ry = state.ry(y, t);
            let rv = state.rv(t);
            syy += ry * ry / s;
            syv += ry * rv / s;
            svv += rv * rv / s;
            n += 1.0;
        }
    }
    let kappa = kappa0 + syy;
    let psi_hat = (kappa0 * psi0 + syv) / kappa;
    let shape = priors.omega.shape + 0.5 * n;
    let scale = priors.omega.scale + 0.5 * (svv + kappa0 * psi0 * psi0 - kappa * psi_hat * psi_hat);
    let omega = inv_gamma(rng, "omega", shape, scale)?;
    check_precision("psi", kappa / omega)?;
    let psi = normal(rng, psi_hat, (omega / kappa).sqrt());
    state.psi = psi;
    state.omega = omega;
    state.sync_sigma_v();
    Ok(())
}

/// Log target of `v[t] = x` on the log scale, up to a constant.
fn log_v_target(state: &SamplerState, y: &[f64], t: usize, x: f64) -> f64 {
    let n = y.len();
    let p = &state.params;
    let (psi, omega) = (state.psi, state.omega);
    let mut lp = 0.0;
    if t < n {
        let ry = state.ry(y, t);
        let jz = if state.j[t] == 1 { state.zv[t] } else { 0.0 };
        let rv = state.v[t + 1] - p.alpha - p.beta * x - jz;
        lp += -x.ln() + step_kernel(ry, rv, x, psi, omega);
    }
    if t >= 1 {
        let s = state.v[t - 1];
        let ry = state.ry(y, t - 1);
        let jz = if state.j[t - 1] == 1 { state.zv[t - 1] } else { 0.0 };
        let e = x - p.alpha - p.beta * s - jz - psi * ry;
        lp += -0.5 * e * e / (omega * s);
        // Jacobian of the log transform; v[0] carries a flat prior on ln v.
        lp += x.ln();
    }
    lp
}

fn update_volatility(
    state: &mut SamplerState,
    y: &[f64],
    tuning: &VTuning,
    flat: bool,
    rng: &mut SvcjRng,
) -> Result<(usize, usize), McmcError> {
    let mut accepted = 0;
    let len = state.v.len();
    for t in 0..len {
        let cur = state.v[t];
        let z: f64 = StandardNormal.sample(rng);
        let prop = cur * (tuning.proposal_sd * z).exp();
        let u: f64 = rng.random();
        if !(prop >= tuning.floor) || !prop.is_finite() {
            continue;
        }
        let log_ratio = if flat {
            0.0
        } else {
            log_v_target(state, y, t, prop) - log_v_target(state, y, t, cur)
        };
        if log_ratio.is_nan() {
            return Err(numerical(format!("variance target undefined at step {t}")));
        }
        if u.ln() < log_ratio {
            state.v[t] = prop;
            accepted += 1;
        }
    }
    Ok((len, accepted))
}

/// Sampler diagnostics for one window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    /// Average acceptance of the variance updates after burn-in.
    pub v_acceptance: f64,
    /// Average number of jumps per retained sweep.
    pub mean_jump_count: f64,
    /// Proposal scale after adaptation.
    pub v_proposal_sd: f64,
    pub draws: usize,
}

/// Posterior summary of the ten parameters. Arrays follow
/// [`crate::model::PARAM_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: SvcjParams,
    pub sd: [f64; 10],
    /// 5%, 50% and 95% quantiles.
    pub quantiles: [[f64; 3]; 10],
    pub diagnostics: Diagnostics,
}

pub const QUANTILE_LEVELS: [f64; 3] = [0.05, 0.5, 0.95];

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sample standard deviation and quantiles of each parameter.
pub fn summarize(chain: &[[f64; 10]], levels: [f64; 3]) -> Result<PosteriorSummary, McmcError> {
    let n = chain.len();
    if n < 2 {
        return Err(McmcError::ChainTooShort(n));
    }
    let mut mean = [0.0; 10];
    let mut sd = [0.0; 10];
    let mut quantiles = [[0.0; 3]; 10];
    let mut col = vec![0.0; n];
    for k in 0..10 {
        for (c, draw) in col.iter_mut().zip(chain) {
            *c = draw[k];
        }
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        mean[k] = m;
        sd[k] = var.sqrt();
        col.sort_by(f64::total_cmp);
        for (i, q) in levels.iter().enumerate() {
            quantiles[k][i] = quantile_sorted(&col, *q);
        }
    }
    Ok(PosteriorSummary {
        mean: SvcjParams::from_array(mean),
        sd,
        quantiles,
        diagnostics: Diagnostics {
            draws: n,
            ..Diagnostics::default()
        },
    })
}

/// Retained draws and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<[f64; 10]>,
    pub summary: PosteriorSummary,
}

fn check_window(returns: &[f64]) -> Result<(), McmcError> {
    if returns.len() < MIN_WINDOW {
        return Err(McmcError::WindowTooShort(returns.len()));
    }
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(McmcError::NonFinite(i));
    }
    let first = returns[0];
    if returns.iter().all(|&r| r == first) {
        return Err(numerical("degenerate window: all returns are identical"));
    }
    Ok(())
}

/// Runs a full chain and keeps the retained draws.
pub fn run_chain(
    returns: &[f64],
    priors: &Priors,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<ChainOutput, McmcError> {
    check_window(returns)?;
    priors.validate()?;
    cfg.validate()?;

    let mut rng = rng_from_seed(seed);
    let mut state = SamplerState::initial(returns, priors, cfg.v_floor);
    let mut tuning = VTuning {
        proposal_sd: cfg.v_proposal_sd,
        floor: cfg.v_floor,
    };
    let control = SweepControl::default();

    let mut draws = Vec::with_capacity(cfg.retained());
    let (mut block_prop, mut block_acc) = (0usize, 0usize);
    let (mut post_prop, mut post_acc, mut post_jumps, mut post_sweeps) = (0usize, 0usize, 0usize, 0usize);

    for iter in 0..cfg.n_iter {
        let stats = gibbs_sweep(&mut state, returns, priors, &tuning, &control, &mut rng)?;
        if iter < cfg.burn_in {
            block_prop += stats.v_proposed;
            block_acc += stats.v_accepted;
            if (iter + 1) % TUNE_INTERVAL == 0 && block_prop > 0 {
                let rate = block_acc as f64 / block_prop as f64;
                if rate > 0.5 {
                    tuning.proposal_sd *= 1.1;
                } else if rate < 0.3 {
                    tuning.proposal_sd *= 0.9;
                }
                block_prop = 0;
                block_acc = 0;
            }
            continue;
        }
        post_prop += stats.v_proposed;
        post_acc += stats.v_accepted;
        post_jumps += stats.jump_count;
        post_sweeps += 1;
        if (iter - cfg.burn_in) % cfg.thin == 0 {
            let draw = state.params.to_array();
            if draw.iter().any(|x| !x.is_finite()) {
                return Err(numerical("non-finite parameter draw"));
            }
            draws.push(draw);
        }
    }

    let mut summary = summarize(&draws, QUANTILE_LEVELS)?;
    summary.diagnostics = Diagnostics {
        v_acceptance: if post_prop > 0 {
            post_acc as f64 / post_prop as f64
        } else {
            0.0
        },
        mean_jump_count: post_jumps as f64 / post_sweeps.max(1) as f64,
        v_proposal_sd: tuning.proposal_sd,
        draws: draws.len(),
    };
    Ok(ChainOutput { draws, summary })
}

/// Estimates the model on one window of returns and summarizes the posterior.
pub fn estimate_window(
    returns: &[f64],
    priors: &Priors,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<PosteriorSummary, McmcError> {
    run_chain(returns, priors, cfg, seed).map(|c| c.summary)
}
