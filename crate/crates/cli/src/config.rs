//! Run configuration: a flat JSON object with dotted keys.
//!
//! Every key has a flag equivalent; flags override the file. The effective
//! configuration is written back in the same flat form.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use svcj_core::mcmc::{McmcConfig, Priors};
use svcj_core::model::{SvcjParams, PARAM_NAMES};

/// Smallest window the sampler accepts.
pub const MIN_WINDOW: usize = svcj_core::mcmc::MIN_WINDOW;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub windows: Vec<usize>,
    pub step: usize,
    pub ma_width: usize,
    pub scale: f64,
    pub seed: Option<u64>,
    pub parallelism: usize,
    pub quiet: bool,
    pub mcmc: McmcConfig,
    pub priors: Priors,
    // simulate
    pub params: SvcjParams,
    pub horizon: usize,
    pub v0: Option<f64>,
    pub start_date: String,
    pub initial_price: f64,
    // cluster / elbow
    pub dims: (String, String),
    pub k: Option<usize>,
    pub k_max: usize,
    pub restarts: usize,
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: PathBuf::from("."),
            windows: vec![150, 300, 600],
            step: 1,
            ma_width: 20,
            scale: 100.0,
            seed: None,
            parallelism: default_parallelism(),
            quiet: false,
            mcmc: McmcConfig::default(),
            priors: Priors::default(),
            params: SvcjParams {
                mu: 0.1,
                mu_y: -0.5,
                sigma_y: 2.0,
                lambda: 0.05,
                alpha: 0.1,
                beta: 0.6,
                rho: -0.3,
                sigma_v: 0.3,
                rho_j: -0.5,
                mu_v: 1.0,
            },
            horizon: 2000,
            v0: None,
            start_date: "2015-01-01".to_string(),
            initial_price: 1000.0,
            dims: ("mu".to_string(), "beta".to_string()),
            k: None,
            k_max: svcj_core::cluster::DEFAULT_K_MAX,
            restarts: svcj_core::cluster::DEFAULT_RESTARTS,
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, String> {
    v.as_f64()
        .ok_or_else(|| format!("config key '{key}' must be a number"))
}

fn as_usize(key: &str, v: &Value) -> Result<usize, String> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| format!("config key '{key}' must be a nonnegative integer"))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, String> {
    v.as_str()
        .ok_or_else(|| format!("config key '{key}' must be a string"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| format!("config {} is not valid JSON: {e}", path.display()))?;
        let Value::Object(map) = value else {
            return Err("config must be a JSON object".into());
        };
        let mut cfg = RunConfig::default();
        cfg.apply(&map)?;
        Ok(cfg)
    }

    /// Applies flat `key: value` pairs on top of the current values.
    pub fn apply(&mut self, map: &Map<String, Value>) -> Result<(), String> {
        for (key, v) in map {
            self.set(key, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), String> {
        if let Some(name) = key.strip_prefix("params.") {
            let x = as_f64(key, v)?;
            return self.params.set(name, x).map_err(|e| e.to_string());
        }
        let p = &mut self.priors;
        let m = &mut self.mcmc;
        match key {
            "input" => self.input = Some(PathBuf::from(as_str(key, v)?)),
            "output_dir" => self.output_dir = PathBuf::from(as_str(key, v)?),
            "windows" => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| format!("config key '{key}' must be an array"))?;
                self.windows = arr
                    .iter()
                    .map(|x| as_usize(key, x))
                    .collect::<Result<_, _>>()?;
            }
            "step" => self.step = as_usize(key, v)?,
            "ma_width" => self.ma_width = as_usize(key, v)?,
            "scale" => self.scale = as_f64(key, v)?,
            "seed" => self.seed = Some(v.as_u64().ok_or("config key 'seed' must be a nonnegative integer")?),
            "parallelism" => self.parallelism = as_usize(key, v)?,
            "quiet" => self.quiet = v.as_bool().ok_or("config key 'quiet' must be a boolean")?,
            "horizon" => self.horizon = as_usize(key, v)?,
            "v0" => self.v0 = Some(as_f64(key, v)?),
            "start_date" => self.start_date = as_str(key, v)?.to_string(),
            "initial_price" => self.initial_price = as_f64(key, v)?,
            "dims" => self.dims = parse_dims(as_str(key, v)?)?,
            "k" => self.k = Some(as_usize(key, v)?),
            "k_max" => self.k_max = as_usize(key, v)?,
            "restarts" => self.restarts = as_usize(key, v)?,
            "mcmc.n_iter" => m.n_iter = as_usize(key, v)?,
            "mcmc.burn_in" => m.burn_in = as_usize(key, v)?,
            "mcmc.thin" => m.thin = as_usize(key, v)?,
            "mcmc.v_proposal_sd" => m.v_proposal_sd = as_f64(key, v)?,
            "mcmc.v_floor" => m.v_floor = as_f64(key, v)?,
            "priors.mu.mean" => p.mu.mean = as_f64(key, v)?,
            "priors.mu.var" => p.mu.var = as_f64(key, v)?,
            "priors.mu_y.mean" => p.mu_y.mean = as_f64(key, v)?,
            "priors.mu_y.var" => p.mu_y.var = as_f64(key, v)?,
            "priors.sigma_y_sq.shape" => p.sigma_y_sq.shape = as_f64(key, v)?,
            "priors.sigma_y_sq.scale" => p.sigma_y_sq.scale = as_f64(key, v)?,
            "priors.lambda.a" => p.lambda.a = as_f64(key, v)?,
            "priors.lambda.b" => p.lambda.b = as_f64(key, v)?,
            "priors.alpha_beta.mean_alpha" => p.alpha_beta.mean[0] = as_f64(key, v)?,
            "priors.alpha_beta.mean_beta" => p.alpha_beta.mean[1] = as_f64(key, v)?,
            "priors.alpha_beta.var_alpha" => p.alpha_beta.cov[0][0] = as_f64(key, v)?,
            "priors.alpha_beta.var_beta" => p.alpha_beta.cov[1][1] = as_f64(key, v)?,
            "priors.alpha_beta.cov" => {
                let c = as_f64(key, v)?;
                p.alpha_beta.cov[0][1] = c;
                p.alpha_beta.cov[1][0] = c;
            }
            "priors.mu_v.shape" => p.mu_v.shape = as_f64(key, v)?,
            "priors.mu_v.scale" => p.mu_v.scale = as_f64(key, v)?,
            "priors.rho_j.mean" => p.rho_j.mean = as_f64(key, v)?,
            "priors.rho_j.var" => p.rho_j.var = as_f64(key, v)?,
            "priors.psi.mean" => p.psi.mean = as_f64(key, v)?,
            "priors.psi.var_ratio" => p.psi.var_ratio = as_f64(key, v)?,
            "priors.omega.shape" => p.omega.shape = as_f64(key, v)?,
            "priors.omega.scale" => p.omega.scale = as_f64(key, v)?,
            other => return Err(format!("unknown config key '{other}'")),
        }
        Ok(())
    }

    /// Flat key-value form, keys sorted.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            out.insert(k.to_string(), v);
        };
        if let Some(i) = &self.input {
            put("input", json!(i.display().to_string()));
        }
        put("output_dir", json!(self.output_dir.display().to_string()));
        put("windows", json!(self.windows));
        put("step", json!(self.step));
        put("ma_width", json!(self.ma_width));
        put("scale", json!(self.scale));
        if let Some(s) = self.seed {
            put("seed", json!(s));
        }
        put("parallelism", json!(self.parallelism));
        put("quiet", json!(self.quiet));
        put("horizon", json!(self.horizon));
        if let Some(v0) = self.v0 {
            put("v0", json!(v0));
        }
        put("start_date", json!(self.start_date));
        put("initial_price", json!(self.initial_price));
        put("dims", json!(format!("{},{}", self.dims.0, self.dims.1)));
        if let Some(k) = self.k {
            put("k", json!(k));
        }
        put("k_max", json!(self.k_max));
        put("restarts", json!(self.restarts));
        for (name, v) in PARAM_NAMES.iter().zip(self.params.to_array()) {
            put(&format!("params.{name}"), json!(v));
        }
        let m = &self.mcmc;
        put("mcmc.n_iter", json!(m.n_iter));
        put("mcmc.burn_in", json!(m.burn_in));
        put("mcmc.thin", json!(m.thin));
        put("mcmc.v_proposal_sd", json!(m.v_proposal_sd));
        put("mcmc.v_floor", json!(m.v_floor));
        let p = &self.priors;
        put("priors.mu.mean", json!(p.mu.mean));
        put("priors.mu.var", json!(p.mu.var));
        put("priors.mu_y.mean", json!(p.mu_y.mean));
        put("priors.mu_y.var", json!(p.mu_y.var));
        put("priors.sigma_y_sq.shape", json!(p.sigma_y_sq.shape));
        put("priors.sigma_y_sq.scale", json!(p.sigma_y_sq.scale));
        put("priors.lambda.a", json!(p.lambda.a));
        put("priors.lambda.b", json!(p.lambda.b));
        put("priors.alpha_beta.mean_alpha", json!(p.alpha_beta.mean[0]));
        put("priors.alpha_beta.mean_beta", json!(p.alpha_beta.mean[1]));
        put("priors.alpha_beta.var_alpha", json!(p.alpha_beta.cov[0][0]));
        put("priors.alpha_beta.var_beta", json!(p.alpha_beta.cov[1][1]));
        put("priors.alpha_beta.cov", json!(p.alpha_beta.cov[0][1]));
        put("priors.mu_v.shape", json!(p.mu_v.shape));
        put("priors.mu_v.scale", json!(p.mu_v.scale));
        put("priors.rho_j.mean", json!(p.rho_j.mean));
        put("priors.rho_j.var", json!(p.rho_j.var));
        put("priors.psi.mean", json!(p.psi.mean));
        put("priors.psi.var_ratio", json!(p.psi.var_ratio));
        put("priors.omega.shape", json!(p.omega.shape));
        put("priors.omega.scale", json!(p.omega.scale));
        out
    }

    pub fn write_echo(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.to_flat())?;
        std::fs::write(dir.join("run_config.json"), text + "\n")
    }

    /// Checks the invariants that are usage errors rather than data errors.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(w) = self.windows.iter().find(|w| **w < MIN_WINDOW) {
            return Err(format!("window size {w} is below the minimum of {MIN_WINDOW}"));
        }
        if self.windows.is_empty() {
            return Err("at least one window size is required".into());
        }
        if self.ma_width == 0 {
            return Err("ma_width must be at least 1".into());
        }
        if self.step == 0 {
            return Err("step must be at least 1".into());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err("scale must be positive".into());
        }
        if self.restarts == 0 {
            return Err("restarts must be at least 1".into());
        }
        self.mcmc.validate().map_err(|e| e.to_string())?;
        self.priors.validate().map_err(|e| e.to_string())?;
        Ok(())
    }
}

pub fn parse_dims(s: &str) -> Result<(String, String), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("dims must be two comma-separated names, got '{s}'")),
    }
}
