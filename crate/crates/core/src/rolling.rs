//! Rolling-window estimation and moving-average smoothing.
//!
//! With returns indexed `1..=T`, the row for time `t` is estimated from
//! returns `[t - n, t - 1]` and labelled with the date of return `t`, for
//! `t = n + 1, n + 1 + step, ...`.

use std::collections::VecDeque;

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::data_io::ReturnSeries;
use crate::mcmc::{estimate_window, McmcConfig, McmcError, PosteriorSummary, Priors, MIN_WINDOW};
use crate::model::{ModelError, SvcjParams};
use crate::rng::mix_seed;

/// Default smoothing width.
pub const DEFAULT_MA_WIDTH: usize = 20;

#[derive(Debug, Error)]
pub enum RollingError {
    #[error("series shorter than window: {len} returns, window {window} needs at least {}", window + 1)]
    SeriesShorterThanWindow { len: usize, window: usize },
    #[error("invalid rolling configuration: {0}")]
    InvalidConfig(String),
    #[error("estimation failed for the window ending {date}: {source}")]
    Estimator { date: NaiveDate, source: McmcError },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Point estimate and posterior standard deviation of every parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamEstimate {
    pub mean: SvcjParams,
    pub sd: [f64; 10],
}

impl From<&PosteriorSummary> for ParamEstimate {
    fn from(s: &PosteriorSummary) -> Self {
        Self {
            mean: s.mean,
            sd: s.sd,
        }
    }
}

/// Date-indexed parameter estimates; `None` rows are windows whose estimate
/// failed numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTimeSeries {
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<Option<ParamEstimate>>,
    /// Window length that produced the series, when known.
    pub window: Option<usize>,
}

impl ParamTimeSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Posterior-mean column of one parameter.
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>, ModelError> {
        let k = SvcjParams::index_of(name)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.map(|e| e.mean.to_array()[k]))
            .collect())
    }

    /// Applies [`moving_average`] to every mean and sd column.
    pub fn smoothed(&self, width: usize) -> ParamTimeSeries {
        let n = self.rows.len();
        let mut cols: Vec<Vec<Option<f64>>> = Vec::with_capacity(20);
        for k in 0..20 {
            let col: Vec<Option<f64>> = self
                .rows
                .iter()
                .map(|r| {
                    r.map(|e| {
                        if k < 10 {
                            e.mean.to_array()[k]
                        } else {
                            e.sd[k - 10]
                        }
                    })
                })
                .collect();
            cols.push(moving_average(&col, width));
        }
        let rows = (0..n)
            .map(|i| {
                if cols[0][i].is_none() {
                    return None;
                }
                let mut mean = [0.0; 10];
                let mut sd = [0.0; 10];
                for k in 0..10 {
                    mean[k] = cols[k][i].unwrap_or(f64::NAN);
                    sd[k] = cols[k + 10][i].unwrap_or(f64::NAN);
                }
                Some(ParamEstimate {
                    mean: SvcjParams::from_array(mean),
                    sd,
                })
            })
            .collect();
        ParamTimeSeries {
            dates: self.dates.clone(),
            rows,
            window: self.window,
        }
    }
}

/// Trailing mean of the last `width` available values at each index.
///
/// Missing entries are skipped. Before `width` values have been seen the mean
/// of all available values so far is emitted; indices preceding the first
/// available value stay missing. `width = 0` is treated as 1.
pub fn moving_average(series: &[Option<f64>], width: usize) -> Vec<Option<f64>> {
    let width = width.max(1);
    let mut buf: VecDeque<f64> = VecDeque::with_capacity(width);
    series
        .iter()
        .map(|x| {
            if let Some(v) = x {
                if buf.len() == width {
                    buf.pop_front();
                }
                buf.push_back(*v);
            }
            if buf.is_empty() {
                None
            } else {
                Some(buf.iter().sum::<f64>() / buf.len() as f64)
            }
        })
        .collect()
}

/// Convenience form for a series without gaps.
pub fn moving_average_dense(series: &[f64], width: usize) -> Vec<f64> {
    let wrapped: Vec<Option<f64>> = series.iter().copied().map(Some).collect();
    moving_average(&wrapped, width)
        .into_iter()
        .map(|x| x.expect("dense input has no gaps"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingConfig {
    /// Window length `n`.
    pub window: usize,
    pub step: usize,
    pub base_seed: u64,
    /// Worker threads; 1 runs serially on the calling thread.
    pub parallelism: usize,
}

impl RollingConfig {
    pub fn new(window: usize, base_seed: u64) -> Self {
        Self {
            window,
            step: 1,
            base_seed,
            parallelism: 1,
        }
    }

    pub fn validate(&self) -> Result<(), RollingError> {
        if self.window < MIN_WINDOW {
            return Err(RollingError::InvalidConfig(format!(
                "window must be at least {MIN_WINDOW}, got {}",
                self.window
            )));
        }
        if self.step == 0 {
            return Err(RollingError::InvalidConfig("step must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(RollingError::InvalidConfig(
                "parallelism must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Number of rows produced for `len` returns: `floor((T - n - 1) / step) + 1`.
pub fn row_count(len: usize, window: usize, step: usize) -> usize {
    if len < window + 1 || step == 0 {
        0
    } else {
        (len - window - 1) / step + 1
    }
}

/// Anything that can estimate one window.
pub trait WindowEstimator: Sync {
    fn estimate(&self, window: &[f64], seed: u64) -> Result<PosteriorSummary, McmcError>;
}

/// The Gibbs sampler with fixed priors and configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SvcjEstimator {
    pub priors: Priors,
    pub mcmc: McmcConfig,
}

impl WindowEstimator for SvcjEstimator {
    fn estimate(&self, window: &[f64], seed: u64) -> Result<PosteriorSummary, McmcError> {
        estimate_window(window, &self.priors, &self.mcmc, seed)
    }
}

/// Reported after each finished window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowDone {
    pub date: NaiveDate,
    /// Position of the row in the output.
    pub row: usize,
    pub total: usize,
    pub ok: bool,
}

/// Estimates every window with the default Gibbs sampler.
pub fn rolling_estimate(
    returns: &ReturnSeries,
    cfg: &RollingConfig,
    priors: &Priors,
    mcmc: &McmcConfig,
) -> Result<ParamTimeSeries, RollingError> {
    let est = SvcjEstimator {
        priors: *priors,
        mcmc: *mcmc,
    };
    rolling_estimate_with(returns, cfg, &est, None)
}

/// Estimates every window with `estimator`.
///
/// Each window's seed is derived from the base seed and the window's
/// position, so the output does not depend on scheduling.
pub fn rolling_estimate_with<E: WindowEstimator>(
    returns: &ReturnSeries,
    cfg: &RollingConfig,
    estimator: &E,
    progress: Option<&(dyn Fn(WindowDone) + Sync)>,
) -> Result<ParamTimeSeries, RollingError> {
    cfg.validate()?;
    let len = returns.returns.len();
    let n = cfg.window;
    if len < n + 1 {
        return Err(RollingError::SeriesShorterThanWindow { len, window: n });
    }
    let ends: Vec<usize> = (n..len).step_by(cfg.step).collect();
    let total = ends.len();
    debug_assert_eq!(total, row_count(len, n, cfg.step));

    let run = |(row, &t): (usize, &usize)| -> Result<Option<ParamEstimate>, RollingError> {
        let date = returns.dates[t];
        // 1-based time index of the labelled return.
        let seed = mix_seed(cfg.base_seed, t as u64 + 1);
        let out = match estimator.estimate(&returns.returns[t - n..t], seed) {
            Ok(s) => Ok(Some(ParamEstimate::from(&s))),
            Err(McmcError::Numerical(_)) => Ok(None),
            Err(source) => Err(RollingError::Estimator { date, source }),
        };
        if let Some(cb) = progress {
            cb(WindowDone {
                date,
                row,
                total,
                ok: matches!(out, Ok(Some(_))),
            });
        }
        out
    };

    let results: Vec<Result<Option<ParamEstimate>, RollingError>> = if cfg.parallelism <= 1 {
        ends.iter().enumerate().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| RollingError::ThreadPool(e.to_string()))?;
        pool.install(|| ends.par_iter().enumerate().map(run).collect())
    };

    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ParamTimeSeries {
        dates: ends.iter().map(|&t| returns.dates[t]).collect(),
        rows,
        window: Some(n),
    })
}
