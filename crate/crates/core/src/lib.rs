//! Stochastic volatility with correlated jumps: simulation, rolling-window
//! Bayesian estimation and clustering of the resulting parameter paths.
//!
//! The pipeline is
//! [`data_io::load_prices`] → [`data_io::log_returns`] →
//! [`rolling::rolling_estimate`] → [`rolling::ParamTimeSeries::smoothed`] /
//! [`cluster::pair_cluster`].

pub mod cluster;
pub mod data_io;
pub mod mcmc;
pub mod model;
pub mod rng;
pub mod rolling;

pub use cluster::{
    elbow_select, kmeans, pair_cluster, zscore, ClusterError, ClusterResult, PairClusterOptions,
    PairClustering, PointSet, Scaling,
};
pub use data_io::{
    load_prices, log_returns, read_param_series, write_param_series, DataError, PriceSeries,
    ReturnSeries,
};
pub use mcmc::{
    estimate_window, gibbs_sweep, summarize, McmcConfig, McmcError, PosteriorSummary, Priors,
    SamplerState,
};
pub use model::{
    implied_moments, simulate_path, validate_params, ImpliedMoments, LatentPath, ModelError,
    SvcjParams, PARAM_NAMES,
};
pub use rolling::{
    moving_average, rolling_estimate, rolling_estimate_with, ParamEstimate, ParamTimeSeries,
    RollingConfig, RollingError, SvcjEstimator, WindowEstimator,
};
