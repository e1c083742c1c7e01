//! Z-scoring, k-means with k-means++ restarts, elbow selection and
//! clustering of parameter pairs from a [`ParamTimeSeries`].

use chrono::NaiveDate;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{mix_seed, rng_from_seed, SvcjRng};
use crate::rolling::ParamTimeSeries;

/// Lloyd iterations per restart.
pub const MAX_ITER: usize = 300;
pub const DEFAULT_RESTARTS: usize = 50;
/// Largest k tried by [`pair_cluster`] when k is not given.
pub const DEFAULT_K_MAX: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("degenerate dimension '{0}': standard deviation is zero")]
    DegenerateDimension(String),
    #[error("k = {k} exceeds the number of distinct points ({distinct})")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("no usable rows after dropping missing estimates")]
    EmptySeries,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Points in `d` dimensions, optionally dated.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Vec<f64>>,
    dates: Option<Vec<NaiveDate>>,
    dim_names: Vec<String>,
}

impl PointSet {
    pub fn new(
        points: Vec<Vec<f64>>,
        dates: Option<Vec<NaiveDate>>,
        dim_names: Vec<String>,
    ) -> Result<Self, ClusterError> {
        let d = dim_names.len();
        if d == 0 {
            return Err(ClusterError::InvalidInput("no dimensions".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(ClusterError::InvalidInput(format!(
                    "point {i} has {} coordinates, expected {d}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(ClusterError::InvalidInput(format!("point {i} is not finite")));
            }
        }
        if let Some(ds) = &dates {
            if ds.len() != points.len() {
                return Err(ClusterError::InvalidInput(format!(
                    "{} dates for {} points",
                    ds.len(),
                    points.len()
                )));
            }
        }
        Ok(Self {
            points,
            dates,
            dim_names,
        })
    }

    /// Undated points with generated dimension names.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        let d = points.first().map_or(1, Vec::len);
        Self::new(points, None, (0..d).map(|i| format!("x{i}")).collect())
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn dates(&self) -> Option<&[NaiveDate]> {
        self.dates.as_deref()
    }

    pub fn dim_names(&self) -> &[String] {
        &self.dim_names
    }

    pub fn dim(&self) -> usize {
        self.dim_names.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn distinct_count(&self) -> usize {
        let mut pts: Vec<&Vec<f64>> = self.points.iter().collect();
        pts.sort_by(|a, b| cmp_points(a, b));
        pts.dedup_by(|a, b| cmp_points(a, b).is_eq());
        pts.len()
    }
}

fn cmp_points(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Scaling {
    pub fn unscale(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

pub fn zscore(points: &PointSet) -> Result<(PointSet, Scaling), ClusterError> {
    let n = points.len();
    if n == 0 {
        return Err(ClusterError::InvalidInput("empty point set".into()));
    }
    let d = points.dim();
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for k in 0..d {
        let m = points.points.iter().map(|p| p[k]).sum::<f64>() / n as f64;
        let var = points.points.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / n as f64;
        if !(var > 0.0) {
            return Err(ClusterError::DegenerateDimension(points.dim_names[k].clone()));
        }
        mean[k] = m;
        sd[k] = var.sqrt();
    }
    let scaled = points
        .points
        .iter()
        .map(|p| (0..d).map(|k| (p[k] - mean[k]) / sd[k]).collect())
        .collect();
    Ok((
        PointSet {
            points: scaled,
            dates: points.dates.clone(),
            dim_names: points.dim_names.clone(),
        },
        Scaling { mean, sd },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub wcss: f64,
    /// Set when the points were z-scored before clustering.
    pub scaling: Option<Scaling>,
    /// WCSS after each Lloyd update of the winning restart.
    pub wcss_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Sum of squared distances of each point to its assigned centroid.
pub fn wcss_of(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut SvcjRng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = d2.iter().rposition(|w| *w > 0.0).unwrap_or(n - 1);
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && *w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Means of the assigned points. An empty cluster takes over the point
/// farthest from its current centroid among clusters with at least two
/// members.
fn update_centroids(
    points: &[Vec<f64>],
    labels: &mut [usize],
    centroids: &mut [Vec<f64>],
) {
    let k = centroids.len();
    let d = points[0].len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let dist = sq_dist(p, &centroids[labels[i]]);
            if dist > far_d {
                far_d = dist;
                far = Some(i);
            }
        }
        let i = far.expect("k <= n guarantees a donor cluster");
        labels[i] = empty;
        centroids[empty] = points[i].clone();
    }
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (c, (s, n)) in centroids.iter_mut().zip(sums.into_iter().zip(counts)) {
        *c = s.into_iter().map(|x| x / n as f64).collect();
    }
}

struct Run {
    centroids: Vec<Vec<f64>>,
    labels: Vec<usize>,
    wcss: f64,
    trace: Vec<f64>,
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut SvcjRng) -> Run {
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut trace = Vec::new();
    for _ in 0..MAX_ITER {
        update_centroids(points, &mut labels, &mut centroids);
        trace.push(wcss_of(points, &centroids, &labels));
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    // Centroids must be the means of the final labels even when the
    // iteration cap is hit.
    update_centroids(points, &mut labels, &mut centroids);
    let wcss = wcss_of(points, &centroids, &labels);
    Run {
        centroids,
        labels,
        wcss,
        trace,
    }
}

/// Best of `restarts` k-means++ initialized Lloyd runs.
pub fn kmeans(
    points: &PointSet,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterResult, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidInput("k must be positive".into()));
    }
    if restarts == 0 {
        return Err(ClusterError::InvalidInput("restarts must be positive".into()));
    }
    let distinct = points.distinct_count();
    if k > distinct {
        return Err(ClusterError::TooFewDistinct { k, distinct });
    }
    let pts = points.points();
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(mix_seed(seed, r as u64));
            lloyd(pts, k, &mut rng)
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.wcss < runs[best].wcss {
            best = i;
        }
    }
    let run = runs.into_iter().nth(best).expect("restarts > 0");
    Ok(ClusterResult {
        k,
        centroids: run.centroids,
        labels: run.labels,
        wcss: run.wcss,
        scaling: None,
        wcss_trace: run.trace,
    })
}

/// Chooses k from a WCSS curve (`curve[i]` is WCSS for `k = i + 1`) as the
/// interior k with the largest second difference, ties to the smaller k.
pub fn elbow_from_curve(curve: &[f64]) -> Result<usize, ClusterError> {
    if curve.len() < 3 {
        return Err(ClusterError::InvalidInput(
            "elbow needs WCSS for at least k = 1..3".into(),
        ));
    }
    let mut best_k = 2;
    let mut best = f64::NEG_INFINITY;
    for k in 2..curve.len() {
        let d = curve[k - 2] - 2.0 * curve[k - 1] + curve[k];
        if d > best {
            best = d;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// WCSS for `k = 1..=k_max` and the elbow choice.
pub fn elbow_select(
    points: &PointSet,
    k_max: usize,
    restarts: usize,
    seed: u64,
) -> Result<(usize, Vec<f64>), ClusterError> {
    if k_max < 3 {
        return Err(ClusterError::InvalidInput(format!(
            "k_max must be at least 3, got {k_max}"
        )));
    }
    let distinct = points.distinct_count();
    if k_max > distinct {
        return Err(ClusterError::TooFewDistinct { k: k_max, distinct });
    }
    let curve = (1..=k_max)
        .map(|k| kmeans(points, k, restarts, mix_seed(seed, 1000 + k as u64)).map(|r| r.wcss))
        .collect::<Result<Vec<_>, _>>()?;
    let k = elbow_from_curve(&curve)?;
    Ok((k, curve))
}

/// Clustering of two posterior-mean columns, joined back to dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PairClustering {
    pub dim_names: [String; 2],
    pub dates: Vec<NaiveDate>,
    pub result: ClusterResult,
    /// Centroids in the original parameter units.
    pub centroids_original: Vec<Vec<f64>>,
    /// Present when k was chosen by the elbow rule.
    pub wcss_curve: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairClusterOptions {
    /// Fixed k; `None` selects k by the elbow rule.
    pub k: Option<usize>,
    pub k_max: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PairClusterOptions {
    fn default() -> Self {
        Self {
            k: None,
            k_max: DEFAULT_K_MAX,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
        }
    }
}

/// Z-scores the `(dim_a, dim_b)` posterior means and clusters them.
///
/// When every usable row is the same point, k is forced to 1. Without a fixed
/// k, the elbow search runs up to `min(k_max, distinct points)`; if that is
/// below 3 the distinct-point count is used as k.
pub fn pair_cluster(
    series: &ParamTimeSeries,
    dim_a: &str,
    dim_b: &str,
    opts: &PairClusterOptions,
) -> Result<PairClustering, ClusterError> {
    let col = |name: &str| {
        series
            .column(name)
            .map_err(|_| ClusterError::UnknownParameter(name.to_string()))
    };
    let a = col(dim_a)?;
    let b = col(dim_b)?;

    let mut dates = Vec::new();
    let mut pts = Vec::new();
    for i in 0..series.len() {
        if let (Some(x), Some(y)) = (a[i], b[i]) {
            dates.push(series.dates[i]);
            pts.push(vec![x, y]);
        }
    }
    if pts.is_empty() {
        return Err(ClusterError::EmptySeries);
    }
    let names = [dim_a.to_string(), dim_b.to_string()];
    let set = PointSet::new(pts, Some(dates.clone()), names.to_vec())?;
    let distinct = set.distinct_count();

    if distinct == 1 {
        let p = set.points()[0].clone();
        let n = set.len();
        return Ok(PairClustering {
            dim_names: names,
            dates,
            result: ClusterResult {
                k: 1,
                centroids: vec![vec![0.0, 0.0]],
                labels: vec![0; n],
                wcss: 0.0,
                scaling: Some(Scaling {
                    mean: p.clone(),
                    sd: vec![0.0, 0.0],
                }),
                wcss_trace: vec![0.0],
            },
            centroids_original: vec![p],
            wcss_curve: None,
        });
    }

    let (scaled, scaling) = zscore(&set)?;
    let (k, curve) = match opts.k {
        Some(k) => (k, None),
        None => {
            let k_max = opts.k_max.min(distinct);
            if k_max < 3 {
                (distinct, None)
            } else {
                let (k, curve) = elbow_select(&scaled, k_max, opts.restarts, opts.seed)?;
                (k, Some(curve))
            }
        }
    };
    let mut result = kmeans(&scaled, k, opts.restarts, opts.seed)?;
    let centroids_original = result.centroids.iter().map(|c| scaling.unscale(c)).collect();
    result.scaling = Some(scaling);
    Ok(PairClustering {
        dim_names: names,
        dates,
        result,
        centroids_original,
        wcss_curve: curve,
    })
}
