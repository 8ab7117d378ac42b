//! Gaussian kernel density estimates and resubstitution entropy.
//!
//! The kernel covariance is `h·Σ`, with `Σ` the (jittered) covariance of the
//! train points, and the density is the plain average of the N kernels so
//! that it integrates to one. Evaluation whitens with the Cholesky factor of
//! `Σ` and keeps the whitened train points sorted along their first
//! coordinate so that kernels too far away to matter are skipped.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

/// Upper bound on the relative density error from skipping far kernels.
const PRUNE_REL_ERROR: f64 = 1e-12;
/// Diagonal jitter, as a fraction of the mean variance.
const COVARIANCE_JITTER: f64 = 1e-9;
/// Number of values in the default bandwidth grid.
pub const DEFAULT_GRID_SIZE: usize = 12;
/// The default grid spans this factor on either side of Scott's factor squared.
const GRID_SPREAD: f64 = 4.0;
pub const DEFAULT_BOOTSTRAP_FOLDS: usize = 20;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("shape error: expected dimension {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file {path}: {message}")]
    Format { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, DensityError>;

/// Row-major set of d-dimensional points.
#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(DensityError::Parameter(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DensityError::Parameter("points must be finite".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, rows: &[usize]) -> Points {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Points { dim: self.dim, data }
    }
}

/// Unbiased covariance, row-major d×d.
pub fn covariance(points: &Points) -> Vec<f64> {
    let (n, d) = (points.len(), points.dim);
    let means: Vec<f64> = (0..d)
        .map(|j| stats::mean(&(0..n).map(|i| points.row(i)[j]).collect::<Vec<_>>()))
        .collect();
    let mut cov = vec![0.0; d * d];
    for a in 0..d {
        for b in a..d {
            let prods: Vec<f64> = (0..n)
                .map(|i| {
                    let r = points.row(i);
                    (r[a] - means[a]) * (r[b] - means[b])
                })
                .collect();
            let v = stats::pairwise_sum(&prods) / (n as f64 - 1.0);
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    cov
}

/// Gaussian KDE with kernel covariance `bandwidth·covariance`.
#[derive(Clone, Debug)]
pub struct KdeModel {
    dim: usize,
    bandwidth: f64,
    covariance: Vec<f64>,
    train: Points,
    /// Lower Cholesky factor of the jittered covariance, row-major.
    chol: Vec<f64>,
    log_det_cov: f64,
    /// Whitened train rows sorted by their first coordinate.
    whitened: Vec<f64>,
}

impl KdeModel {
    /// Builds a model with a fixed bandwidth. Needs at least two points.
    pub fn new(train: Points, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(DensityError::Parameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if train.len() < 2 {
            return Err(DensityError::Parameter("a KDE needs at least two train points".into()));
        }
        let cov = covariance(&train);
        Self::with_covariance(train, cov, bandwidth)
    }

    fn with_covariance(train: Points, covariance: Vec<f64>, bandwidth: f64) -> Result<Self> {
        let d = train.dim;
        let trace: f64 = (0..d).map(|i| covariance[i * d + i]).sum();
        if !(trace > 0.0 && trace.is_finite()) {
            return Err(DensityError::Degenerate("train covariance is zero".into()));
        }
        let mut jittered = DMatrix::from_row_slice(d, d, &covariance);
        let jitter = COVARIANCE_JITTER * trace / d as f64;
        for i in 0..d {
            jittered[(i, i)] += jitter;
        }
        let chol = jittered
            .cholesky()
            .ok_or_else(|| DensityError::Degenerate("covariance is not positive definite after jitter".into()))?;
        let l = chol.l();
        let log_det_cov = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let chol: Vec<f64> = (0..d * d).map(|k| l[(k / d, k % d)]).collect();
        let mut model = Self {
            dim: d,
            bandwidth,
            covariance,
            train,
            chol,
            log_det_cov,
            whitened: Vec::new(),
        };
        let mut rows: Vec<Vec<f64>> = (0..model.train.len())
            .map(|i| model.whiten(model.train.row(i)))
            .collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]).then_with(|| a.partial_cmp(b).expect("finite")));
        model.whitened = rows.concat();
        Ok(model)
    }

    /// Same train data and covariance, different bandwidth.
    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(DensityError::Parameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            bandwidth,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn train(&self) -> &Points {
        &self.train
    }

    fn n(&self) -> usize {
        self.train.len()
    }

    /// Solves `L z = x`.
    fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = x[i];
            for j in 0..i {
                s -= self.chol[i * d + j] * z[j];
            }
            z[i] = s / self.chol[i * d + i];
        }
        z
    }

    fn log_normalizer(&self) -> f64 {
        let d = self.dim as f64;
        -0.5 * d * (2.0 * std::f64::consts::PI * self.bandwidth).ln() - 0.5 * self.log_det_cov - (self.n() as f64).ln()
    }

    /// Log-sum-exp of `-‖z - z_i‖² / (2h)` over the train points.
    ///
    /// The nearest train points along the first coordinate give a lower
    /// bound `b` on the largest exponent. Any point whose first-coordinate
    /// gap alone gives an exponent below `b - T` is skipped, which bounds the
    /// relative error by `N·e^-T`; `T` is chosen so that this is below
    /// `PRUNE_REL_ERROR`.
    fn log_kernel_sum(&self, z: &[f64]) -> f64 {
        let d = self.dim;
        let n = self.n();
        let inv_h = 1.0 / self.bandwidth;
        let first = |i: usize| self.whitened[i * d];
        let exponent = |i: usize| {
            if d == 1 {
                let gap = self.whitened[i] - z[0];
                return -0.5 * (gap * gap) * inv_h;
            }
            let r = &self.whitened[i * d..(i + 1) * d];
            let d2: f64 = r.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            -0.5 * d2 * inv_h
        };
        let start = partition(n, |i| first(i) < z[0]);
        let mut bound = f64::NEG_INFINITY;
        for i in [start.wrapping_sub(1), start] {
            if i < n {
                bound = bound.max(exponent(i));
            }
        }
        let cutoff = self.prune_nats();
        let radius = (2.0 * self.bandwidth * (cutoff - bound)).sqrt();
        let lo = partition(n, |i| first(i) < z[0] - radius);
        let hi = partition(n, |i| first(i) <= z[0] + radius);
        let exponents: Vec<f64> = (lo..hi).map(exponent).collect();
        let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &e in &exponents {
            let v = e - max;
            if v > -cutoff {
                sum += v.exp();
            }
        }
        max + sum.ln()
    }

    fn prune_nats(&self) -> f64 {
        (self.n() as f64).ln() - PRUNE_REL_ERROR.ln()
    }

    /// Log density at `x`.
    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(DensityError::Shape {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.log_normalizer() + self.log_kernel_sum(&self.whiten(x)))
    }

    /// Log density at every row, in row order (computed in parallel).
    pub fn logpdf_many(&self, points: &Points) -> Result<Vec<f64>> {
        if points.dim != self.dim {
            return Err(DensityError::Shape {
                expected: self.dim,
                got: points.dim,
            });
        }
        let norm = self.log_normalizer();
        Ok((0..points.len())
            .into_par_iter()
            .map(|i| norm + self.log_kernel_sum(&self.whiten(points.row(i))))
            .collect())
    }
}

/// First index in `0..n` for which `pred` is false (`pred` must be monotone).
fn partition(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Order-independent mean: the values are sorted before pairwise summation.
fn canonical_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    stats::mean(&values)
}

/// Mean held-out log density for each bandwidth in `grid`.
pub fn bandwidth_scores(train: &Points, heldout: &Points, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(DensityError::Parameter("bandwidth grid is empty".into()));
    }
    if heldout.is_empty() {
        return Err(DensityError::Parameter("held-out set is empty".into()));
    }
    if train.len() < train.dim + 2 {
        return Err(DensityError::Parameter(format!(
            "need at least {} train points in dimension {}, got {}",
            train.dim + 2,
            train.dim,
            train.len()
        )));
    }
    let base = KdeModel::new(train.clone(), grid[0])?;
    grid.iter()
        .map(|&h| {
            let m = base.with_bandwidth(h)?;
            Ok(canonical_mean(m.logpdf_many(heldout)?))
        })
        .collect()
}

/// Index of the highest score; ties go to the smaller bandwidth.
pub fn best_bandwidth_index(grid: &[f64], scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..grid.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && grid[i] < grid[best]) {
            best = i;
        }
    }
    best
}

/// Fits a KDE on `train`, choosing the bandwidth in `grid` with the highest
/// mean log density on `heldout`. Ties go to the smaller bandwidth.
pub fn fit_kde(train: &Points, heldout: &Points, grid: &[f64]) -> Result<KdeModel> {
    let scores = bandwidth_scores(train, heldout, grid)?;
    let best = best_bandwidth_index(grid, &scores);
    if !scores[best].is_finite() {
        return Err(DensityError::Degenerate(
            "no bandwidth gives a finite held-out likelihood".into(),
        ));
    }
    KdeModel::new(train.clone(), grid[best])
}

/// Log-spaced bandwidths from `s/4` to `4s`, where `s` is the square of
/// Scott's factor `n^(-1/(d+4))`.
pub fn default_bandwidth_grid(n: usize, dim: usize) -> Vec<f64> {
    let scott_sq = (n.max(2) as f64).powf(-2.0 / (dim as f64 + 4.0));
    let (lo, hi) = ((scott_sq / GRID_SPREAD).ln(), (scott_sq * GRID_SPREAD).ln());
    (0..DEFAULT_GRID_SIZE)
        .map(|i| (lo + (hi - lo) * i as f64 / (DEFAULT_GRID_SIZE - 1) as f64).exp())
        .collect()
}

/// Resubstitution entropy: minus the mean log density over `eval`.
pub fn entropy_mc(model: &KdeModel, eval: &Points) -> Result<f64> {
    if eval.is_empty() {
        return Err(DensityError::Parameter("evaluation set is empty".into()));
    }
    let logp = model.logpdf_many(eval)?;
    Ok(-canonical_mean(logp))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value_nats: f64,
    pub std_nats: f64,
    pub n_eval: usize,
    pub n_folds: usize,
}

/// Entropy with a bootstrap spread: the eval set is resampled with
/// replacement `n_folds` times against the fixed model; the estimate is the
/// mean of the fold entropies and the spread their standard deviation.
pub fn entropy_bootstrap(model: &KdeModel, eval: &Points, n_folds: usize, seed: u64) -> Result<EntropyEstimate> {
    if n_folds < 2 {
        return Err(DensityError::Parameter(format!(
            "need at least 2 bootstrap folds, got {n_folds}"
        )));
    }
    if eval.len() < 10 * n_folds {
        return Err(DensityError::Parameter(format!(
            "need at least {} eval points for {n_folds} folds, got {}",
            10 * n_folds,
            eval.len()
        )));
    }
    let neg_logp: Vec<f64> = model.logpdf_many(eval)?.into_iter().map(|v| -v).collect();
    let summary = stats::bootstrap_means(&neg_logp, n_folds, seed);
    Ok(EntropyEstimate {
        value_nats: summary.mean,
        std_nats: summary.std,
        n_eval: eval.len(),
        n_folds,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    dim: usize,
    n: usize,
    bandwidth: f64,
    covariance: Vec<f64>,
}

/// Writes the JSON header line followed by the train points as
/// little-endian f64, row-major.
pub fn write_kde(model: &KdeModel, path: &Path) -> Result<()> {
    let io = |source| DensityError::Io {
        path: path.display().to_string(),
        source,
    };
    let header = ModelHeader {
        dim: model.dim,
        n: model.n(),
        bandwidth: model.bandwidth,
        covariance: model.covariance.clone(),
    };
    let mut buf = serde_json::to_vec(&header).expect("header serializes");
    buf.push(b'\n');
    buf.reserve(model.train.data.len() * 8);
    for v in &model.train.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}

pub fn read_kde(path: &Path) -> Result<KdeModel> {
    let io = |source| DensityError::Io {
        path: path.display().to_string(),
        source,
    };
    let bad = |message: String| DensityError::Format {
        path: path.display().to_string(),
        message,
    };
    let mut reader = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).map_err(io)?;
    let header: ModelHeader = serde_json::from_slice(&line).map_err(|e| bad(e.to_string()))?;
    if header.covariance.len() != header.dim * header.dim {
        return Err(bad("covariance has the wrong size".into()));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(io)?;
    if payload.len() != header.n * header.dim * 8 {
        return Err(bad(format!(
            "expected {} payload bytes, found {}",
            header.n * header.dim * 8,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let train = Points::new(header.dim, data)?;
    KdeModel::with_covariance(train, header.covariance, header.bandwidth)
}
