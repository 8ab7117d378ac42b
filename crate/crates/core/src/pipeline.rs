//! The two entropy estimates behind one mutual information value: a KDE
//! of the feature on its own and the best head found by random search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::JoinedDataset;
use crate::density::{self, default_bandwidth_grid, fit_kde, DensityError, EntropyEstimate, KdeModel, Points};
use crate::predictor::{
    self, conditional_xent_bootstrap, random_search, PredictiveFamily, PredictorError, SearchSpace,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("density stage: {0}")]
    Density(#[from] DensityError),
    #[error("predictor stage: {0}")]
    Predictor(#[from] PredictorError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateParams {
    /// Explicit bandwidth grid; the default grid is scaled to the train size.
    pub bandwidth_grid: Option<Vec<f64>>,
    pub n_folds: usize,
    pub search: SearchSpace,
    pub n_trials: usize,
    pub seed: u64,
}

impl Default for EstimateParams {
    fn default() -> Self {
        Self {
            bandwidth_grid: None,
            n_folds: density::DEFAULT_BOOTSTRAP_FOLDS,
            search: SearchSpace::default(),
            n_trials: 50,
            seed: 0,
        }
    }
}

pub struct EstimateOutput {
    pub kde: KdeModel,
    pub h: EntropyEstimate,
    pub search: predictor::SearchOutcome,
    pub h_cond: EntropyEstimate,
}

fn targets_as_points(data: &JoinedDataset) -> Result<Points> {
    Ok(Points::new(data.target_dim, data.targets().to_vec())?)
}

/// Unconditional entropy of the targets: KDE fit on `train`, bandwidth
/// chosen on `dev`, bootstrap over `test`.
pub fn unconditional_entropy(
    train: &JoinedDataset,
    dev: &JoinedDataset,
    test: &JoinedDataset,
    params: &EstimateParams,
) -> Result<(KdeModel, EntropyEstimate)> {
    let train_pts = targets_as_points(train)?;
    let grid = params
        .bandwidth_grid
        .clone()
        .unwrap_or_else(|| default_bandwidth_grid(train_pts.len(), train_pts.dim()));
    let kde = fit_kde(&train_pts, &targets_as_points(dev)?, &grid)?;
    let h = density::entropy_bootstrap(&kde, &targets_as_points(test)?, params.n_folds, params.seed)?;
    Ok((kde, h))
}

/// Conditional cross-entropy of the best head on `test`, searched on
/// `train` and selected on `dev`.
pub fn conditional_entropy(
    train: &JoinedDataset,
    dev: &JoinedDataset,
    test: &JoinedDataset,
    family: PredictiveFamily,
    params: &EstimateParams,
) -> Result<(predictor::SearchOutcome, EntropyEstimate)> {
    let outcome = random_search(train, dev, family, &params.search, params.n_trials, params.seed)?;
    let h_cond = conditional_xent_bootstrap(&outcome.best, test, params.n_folds, params.seed.wrapping_add(1))?;
    Ok((outcome, h_cond))
}

pub fn estimate(
    train: &JoinedDataset,
    dev: &JoinedDataset,
    test: &JoinedDataset,
    family: PredictiveFamily,
    params: &EstimateParams,
) -> Result<EstimateOutput> {
    let (kde, h) = unconditional_entropy(train, dev, test, params)?;
    let (search, h_cond) = conditional_entropy(train, dev, test, family, params)?;
    Ok(EstimateOutput { kde, h, search, h_cond })
}
