//! MLP heads on frozen embeddings that output a predictive distribution
//! over a prosodic feature, and the conditional cross-entropy they give on
//! held-out data.

mod family;
mod mlp;
mod persist;
mod search;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::corpus::{ContextType, JoinedDataset};
use crate::density::EntropyEstimate;
use crate::stats;

pub use family::{gaussian_entropy, PredictiveFamily, POSITIVE_FLOOR};
pub use mlp::{train_head, Layer};
pub use persist::{read_head, write_head};
pub use search::{random_search, write_trial_log, SearchOutcome, SearchSpace, TrialRecord, TrialStatus};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("shape error: {what} has dimension {got}, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("target {value} outside the family's support{}", if row.is_empty() { String::new() } else { format!(" at {row}") })]
    Support { row: String, value: f64 },
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("all {n_trials} search trials failed:\n{log}")]
    SearchFailed { n_trials: usize, log: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed head file {path}: {message}")]
    Format { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, PredictorError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Number of hidden layers.
    pub n_layers: usize,
    pub hidden_units: usize,
    pub dropout_p: f64,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            n_layers: 1,
            hidden_units: 64,
            dropout_p: 0.0,
            l2_lambda: 0.0,
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 100,
            patience: 5,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PredictorError::Parameter(m));
        if self.n_layers < 1 || self.hidden_units < 1 {
            return bad(format!(
                "need at least one hidden layer and unit, got {} x {}",
                self.n_layers, self.hidden_units
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout_p));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad(format!("l2 must be non-negative, got {}", self.l2_lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 1 || self.max_epochs < 1 || self.patience < 1 {
            return bad("batch size, max epochs and patience must be at least 1".into());
        }
        Ok(())
    }
}

/// Affine map between feature units and the standardized units the network
/// is trained in. Gaussian families use `(y - offset) / scale`; the Gamma
/// family uses `y / scale` so that support is preserved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl TargetScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Fits the map on train targets (row-major, `dim` per row).
    pub fn fit(family: PredictiveFamily, targets: &[f64], dim: usize) -> Self {
        let n = targets.len() / dim;
        let column = |j: usize| (0..n).map(|i| targets[i * dim + j]).collect::<Vec<_>>();
        let mut out = Self::identity(dim);
        for j in 0..dim {
            let col = column(j);
            match family {
                PredictiveFamily::GammaScalar => {
                    let m = stats::mean(&col);
                    if m > 0.0 && m.is_finite() {
                        out.scale[j] = m;
                    }
                }
                _ => {
                    out.offset[j] = stats::mean(&col);
                    let s = stats::population_std(&col);
                    if s > 0.0 && s.is_finite() {
                        out.scale[j] = s;
                    }
                }
            }
        }
        out
    }

    pub fn to_standard(&self, target: &[f64]) -> Vec<f64> {
        target
            .iter()
            .enumerate()
            .map(|(j, y)| (y - self.offset[j]) / self.scale[j])
            .collect()
    }

    /// Converts standardized-unit parameters to feature units.
    pub fn params_to_original(&self, family: PredictiveFamily, p: &[f64]) -> Vec<f64> {
        match family {
            PredictiveFamily::GammaScalar => vec![p[0], p[1] / self.scale[0]],
            _ => {
                let k = family.target_dim();
                let mut out = Vec::with_capacity(2 * k);
                out.extend((0..k).map(|j| self.offset[j] + self.scale[j] * p[j]));
                out.extend((0..k).map(|j| self.scale[j] * p[k + j]));
                out
            }
        }
    }
}

/// A trained (or freshly initialised) MLP head.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedHead {
    pub config: MlpConfig,
    pub family: PredictiveFamily,
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub scaling: TargetScaling,
    /// Best validation cross-entropy, in feature units.
    pub val_xent_nats: f64,
    /// Validation cross-entropy after every epoch that was run.
    pub val_history: Vec<f64>,
    pub context_type: Option<ContextType>,
    /// Path of the z-score statistics the targets were scaled with, if any.
    pub zscore_ref: Option<String>,
}

impl TrainedHead {
    /// Distribution parameters in feature units; dropout is off.
    pub fn forward(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.input_dim {
            return Err(PredictorError::Shape {
                what: "embedding",
                expected: self.input_dim,
                got: embedding.len(),
            });
        }
        let raw = mlp::infer(&self.layers, embedding);
        let std_params = self.family.params_from_raw(&raw);
        Ok(self.scaling.params_to_original(self.family, &std_params))
    }

    /// Epoch (1-based) whose weights were kept.
    pub fn best_epoch(&self) -> Option<usize> {
        let best = self.val_history.iter().copied().fold(f64::INFINITY, f64::min);
        self.val_history.iter().position(|&v| v == best).map(|i| i + 1)
    }
}

fn check_dataset(head_dim: usize, family: PredictiveFamily, data: &JoinedDataset) -> Result<()> {
    if data.input_dim != head_dim {
        return Err(PredictorError::Shape {
            what: "embedding",
            expected: head_dim,
            got: data.input_dim,
        });
    }
    if data.target_dim != family.target_dim() {
        return Err(PredictorError::Shape {
            what: "target",
            expected: family.target_dim(),
            got: data.target_dim,
        });
    }
    Ok(())
}

/// Per-row negative log likelihood of the targets under the head.
pub fn row_nll(head: &TrainedHead, data: &JoinedDataset) -> Result<Vec<f64>> {
    check_dataset(head.input_dim, head.family, data)?;
    (0..data.len())
        .map(|i| {
            let params = head.forward(data.input(i))?;
            head.family.nll(&params, data.target(i)).map_err(|e| match e {
                PredictorError::Support { value, .. } => PredictorError::Support {
                    row: data.token_ids[i].to_string(),
                    value,
                },
                other => other,
            })
        })
        .collect()
}

/// Mean negative log likelihood over the rows, in nats.
pub fn conditional_xent(head: &TrainedHead, data: &JoinedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(PredictorError::Parameter("evaluation set is empty".into()));
    }
    Ok(stats::mean(&row_nll(head, data)?))
}

/// Conditional cross-entropy with a bootstrap spread over rows, reported
/// the same way as the unconditional entropy.
pub fn conditional_xent_bootstrap(
    head: &TrainedHead,
    data: &JoinedDataset,
    n_folds: usize,
    seed: u64,
) -> Result<EntropyEstimate> {
    if n_folds < 2 || data.len() < 10 * n_folds {
        return Err(PredictorError::Parameter(format!(
            "need n_folds >= 2 and at least {} rows, got {n_folds} folds and {} rows",
            10 * n_folds,
            data.len()
        )));
    }
    let summary = stats::bootstrap_means(&row_nll(head, data)?, n_folds, seed);
    Ok(EntropyEstimate {
        value_nats: summary.mean,
        std_nats: summary.std,
        n_eval: data.len(),
        n_folds,
    })
}

/// Maximum-likelihood parameters of a single distribution for all rows
/// (the best predictor that ignores the embedding).
pub fn constant_fit(family: PredictiveFamily, targets: &[f64]) -> Result<Vec<f64>> {
    let k = family.target_dim();
    if targets.is_empty() || targets.len() % k != 0 {
        return Err(PredictorError::Parameter("no targets to fit".into()));
    }
    let n = targets.len() / k;
    let column = |j: usize| (0..n).map(|i| targets[i * k + j]).collect::<Vec<_>>();
    match family {
        PredictiveFamily::GammaScalar => {
            let x = column(0);
            if x.iter().any(|&v| !(v > 0.0)) {
                return Err(PredictorError::Support {
                    row: String::new(),
                    value: x.iter().copied().fold(f64::INFINITY, f64::min),
                });
            }
            let m = stats::mean(&x);
            let mean_log = stats::mean(&x.iter().map(|v| v.ln()).collect::<Vec<_>>());
            let s = m.ln() - mean_log;
            if !(s > 0.0) {
                return Err(PredictorError::Parameter("constant targets have no Gamma fit".into()));
            }
            // Newton on ln α − ψ(α) = s, started from the usual closed-form guess
            let mut a = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
            for _ in 0..100 {
                let f = a.ln() - digamma(a) - s;
                let df = 1.0 / a - trigamma(a);
                let next = (a - f / df).max(a / 10.0);
                if (next - a).abs() <= 1e-14 * a {
                    a = next;
                    break;
                }
                a = next;
            }
            Ok(vec![a, a / m])
        }
        _ => {
            let mut p = Vec::with_capacity(2 * k);
            p.extend((0..k).map(|j| stats::mean(&column(j))));
            for j in 0..k {
                let s = stats::population_std(&column(j));
                if !(s > 0.0) {
                    return Err(PredictorError::Parameter(format!("target column {j} is constant")));
                }
                p.push(s);
            }
            Ok(p)
        }
    }
}

fn trigamma(x: f64) -> f64 {
    // recurrence up to x ≥ 10, then the asymptotic series
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0))) / (x * x * x)
}

/// Mean NLL of the rows under the constant maximum-likelihood fit.
pub fn constant_xent(family: PredictiveFamily, targets: &[f64]) -> Result<f64> {
    let params = constant_fit(family, targets)?;
    let k = family.target_dim();
    let values = targets
        .chunks(k)
        .map(|t| family.nll(&params, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(stats::mean(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenId;
    use approx::assert_relative_eq;

    fn dataset(inputs: Vec<f64>, d: usize, targets: Vec<f64>, k: usize) -> JoinedDataset {
        let n = targets.len() / k;
        let ids = (0..n as u32).map(|i| TokenId::new("u", i)).collect();
        JoinedDataset::from_parts(ids, d, inputs, k, targets)
    }

    fn zero_head(family: PredictiveFamily, d: usize) -> TrainedHead {
        let mut layers = mlp::init_layers(d, &MlpConfig::default(), family.n_params(), 1);
        for l in &mut layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        TrainedHead {
            config: MlpConfig::default(),
            family,
            input_dim: d,
            layers,
            scaling: TargetScaling::identity(family.target_dim()),
            val_xent_nats: f64::NAN,
            val_history: vec![],
            context_type: None,
            zscore_ref: None,
        }
    }

    #[test]
    fn zero_output_layer_forward() {
        let head = zero_head(PredictiveFamily::GaussianScalar, 3);
        let p = head.forward(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(p[0], 0.0);
        assert_relative_eq!(p[1], std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(head.forward(&[0.0; 4]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut head = zero_head(PredictiveFamily::GaussianScalar, 3);
        head.layers = mlp::init_layers(3, &MlpConfig::default(), 2, 9);
        let x = [0.1, 0.2, 0.3];
        assert_eq!(head.forward(&x).unwrap(), head.forward(&x).unwrap());
    }

    #[test]
    fn single_row_xent_is_its_nll() {
        let head = zero_head(PredictiveFamily::GaussianScalar, 1);
        let data = dataset(vec![0.0], 1, vec![0.5], 1);
        let params = head.forward(&[0.0]).unwrap();
        let expected = PredictiveFamily::GaussianScalar.nll(&params, &[0.5]).unwrap();
        assert_eq!(conditional_xent(&head, &data).unwrap(), expected);
    }

    #[test]
    fn support_error_names_row() {
        let head = zero_head(PredictiveFamily::GammaScalar, 1);
        let data = dataset(vec![0.0, 0.0], 1, vec![1.0, 0.0], 1);
        let err = conditional_xent(&head, &data).unwrap_err().to_string();
        assert!(err.contains("u#1"), "{err}");
    }

    #[test]
    fn diffuse_head_is_worse_than_constant_fit() {
        let mut head = zero_head(PredictiveFamily::GaussianScalar, 1);
        // large raw σ output through the bias
        head.layers.last_mut().unwrap().biases[1] = 50.0;
        let targets: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let data = dataset(vec![0.0; 200], 1, targets.clone(), 1);
        let xent = conditional_xent(&head, &data).unwrap();
        assert!(xent > constant_xent(PredictiveFamily::GaussianScalar, &targets).unwrap() + 1.0);
    }

    #[test]
    fn scaling_round_trip() {
        let s = TargetScaling {
            offset: vec![2.0],
            scale: vec![4.0],
        };
        let fam = PredictiveFamily::GaussianScalar;
        let y = 3.0;
        let std_nll = fam.nll(&[0.1, 0.5], &s.to_standard(&[y])).unwrap();
        let orig = fam.nll(&s.params_to_original(fam, &[0.1, 0.5]), &[y]).unwrap();
        assert_relative_eq!(orig, std_nll + 4.0f64.ln(), epsilon = 1e-12);
        let g = TargetScaling {
            offset: vec![0.0],
            scale: vec![4.0],
        };
        let fam = PredictiveFamily::GammaScalar;
        let std_nll = fam.nll(&[2.0, 3.0], &g.to_standard(&[y])).unwrap();
        let orig = fam.nll(&g.params_to_original(fam, &[2.0, 3.0]), &[y]).unwrap();
        assert_relative_eq!(orig, std_nll + 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn constant_gamma_fit_is_stationary() {
        let x: Vec<f64> = (1..400).map(|i| 0.05 + (i as f64 * 0.173).sin().abs()).collect();
        let p = constant_fit(PredictiveFamily::GammaScalar, &x).unwrap();
        let grads: Vec<Vec<f64>> = x
            .iter()
            .map(|&v| PredictiveFamily::GammaScalar.nll_grad(&p, &[v]).unwrap().1)
            .collect();
        for j in 0..2 {
            let g = stats::mean(&grads.iter().map(|g| g[j]).collect::<Vec<_>>());
            assert!(g.abs() < 1e-9, "gradient {j} = {g}");
        }
    }

    #[test]
    fn trigamma_values() {
        // ψ'(1) = π²/6, ψ'(0.5) = π²/2
        let pi2 = std::f64::consts::PI.powi(2);
        assert_relative_eq!(trigamma(1.0), pi2 / 6.0, epsilon = 1e-10);
        assert_relative_eq!(trigamma(0.5), pi2 / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn config_validation() {
        assert!(MlpConfig::default().validate().is_ok());
        for bad in [
            MlpConfig {
                n_layers: 0,
                ..Default::default()
            },
            MlpConfig {
                dropout_p: 1.0,
                ..Default::default()
            },
            MlpConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            MlpConfig {
                patience: 0,
                ..Default::default()
            },
            MlpConfig {
                l2_lambda: -1.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
