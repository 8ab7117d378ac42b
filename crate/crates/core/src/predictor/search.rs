//! Random hyperparameter search over head configurations.

use std::fmt;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_head, MlpConfig, PredictiveFamily, PredictorError, Result, TrainedHead};
use crate::corpus::JoinedDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Log-uniform range.
    pub learning_rate: [f64; 2],
    /// Log-uniform range.
    pub l2_lambda: [f64; 2],
    pub dropout_p: Vec<f64>,
    pub n_layers: Vec<usize>,
    pub hidden_units: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: [1e-5, 1e-2],
            l2_lambda: [1e-8, 1e-2],
            dropout_p: vec![0.0, 0.1, 0.2, 0.3],
            n_layers: vec![1, 2, 3],
            hidden_units: vec![64, 128, 256, 512],
            batch_size: vec![128, 256, 512],
            max_epochs: 100,
            patience: 5,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PredictorError::Parameter(format!("search space: {m}")));
        for (name, [lo, hi]) in [("learning_rate", self.learning_rate), ("l2_lambda", self.l2_lambda)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(&format!("{name} range must satisfy 0 < lo <= hi"));
            }
        }
        if self.dropout_p.is_empty()
            || self.n_layers.is_empty()
            || self.hidden_units.is_empty()
            || self.batch_size.is_empty()
        {
            return bad("every choice list needs at least one value");
        }
        if self.n_layers.contains(&0) || self.hidden_units.contains(&0) || self.batch_size.contains(&0) {
            return bad("layer counts, widths and batch sizes must be positive");
        }
        for &p in &self.dropout_p {
            MlpConfig {
                dropout_p: p,
                max_epochs: self.max_epochs,
                patience: self.patience,
                ..Default::default()
            }
            .validate()?;
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng, seed: u64) -> MlpConfig {
        let log_uniform = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo.ln()..hi.ln()).exp()
            }
        };
        MlpConfig {
            learning_rate: log_uniform(rng, self.learning_rate),
            l2_lambda: log_uniform(rng, self.l2_lambda),
            dropout_p: *self.dropout_p.choose(rng).unwrap(),
            n_layers: *self.n_layers.choose(rng).unwrap(),
            hidden_units: *self.hidden_units.choose(rng).unwrap(),
            batch_size: *self.batch_size.choose(rng).unwrap(),
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrialStatus {
    Ok,
    Diverged,
    Failed(String),
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialStatus::Ok => f.write_str("ok"),
            TrialStatus::Diverged => f.write_str("diverged"),
            TrialStatus::Failed(m) => write!(f, "failed: {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: MlpConfig,
    pub val_xent_nats: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: TrainedHead,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

/// Trains `n_trials` heads with configurations drawn from `space` and keeps
/// the one with the lowest validation cross-entropy (lowest index on ties).
/// Every trial uses `seed` for its own initialisation and shuffling, so the
/// outcome does not depend on how trials are scheduled.
pub fn random_search(
    train: &JoinedDataset,
    val: &JoinedDataset,
    family: PredictiveFamily,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    space.validate()?;
    if n_trials == 0 {
        return Err(PredictorError::Parameter("n_trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<MlpConfig> = (0..n_trials).map(|_| space.sample(&mut rng, seed)).collect();
    let results: Vec<Result<TrainedHead>> = configs
        .par_iter()
        .map(|cfg| train_head(train, val, cfg, family))
        .collect();

    let mut trials = Vec::with_capacity(n_trials);
    let mut best: Option<(usize, TrainedHead)> = None;
    for (i, (cfg, res)) in configs.into_iter().zip(results).enumerate() {
        let (val_xent, status) = match res {
            Ok(head) => {
                let v = head.val_xent_nats;
                if best.as_ref().is_none_or(|(_, b)| v < b.val_xent_nats) {
                    best = Some((i, head));
                }
                (Some(v), TrialStatus::Ok)
            }
            Err(PredictorError::TrainingDiverged { .. }) => (None, TrialStatus::Diverged),
            Err(e) => (None, TrialStatus::Failed(e.to_string())),
        };
        trials.push(TrialRecord {
            trial: i,
            config: cfg,
            val_xent_nats: val_xent,
            status,
        });
    }
    match best {
        Some((best_trial, best)) => Ok(SearchOutcome {
            best,
            best_trial,
            trials,
        }),
        None => {
            let mut log = Vec::new();
            write_trial_log(&mut log, &trials).expect("writing to a Vec cannot fail");
            Err(PredictorError::SearchFailed {
                n_trials,
                log: String::from_utf8_lossy(&log).into_owned(),
            })
        }
    }
}

/// Writes one CSV row per trial.
pub fn write_trial_log<W: Write>(out: W, trials: &[TrialRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trial",
        "lr",
        "l2",
        "dropout",
        "layers",
        "hidden",
        "batch",
        "val_xent_nats",
        "status",
    ])?;
    for t in trials {
        let c = &t.config;
        w.write_record([
            t.trial.to_string(),
            c.learning_rate.to_string(),
            c.l2_lambda.to_string(),
            c.dropout_p.to_string(),
            c.n_layers.to_string(),
            c.hidden_units.to_string(),
            c.batch_size.to_string(),
            t.val_xent_nats.map(|v| v.to_string()).unwrap_or_default(),
            t.status.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenId;

    fn toy(n: usize, offset: u32) -> JoinedDataset {
        let ids = (0..n as u32).map(|i| TokenId::new("u", i + offset)).collect();
        let inputs: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.61).sin()).collect();
        let targets: Vec<f64> = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| 2.0 * x + 0.1 * ((i as f64) * 1.7).cos())
            .collect();
        JoinedDataset::from_parts(ids, 1, inputs, 1, targets)
    }

    fn small_space() -> SearchSpace {
        SearchSpace {
            hidden_units: vec![8, 16],
            n_layers: vec![1],
            batch_size: vec![32],
            max_epochs: 5,
            learning_rate: [1e-3, 1e-2],
            ..Default::default()
        }
    }

    #[test]
    fn picks_argmin_and_is_reproducible() {
        let (train, val) = (toy(200, 0), toy(80, 1000));
        let a = random_search(&train, &val, PredictiveFamily::GaussianScalar, &small_space(), 4, 7).unwrap();
        let b = random_search(&train, &val, PredictiveFamily::GaussianScalar, &small_space(), 4, 7).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.trials, b.trials);
        let min = a
            .trials
            .iter()
            .filter_map(|t| t.val_xent_nats)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.best.val_xent_nats, min);
        assert_eq!(a.trials[a.best_trial].val_xent_nats, Some(min));
    }

    #[test]
    fn all_failures_are_reported() {
        let train = toy(50, 0);
        let neg = JoinedDataset::from_parts(vec![TokenId::new("u", 0)], 1, vec![0.0], 1, vec![-1.0]);
        let err = random_search(&train, &neg, PredictiveFamily::GammaScalar, &small_space(), 2, 0).unwrap_err();
        match err {
            PredictorError::SearchFailed { n_trials, log } => {
                assert_eq!(n_trials, 2);
                assert_eq!(log.lines().count(), 3);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn trial_log_columns() {
        let rec = TrialRecord {
            trial: 0,
            config: MlpConfig::default(),
            val_xent_nats: None,
            status: TrialStatus::Diverged,
        };
        let mut buf = Vec::new();
        write_trial_log(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial,lr,l2,dropout,layers,hidden,batch,val_xent_nats,status\n"));
        assert!(text.contains(",,diverged"));
    }

    #[test]
    fn space_validation() {
        assert!(SearchSpace::default().validate().is_ok());
        assert!(SearchSpace {
            dropout_p: vec![],
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SearchSpace {
            learning_rate: [1e-2, 1e-5],
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SearchSpace {
            dropout_p: vec![1.0],
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
