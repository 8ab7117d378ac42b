//! Estimating how much information word-level prosody shares with text.
//!
//! The crate is organised along the estimation pipeline:
//!
//! - [`corpus`]: aligned words, lexicon, splits, precomputed columns and
//!   embedding sets, joined into training rows.
//! - [`dsp`]: word-level prosodic features from audio (energy, duration,
//!   pause, stress-anchored f0 contours parameterised by a DCT, relative
//!   prominence) and z-scoring.
//! - [`density`]: Gaussian kernel density estimates of the unconditional
//!   feature distribution and Monte Carlo resubstitution entropy.
//! - [`predictor`]: MLP heads on frozen embeddings that output a predictive
//!   distribution, trained by NLL with early stopping and random search.
//! - [`infometrics`]: mutual information assembly, uncertainty coefficients,
//!   correlations and reports.
//! - [`baseline`]: an independent kernel-smoothing mixed-pair estimator and
//!   small closed-form oracles used for validation.
//! - [`pipeline`]: the unconditional and conditional entropy estimates
//!   behind one mutual information value.
//! - [`synth`]: deterministic synthetic corpora with planted dependencies.
//!
//! All entropies are in nats.

pub mod baseline;
pub mod corpus;
pub mod density;
pub mod dsp;
pub mod infometrics;
pub mod pipeline;
pub mod predictor;
pub mod stats;
pub mod synth;

pub use corpus::{ContextType, TokenId};
pub use density::{EntropyEstimate, KdeModel, Points};
pub use infometrics::MiResult;
pub use predictor::{MlpConfig, PredictiveFamily, TrainedHead};
