//! Scalar word features and z-scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DspError, Result};
use crate::corpus::{LexiconEntry, WordToken};
use crate::stats;

/// Added to |x| inside the log so silent spans stay finite.
pub const LOG_ENERGY_EPS: f64 = 1e-8;
/// How many preceding words the relative-prominence baseline averages.
pub const PROMINENCE_HISTORY: usize = 3;

/// Mean of `ln(|x| + ε)` over the samples in `[start_s, end_s)`.
pub fn mean_log_energy(filtered: &[f64], token: &WordToken, sample_rate_hz: u32) -> Result<f64> {
    let sr = sample_rate_hz as f64;
    let start = (token.start_s * sr).round();
    let end = (token.end_s * sr).round();
    if start < 0.0 || end as usize > filtered.len() || end <= start {
        return Err(DspError::Range(format!(
            "{} spans samples [{start}, {end}) but the signal has {}",
            token.id,
            filtered.len()
        )));
    }
    let logs: Vec<f64> = filtered[start as usize..end as usize]
        .iter()
        .map(|x| (x.abs() + LOG_ENERGY_EPS).ln())
        .collect();
    Ok(stats::mean(&logs))
}

pub fn duration_per_syllable(token: &WordToken, entry: &LexiconEntry) -> f64 {
    token.duration() / entry.syllable_count as f64
}

/// Silence between this word's offset and the next word's onset; 0 for the
/// last word.
pub fn pause_after(token: &WordToken, next: Option<&WordToken>) -> Result<f64> {
    match next {
        None => Ok(0.0),
        Some(n) if n.start_s < token.end_s => Err(DspError::Validation(format!(
            "{} starts at {} before {} ends at {}",
            n.id, n.start_s, token.id, token.end_s
        ))),
        Some(n) => Ok(n.start_s - token.end_s),
    }
}

/// Prominence minus the mean prominence of up to three preceding words of
/// the same utterance. The first word has no predecessors and gets 0.
pub fn relative_prominence(prominence: &[f64]) -> Vec<f64> {
    (0..prominence.len())
        .map(|i| {
            let from = i.saturating_sub(PROMINENCE_HISTORY);
            let prev = &prominence[from..i];
            if prev.is_empty() {
                0.0
            } else {
                prominence[i] - stats::mean(prev)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    /// Mean and population standard deviation of the train values.
    pub fn fit(name: &str, train: &[f64]) -> Result<Self> {
        if train.is_empty() {
            return Err(DspError::DegenerateColumn(name.to_string()));
        }
        let mean = stats::mean(train);
        let std = stats::population_std(train);
        if !(std > 0.0) {
            return Err(DspError::DegenerateColumn(name.to_string()));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// z-score statistics per column name, persisted next to the feature table.
pub type ZStats = BTreeMap<String, ColumnStats>;
