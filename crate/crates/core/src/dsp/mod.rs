//! Word-level prosodic features from audio and alignments.

pub mod audio;
pub mod contour;
pub mod features;
pub mod filter;
pub mod pitch;
pub mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Column, Lexicon, TokenId, Utterance};

pub use audio::{read_wav, write_wav_i16};
pub use contour::{dct_ii, dct_iii, dct_parameterize, stress_window, ContourSegment, F0Scale};
pub use features::{duration_per_syllable, mean_log_energy, pause_after, relative_prominence, ColumnStats, ZStats};
pub use filter::bandpass;
pub use pitch::{clean_f0, track_f0, F0Track, YinParams};
pub use table::{Feature, FeatureTable};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("no voiced frames remain after cleaning")]
    EmptyVoicing,
    #[error("degenerate column {0}: zero variance on the train split")]
    DegenerateColumn(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("missing value: {0}")]
    MissingValue(String),
    #[error("audio error in {path}: {message}")]
    Audio { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Per-word targets. `None` marks a feature that could not be computed for
/// this token (for example an utterance with no voiced frames).
#[derive(Clone, Debug, PartialEq)]
pub struct ProsodyRecord {
    pub token_id: TokenId,
    pub energy: Option<f64>,
    pub duration_per_syllable: Option<f64>,
    pub pause_after_s: Option<f64>,
    pub prominence: Option<f64>,
    pub prominence_relative: Option<f64>,
    pub f0_dct: Option<Vec<f64>>,
}

/// Extraction settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub yin: YinParams,
    pub dct_k: usize,
    pub f0_scale: F0Scale,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            bandpass_low_hz: filter::DEFAULT_LOW_HZ,
            bandpass_high_hz: filter::DEFAULT_HIGH_HZ,
            yin: YinParams::default(),
            dct_k: 8,
            f0_scale: F0Scale::Log2,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=contour::RESAMPLE_POINTS).contains(&self.dct_k) {
            return Err(DspError::Parameter(format!(
                "dct_k must be in 1..={}, got {}",
                contour::RESAMPLE_POINTS,
                self.dct_k
            )));
        }
        if !(self.bandpass_low_hz > 0.0 && self.bandpass_low_hz < self.bandpass_high_hz) {
            return Err(DspError::Parameter(format!(
                "bandpass edges must satisfy 0 < low ({}) < high ({})",
                self.bandpass_low_hz, self.bandpass_high_hz
            )));
        }
        self.yin.validate()
    }
}

/// Computes every audio-derived feature for one utterance. `prominence`,
/// when given, must cover all of the utterance's tokens.
pub fn extract_utterance(
    utterance: &Utterance,
    signal: &[f64],
    sample_rate_hz: u32,
    lexicon: &Lexicon,
    prominence: Option<&Column>,
    params: &FeatureParams,
) -> Result<Vec<ProsodyRecord>> {
    params.validate()?;
    let filtered = bandpass(signal, sample_rate_hz, params.bandpass_low_hz, params.bandpass_high_hz)?;
    let track = match track_f0(signal, sample_rate_hz, &params.yin) {
        Ok(raw) => match clean_f0(&raw) {
            Ok(t) => Some(t),
            Err(DspError::EmptyVoicing) => None,
            Err(e) => return Err(e),
        },
        Err(DspError::Parameter(_)) if signal.len() < (params.yin.frame_len_s * sample_rate_hz as f64) as usize + 1 => {
            None
        }
        Err(e) => return Err(e),
    };

    let prom_values: Option<Vec<f64>> = match prominence {
        None => None,
        Some(col) => Some(
            utterance
                .tokens
                .iter()
                .map(|t| {
                    col.get(&t.id)
                        .ok_or_else(|| DspError::MissingValue(format!("{} has no {} value", t.id, col.name)))
                })
                .collect::<Result<_>>()?,
        ),
    };
    let relative = prom_values.as_deref().map(relative_prominence);

    let mut records = Vec::with_capacity(utterance.tokens.len());
    for (i, token) in utterance.tokens.iter().enumerate() {
        let entry = lexicon.lookup_syllables(&token.text);
        let f0_dct = match &track {
            Some(tr) => match stress_window(tr, token, &entry) {
                Ok(seg) => Some(dct_parameterize(&seg, params.dct_k, params.f0_scale)?),
                Err(DspError::Range(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        records.push(ProsodyRecord {
            token_id: token.id.clone(),
            energy: Some(mean_log_energy(&filtered, token, sample_rate_hz)?),
            duration_per_syllable: Some(duration_per_syllable(token, &entry)),
            pause_after_s: Some(pause_after(token, utterance.tokens.get(i + 1))?),
            prominence: prom_values.as_ref().map(|p| p[i]),
            prominence_relative: relative.as_ref().map(|r| r[i]),
            f0_dct,
        });
    }
    Ok(records)
}
