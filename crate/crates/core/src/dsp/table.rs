//! The per-token feature table, its CSV form and z-scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::{ColumnStats, ZStats};
use super::{DspError, ProsodyRecord, Result};
use crate::corpus::{TargetTable, TokenId};

/// A prediction target drawn from the feature table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Energy,
    DurationPerSyllable,
    PauseAfter,
    Prominence,
    ProminenceRelative,
    F0Dct,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Energy,
        Feature::DurationPerSyllable,
        Feature::PauseAfter,
        Feature::Prominence,
        Feature::ProminenceRelative,
        Feature::F0Dct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Energy => "energy",
            Feature::DurationPerSyllable => "duration_per_syllable",
            Feature::PauseAfter => "pause_after_s",
            Feature::Prominence => "prominence",
            Feature::ProminenceRelative => "prominence_relative",
            Feature::F0Dct => "f0_dct",
        }
    }

    /// Scalar columns z-scored by default. Pause and absolute prominence
    /// stay on their natural positive scale for Gamma heads.
    pub fn zscored_by_default(self) -> bool {
        matches!(
            self,
            Feature::Energy | Feature::DurationPerSyllable | Feature::ProminenceRelative
        )
    }

    pub fn is_vector(self) -> bool {
        self == Feature::F0Dct
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "energy" => Feature::Energy,
            "duration" | "duration_per_syllable" => Feature::DurationPerSyllable,
            "pause" | "pause_after" | "pause_after_s" => Feature::PauseAfter,
            "prominence" => Feature::Prominence,
            "prominence_relative" | "relative_prominence" => Feature::ProminenceRelative,
            "f0" | "f0_dct" => Feature::F0Dct,
            other => return Err(format!(
                "unknown feature `{other}` (expected energy, duration, pause, prominence, prominence_relative or f0)"
            )),
        })
    }
}

/// All extracted records, ordered by token id.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub dct_k: usize,
    pub records: Vec<ProsodyRecord>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl FeatureTable {
    pub fn new(dct_k: usize, mut records: Vec<ProsodyRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.token_id.cmp(&b.token_id));
        if let Some(w) = records.windows(2).find(|w| w[0].token_id == w[1].token_id) {
            return Err(DspError::Validation(format!("duplicate record for {}", w[0].token_id)));
        }
        if let Some(r) = records
            .iter()
            .find(|r| r.f0_dct.as_ref().is_some_and(|v| v.len() != dct_k))
        {
            return Err(DspError::Validation(format!(
                "{} has a DCT vector of the wrong length",
                r.token_id
            )));
        }
        Ok(Self { dct_k, records })
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "utterance_id",
            "index_in_utterance",
            "energy",
            "duration_per_syllable",
            "pause_after_s",
            "prominence",
            "prominence_relative",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend((0..self.dct_k).map(|i| format!("f0_dct_{i}")));
        h
    }

    /// Writes the CSV; `comment`, if given, becomes a leading `# ` line.
    /// Missing values are empty fields.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.records {
            let mut row = vec![
                r.token_id.utterance_id.clone(),
                r.token_id.index.to_string(),
                fmt_opt(r.energy),
                fmt_opt(r.duration_per_syllable),
                fmt_opt(r.pause_after_s),
                fmt_opt(r.prominence),
                fmt_opt(r.prominence_relative),
            ];
            match &r.f0_dct {
                Some(v) => row.extend(v.iter().map(|x| x.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), self.dct_k)),
            }
            w.write_record(&row)?;
        }
        w.flush()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| DspError::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| perr(0, e.to_string()))?;
        let headers = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
        if headers.len() < 7 {
            return Err(perr(1, "feature table header has too few columns".into()));
        }
        let dct_k = headers.len() - 7;
        let expected = FeatureTable { dct_k, records: vec![] }.header();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(perr(1, format!("expected header {}", expected.join(","))));
        }
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| perr(0, e.to_string()))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let num = |i: usize| -> Result<Option<f64>> {
                let f = rec[i].trim();
                if f.is_empty() {
                    return Ok(None);
                }
                f.parse::<f64>()
                    .map(Some)
                    .map_err(|_| perr(line, format!("column {} is not numeric: `{f}`", &headers[i])))
            };
            let index: u32 = rec[1]
                .trim()
                .parse()
                .map_err(|_| perr(line, "index_in_utterance is not an integer".into()))?;
            let dct: Vec<Option<f64>> = (7..7 + dct_k).map(num).collect::<Result<_>>()?;
            let f0_dct = if dct.iter().all(Option::is_none) {
                None
            } else if dct.iter().all(Option::is_some) {
                Some(dct.into_iter().flatten().collect())
            } else {
                return Err(perr(line, "partially missing DCT vector".into()));
            };
            records.push(ProsodyRecord {
                token_id: TokenId::new(rec[0].to_string(), index),
                energy: num(2)?,
                duration_per_syllable: num(3)?,
                pause_after_s: num(4)?,
                prominence: num(5)?,
                prominence_relative: num(6)?,
                f0_dct,
            });
        }
        Self::new(dct_k, records)
    }

    fn scalar_mut(record: &mut ProsodyRecord, feature: Feature) -> Option<&mut Option<f64>> {
        match feature {
            Feature::Energy => Some(&mut record.energy),
            Feature::DurationPerSyllable => Some(&mut record.duration_per_syllable),
            Feature::PauseAfter => Some(&mut record.pause_after_s),
            Feature::Prominence => Some(&mut record.prominence),
            Feature::ProminenceRelative => Some(&mut record.prominence_relative),
            Feature::F0Dct => None,
        }
    }

    fn scalar(record: &ProsodyRecord, feature: Feature) -> Option<f64> {
        match feature {
            Feature::Energy => record.energy,
            Feature::DurationPerSyllable => record.duration_per_syllable,
            Feature::PauseAfter => record.pause_after_s,
            Feature::Prominence => record.prominence,
            Feature::ProminenceRelative => record.prominence_relative,
            Feature::F0Dct => None,
        }
    }

    /// Fits mean and std on the train tokens of each listed scalar column
    /// and rescales that column for every token. Columns with no values at
    /// all are skipped.
    pub fn zscore(&mut self, train: &BTreeSet<TokenId>, columns: &[Feature]) -> Result<ZStats> {
        let mut out = ZStats::new();
        for &feature in columns {
            if feature.is_vector() {
                return Err(DspError::Parameter("the DCT vector is not z-scored".into()));
            }
            if self.records.iter().all(|r| Self::scalar(r, feature).is_none()) {
                continue;
            }
            let train_values: Vec<f64> = self
                .records
                .iter()
                .filter(|r| train.contains(&r.token_id))
                .filter_map(|r| Self::scalar(r, feature))
                .collect();
            let stats = ColumnStats::fit(feature.as_str(), &train_values)?;
            for r in &mut self.records {
                if let Some(Some(v)) = Self::scalar_mut(r, feature) {
                    *v = stats.apply(*v);
                }
            }
            out.insert(feature.as_str().to_string(), stats);
        }
        Ok(out)
    }

    /// Targets for one feature, over the tokens that have a value. `shift`
    /// is added to scalar values.
    pub fn targets(&self, feature: Feature, shift: f64) -> TargetTable {
        let mut values = BTreeMap::new();
        for r in &self.records {
            let v = match feature {
                Feature::F0Dct => r.f0_dct.clone(),
                f => Self::scalar(r, f).map(|x| vec![x + shift]),
            };
            if let Some(v) = v {
                values.insert(r.token_id.clone(), v);
            }
        }
        TargetTable {
            dim: if feature.is_vector() { self.dct_k } else { 1 },
            values,
        }
    }
}

pub fn write_zstats<W: Write>(stats: &ZStats, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, stats)?;
    writeln!(out)
}

pub fn read_zstats(path: &Path) -> Result<ZStats> {
    let text = std::fs::read_to_string(path).map_err(|source| DspError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| DspError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}
