use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Phone, Result, TokenId, Utterance, WordToken};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignmentFormat {
    /// One JSON object per line.
    Json,
    /// Praat TextGrid (long text format), one file per utterance.
    TextGrid,
}

impl std::str::FromStr for AlignmentFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" | "jsonl" => Ok(Self::Json),
            "textgrid" => Ok(Self::TextGrid),
            other => Err(format!("unknown alignment format `{other}`")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WordRecord {
    text: String,
    start_s: f64,
    end_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    phones: Vec<Phone>,
}

#[derive(Serialize, Deserialize)]
struct UtteranceRecord {
    utterance_id: String,
    audio_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_rate_hz: Option<u32>,
    transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speaker_id: Option<String>,
    words: Vec<WordRecord>,
}

/// Loads alignments from a JSON-lines file or from TextGrid input (a single
/// file or a directory of `*.TextGrid` files, read in name order).
pub fn load_alignment(path: &Path, format: AlignmentFormat) -> Result<Vec<Utterance>> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        AlignmentFormat::Json => {
            let text = std::fs::read_to_string(path).map_err(io_err)?;
            parse_alignment_jsonl(&text, &path.display().to_string())
        }
        AlignmentFormat::TextGrid => {
            let mut files = Vec::new();
            if path.is_dir() {
                for entry in std::fs::read_dir(path).map_err(io_err)? {
                    let p = entry.map_err(io_err)?.path();
                    let is_tg = p
                        .extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| e.eq_ignore_ascii_case("textgrid"));
                    if is_tg {
                        files.push(p);
                    }
                }
                files.sort();
            } else {
                files.push(path.to_path_buf());
            }
            files
                .iter()
                .map(|f| {
                    let text = std::fs::read_to_string(f).map_err(|source| CorpusError::Io {
                        path: f.clone(),
                        source,
                    })?;
                    let stem = f
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("utterance")
                        .to_string();
                    parse_textgrid(&text, &stem, &f.display().to_string())
                })
                .collect()
        }
    }
}

pub fn parse_alignment_jsonl(text: &str, source_name: &str) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: source_name.to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let speaker = record
            .speaker_id
            .clone()
            .unwrap_or_else(|| default_speaker(&record.utterance_id));
        let words = record
            .words
            .into_iter()
            .map(|w| (w.text, w.start_s, w.end_s, w.phones))
            .collect();
        out.push(build_utterance(
            record.utterance_id,
            record.audio_path,
            record.transcript,
            record.sample_rate_hz,
            speaker,
            words,
        )?);
    }
    Ok(out)
}

/// LibriTTS-style ids start with the speaker id (`84_121123_000007_000001`).
fn default_speaker(utterance_id: &str) -> String {
    utterance_id.split('_').next().unwrap_or(utterance_id).to_string()
}

fn build_utterance(
    utterance_id: String,
    audio_path: String,
    transcript: String,
    sample_rate_hz: Option<u32>,
    speaker_id: String,
    mut words: Vec<(String, f64, f64, Vec<Phone>)>,
) -> Result<Utterance> {
    for (text, start, end, _) in &words {
        if !start.is_finite() || !end.is_finite() || *start < 0.0 {
            return Err(CorpusError::Validation(format!(
                "utterance {utterance_id}: word `{text}` has invalid times [{start}, {end}]"
            )));
        }
        if end <= start {
            return Err(CorpusError::Validation(format!(
                "utterance {utterance_id}: word `{text}` has end_s {end} <= start_s {start}"
            )));
        }
    }
    words.sort_by(|a, b| a.1.total_cmp(&b.1));
    for pair in words.windows(2) {
        if pair[1].1 < pair[0].2 {
            return Err(CorpusError::Validation(format!(
                "utterance {utterance_id}: overlapping words `{}` [{}, {}] and `{}` [{}, {}]",
                pair[0].0, pair[0].1, pair[0].2, pair[1].0, pair[1].1, pair[1].2
            )));
        }
    }
    let tokens = words
        .into_iter()
        .enumerate()
        .map(|(i, (text, start_s, end_s, phones))| WordToken {
            id: TokenId::new(utterance_id.clone(), i as u32),
            text,
            start_s,
            end_s,
            speaker_id: speaker_id.clone(),
            phones,
        })
        .collect();
    Ok(Utterance {
        utterance_id,
        audio_path,
        transcript,
        tokens,
        sample_rate_hz,
    })
}

/// Writes utterances in the JSON-lines interchange format.
pub fn write_alignment_jsonl<W: Write>(utterances: &[Utterance], mut out: W) -> std::io::Result<()> {
    for u in utterances {
        let speaker = u.tokens.first().map(|t| t.speaker_id.clone());
        let record = UtteranceRecord {
            utterance_id: u.utterance_id.clone(),
            audio_path: u.audio_path.clone(),
            sample_rate_hz: u.sample_rate_hz,
            transcript: u.transcript.clone(),
            speaker_id: speaker.filter(|s| *s != default_speaker(&u.utterance_id)),
            words: u
                .tokens
                .iter()
                .map(|t| WordRecord {
                    text: t.text.clone(),
                    start_s: t.start_s,
                    end_s: t.end_s,
                    phones: t.phones.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Default)]
struct Tier {
    class: String,
    name: String,
    intervals: Vec<(f64, f64, String)>,
}

const SILENCE_LABELS: [&str; 4] = ["", "sil", "sp", "<eps>"];

/// Parses a long-format TextGrid. Words come from the tier named `words`
/// (or the first interval tier); a `phones` tier, when present, is attached
/// to the words containing each phone's midpoint.
pub fn parse_textgrid(text: &str, utterance_id: &str, source_name: &str) -> Result<Utterance> {
    let parse_err = |line: usize, message: String| CorpusError::Parse {
        path: source_name.to_string(),
        line,
        message,
    };
    let mut tiers: Vec<Tier> = Vec::new();
    let mut in_interval = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with("item [") && line.ends_with("]:") && line != "item []:" {
            tiers.push(Tier::default());
            in_interval = false;
            continue;
        }
        if line.starts_with("intervals [") {
            let tier = tiers
                .last_mut()
                .ok_or_else(|| parse_err(lineno + 1, "interval outside of a tier".into()))?;
            tier.intervals.push((f64::NAN, f64::NAN, String::new()));
            in_interval = true;
            continue;
        }
        if line.starts_with("points [") {
            in_interval = false;
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let Some(tier) = tiers.last_mut() else {
            continue;
        };
        match key {
            "class" => tier.class = unquote(value),
            "name" => tier.name = unquote(value),
            "xmin" | "xmax" if in_interval => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| parse_err(lineno + 1, format!("field {key}: not a number: `{value}`")))?;
                let iv = tier.intervals.last_mut().expect("in_interval implies an interval");
                if key == "xmin" {
                    iv.0 = v;
                } else {
                    iv.1 = v;
                }
            }
            "text" if in_interval => {
                let iv = tier.intervals.last_mut().expect("in_interval implies an interval");
                iv.2 = unquote(value);
            }
            _ => {}
        }
    }
    let interval_tiers: Vec<&Tier> = tiers.iter().filter(|t| t.class == "IntervalTier").collect();
    let words_tier = interval_tiers
        .iter()
        .find(|t| t.name.eq_ignore_ascii_case("words"))
        .or_else(|| interval_tiers.first())
        .ok_or_else(|| parse_err(0, "no interval tier found".into()))?;
    let phones_tier = interval_tiers.iter().find(|t| t.name.eq_ignore_ascii_case("phones"));

    for (xmin, xmax, label) in &words_tier.intervals {
        if xmin.is_nan() || xmax.is_nan() {
            return Err(parse_err(0, format!("interval `{label}` lacks xmin/xmax")));
        }
    }
    let mut words: Vec<(String, f64, f64, Vec<Phone>)> = words_tier
        .intervals
        .iter()
        .filter(|(_, _, label)| !SILENCE_LABELS.contains(&label.trim().to_ascii_lowercase().as_str()))
        .map(|(s, e, label)| (label.trim().to_string(), *s, *e, Vec::new()))
        .collect();
    if let Some(phones) = phones_tier {
        for (s, e, label) in &phones.intervals {
            let label = label.trim();
            if SILENCE_LABELS.contains(&label.to_ascii_lowercase().as_str()) {
                continue;
            }
            let mid = 0.5 * (s + e);
            if let Some(w) = words.iter_mut().find(|w| w.1 <= mid && mid < w.2) {
                w.3.push(Phone {
                    text: label.to_string(),
                    start_s: *s,
                    end_s: *e,
                });
            }
        }
    }
    let transcript = words.iter().map(|w| w.0.as_str()).collect::<Vec<_>>().join(" ");
    build_utterance(
        utterance_id.to_string(),
        format!("{utterance_id}.wav"),
        transcript,
        None,
        default_speaker(utterance_id),
        words,
    )
}

fn unquote(value: &str) -> String {
    let v = value.trim();
    let inner = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
    inner.replace("\"\"", "\"")
}
