//! Deterministic synthetic data with planted dependencies: a small
//! sawtooth "speech" corpus with every side file the pipeline reads, a
//! token stream whose targets depend on neighbouring words, and a linear
//! Gaussian generator for head training.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::corpus::{
    write_alignment_jsonl, write_column, write_embedding_set, write_split_assignment, Column, ContextType, CorpusError,
    EmbeddingSet, JoinedDataset, SplitAssignment, SplitName, TokenId, Utterance, WordToken,
};
use crate::dsp::{write_wav_i16, DspError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Rows `x ~ N(0, I_d)` with targets `y = x_0 + sigma·ε`. The conditional
/// entropy of `y` given `x` is that of `N(0, sigma²)`.
pub fn planted_linear_gaussian(n: usize, dim: usize, sigma: f64, seed: u64) -> JoinedDataset {
    assert!(dim >= 1, "need at least one input dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n * dim);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let start = inputs.len();
        inputs.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let noise = rng.sample::<f64, _>(StandardNormal);
        targets.push(inputs[start] + sigma * noise);
    }
    let ids = (0..n as u32).map(|i| TokenId::new("planted", i)).collect();
    JoinedDataset::from_parts(ids, dim, inputs, 1, targets)
}

/// Token streams whose target depends on the word itself, the word before
/// and the word after, each through its own random effect table.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextSpec {
    pub n_utterances: usize,
    pub words_per_utterance: usize,
    pub vocab_size: usize,
    pub current_scale: f64,
    pub past_scale: f64,
    pub future_scale: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for ContextSpec {
    fn default() -> Self {
        Self {
            n_utterances: 2_000,
            words_per_utterance: 10,
            vocab_size: 6,
            current_scale: 1.0,
            past_scale: 0.8,
            future_scale: 0.8,
            noise_sd: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextCorpus {
    pub spec: ContextSpec,
    pub token_ids: Vec<TokenId>,
    /// Word index per token; `vocab_size` marks an utterance boundary in
    /// `prev` and `next`.
    pub words: Vec<usize>,
    pub prev: Vec<usize>,
    pub next: Vec<usize>,
    pub targets: Vec<f64>,
    /// Split per token, assigned by utterance (60/20/20).
    pub splits: Vec<SplitName>,
}

impl ContextCorpus {
    pub fn generate(spec: &ContextSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let slots = spec.vocab_size + 1;
        let mut table = |scale: f64| -> Vec<f64> {
            (0..slots)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let (cur, past, fut) = (
            table(spec.current_scale),
            table(spec.past_scale),
            table(spec.future_scale),
        );
        let mut out = Self {
            spec: spec.clone(),
            token_ids: Vec::new(),
            words: Vec::new(),
            prev: Vec::new(),
            next: Vec::new(),
            targets: Vec::new(),
            splits: Vec::new(),
        };
        for u in 0..spec.n_utterances {
            let split = match u % 5 {
                0..=2 => SplitName::Train,
                3 => SplitName::Dev,
                _ => SplitName::Test,
            };
            let words: Vec<usize> = (0..spec.words_per_utterance)
                .map(|_| rng.random_range(0..spec.vocab_size))
                .collect();
            for (i, &w) in words.iter().enumerate() {
                let p = if i == 0 { spec.vocab_size } else { words[i - 1] };
                let n = words.get(i + 1).copied().unwrap_or(spec.vocab_size);
                let noise = rng.sample::<f64, _>(StandardNormal);
                out.token_ids.push(TokenId::new(format!("ctx{u:05}"), i as u32));
                out.words.push(w);
                out.prev.push(p);
                out.next.push(n);
                out.targets.push(cur[w] + past[p] + fut[n] + spec.noise_sd * noise);
                out.splits.push(split);
            }
        }
        out
    }

    /// One-hot embedding of the conditioning words visible in `context`.
    pub fn embedding(&self, context: ContextType, token: usize) -> Vec<f64> {
        let slots = self.spec.vocab_size + 1;
        let parts: &[usize] = match context {
            ContextType::CurrentWord => &[self.words[token]],
            ContextType::PastContext => &[self.words[token], self.prev[token]],
            ContextType::Bidirectional => &[self.words[token], self.prev[token], self.next[token]],
        };
        let mut v = vec![0.0; slots * parts.len()];
        for (k, &w) in parts.iter().enumerate() {
            v[k * slots + w] = 1.0;
        }
        v
    }

    pub fn dataset(&self, context: ContextType, split: SplitName) -> JoinedDataset {
        let rows: Vec<usize> = (0..self.words.len()).filter(|&i| self.splits[i] == split).collect();
        let dim = self.embedding(context, 0).len();
        let inputs = rows.iter().flat_map(|&i| self.embedding(context, i)).collect();
        let targets = rows.iter().map(|&i| self.targets[i]).collect();
        let ids = rows.iter().map(|&i| self.token_ids[i].clone()).collect();
        JoinedDataset::from_parts(ids, dim, inputs, 1, targets)
    }
}

/// A word type of the sawtooth corpus and how it is rendered.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SawtoothWord {
    pub text: &'static str,
    pub syllables: u32,
    pub stress: u32,
    pub f0_hz: f64,
    pub amplitude: f64,
    pub seconds_per_syllable: f64,
    pub prominence: f64,
}

pub const SAWTOOTH_VOCABULARY: [SawtoothWord; 8] = [
    SawtoothWord {
        text: "the",
        syllables: 1,
        stress: 0,
        f0_hz: 110.0,
        amplitude: 0.30,
        seconds_per_syllable: 0.09,
        prominence: 0.4,
    },
    SawtoothWord {
        text: "cat",
        syllables: 1,
        stress: 0,
        f0_hz: 140.0,
        amplitude: 0.60,
        seconds_per_syllable: 0.16,
        prominence: 1.2,
    },
    SawtoothWord {
        text: "sat",
        syllables: 1,
        stress: 0,
        f0_hz: 130.0,
        amplitude: 0.50,
        seconds_per_syllable: 0.15,
        prominence: 1.0,
    },
    SawtoothWord {
        text: "on",
        syllables: 1,
        stress: 0,
        f0_hz: 115.0,
        amplitude: 0.35,
        seconds_per_syllable: 0.10,
        prominence: 0.5,
    },
    SawtoothWord {
        text: "table",
        syllables: 2,
        stress: 0,
        f0_hz: 125.0,
        amplitude: 0.50,
        seconds_per_syllable: 0.12,
        prominence: 0.9,
    },
    SawtoothWord {
        text: "banana",
        syllables: 3,
        stress: 1,
        f0_hz: 150.0,
        amplitude: 0.70,
        seconds_per_syllable: 0.11,
        prominence: 1.5,
    },
    SawtoothWord {
        text: "quickly",
        syllables: 2,
        stress: 0,
        f0_hz: 135.0,
        amplitude: 0.55,
        seconds_per_syllable: 0.12,
        prominence: 1.1,
    },
    SawtoothWord {
        text: "a",
        syllables: 1,
        stress: 0,
        f0_hz: 105.0,
        amplitude: 0.30,
        seconds_per_syllable: 0.08,
        prominence: 0.3,
    },
];

#[derive(Clone, Debug, PartialEq)]
pub struct SawtoothSpec {
    pub n_utterances: usize,
    pub words_per_utterance: usize,
    pub sample_rate_hz: u32,
    pub pause_probability: f64,
    pub seed: u64,
}

impl Default for SawtoothSpec {
    fn default() -> Self {
        Self {
            n_utterances: 10,
            words_per_utterance: 12,
            sample_rate_hz: 16_000,
            pause_probability: 0.3,
            seed: 7,
        }
    }
}

/// Where [`write_sawtooth_corpus`] put each file.
#[derive(Clone, Debug, PartialEq)]
pub struct SawtoothFiles {
    pub alignments: PathBuf,
    pub audio_root: PathBuf,
    pub lexicon: PathBuf,
    pub splits: PathBuf,
    pub prominence: PathBuf,
    pub surprisal: PathBuf,
    pub embeddings: Vec<(ContextType, PathBuf)>,
}

const LEAD_SILENCE_S: f64 = 0.1;
const TIME_QUANTUM_S: f64 = 0.01;
pub const SAWTOOTH_EMBEDDING_MODEL: &str = "synthetic-onehot";

fn quantize(t: f64) -> f64 {
    (t / TIME_QUANTUM_S).round() * TIME_QUANTUM_S
}

fn sawtooth(phase: f64) -> f64 {
    2.0 * (phase - phase.floor()) - 1.0
}

/// Writes a deterministic corpus into `dir`: alignments, WAV audio,
/// lexicon, split file, prominence and surprisal columns, and one-hot
/// embeddings for every context type. Word identity drives duration,
/// loudness, pitch and prominence; the previous word also shifts
/// prominence.
pub fn write_sawtooth_corpus(dir: &Path, spec: &SawtoothSpec) -> Result<SawtoothFiles> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    let audio_root = dir.join("audio");
    std::fs::create_dir_all(&audio_root).map_err(io(&audio_root))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let sr = spec.sample_rate_hz as f64;
    let vocab = &SAWTOOTH_VOCABULARY;

    let mut utterances = Vec::new();
    let mut prominence = Column {
        name: "prominence".into(),
        values: Default::default(),
    };
    let mut surprisal = Column {
        name: "surprisal".into(),
        values: Default::default(),
    };
    let mut word_ids: Vec<(TokenId, usize, Option<usize>, Option<usize>)> = Vec::new();
    let mut assignment = SplitAssignment::new();

    for u in 0..spec.n_utterances {
        let utt_id = format!("synth_{u:02}");
        let words: Vec<usize> = (0..spec.words_per_utterance)
            .map(|_| rng.random_range(0..vocab.len()))
            .collect();
        let mut t = LEAD_SILENCE_S;
        let mut tokens = Vec::new();
        let mut spans = Vec::new();
        for (i, &w) in words.iter().enumerate() {
            let entry = &vocab[w];
            let stretch = 1.0 + 0.15 * rng.random_range(-1.0..1.0);
            let dur = quantize(entry.syllables as f64 * entry.seconds_per_syllable * stretch).max(TIME_QUANTUM_S);
            let (start, end) = (quantize(t), quantize(t + dur));
            let pause = if i + 1 < words.len() && rng.random_bool(spec.pause_probability) {
                quantize(rng.random_range(0.05..0.25))
            } else {
                0.0
            };
            let id = TokenId::new(utt_id.clone(), i as u32);
            let prev = i.checked_sub(1).map(|j| words[j]);
            let prom = entry.prominence * (0.2 * jitter.sample(&mut rng)).exp()
                + if prev.is_some_and(|p| vocab[p].text == "the") {
                    0.3
                } else {
                    0.0
                };
            prominence.values.insert(id.clone(), prom);
            surprisal
                .values
                .insert(id.clone(), 2.0 + 1.5 * prom + 0.5 * jitter.sample(&mut rng));
            word_ids.push((id.clone(), w, prev, words.get(i + 1).copied()));
            tokens.push(WordToken {
                id,
                text: entry.text.to_string(),
                start_s: start,
                end_s: end,
                speaker_id: "synth".into(),
                phones: vec![],
            });
            spans.push((start, end, w));
            t = end + pause;
        }
        let total_s = t + LEAD_SILENCE_S;
        let mut signal = vec![0.0; (total_s * sr).round() as usize];
        for &(start, end, w) in &spans {
            let entry = &vocab[w];
            let (s0, s1) = ((start * sr).round() as usize, (end * sr).round() as usize);
            let mut phase = 0.0;
            for (k, slot) in signal[s0..s1].iter_mut().enumerate() {
                let frac = k as f64 / (s1 - s0) as f64;
                let f0 = entry.f0_hz * (1.0 + 0.1 * (std::f64::consts::PI * frac).sin());
                phase += f0 / sr;
                *slot = entry.amplitude * sawtooth(phase);
            }
        }
        let audio_name = format!("{utt_id}.wav");
        write_wav_i16(&audio_root.join(&audio_name), &signal, spec.sample_rate_hz)?;
        let transcript = words.iter().map(|&w| vocab[w].text).collect::<Vec<_>>().join(" ");
        let split = match u * 10 / spec.n_utterances.max(1) {
            0..=5 => SplitName::Train,
            6 | 7 => SplitName::Dev,
            _ => SplitName::Test,
        };
        assignment.insert(utt_id.clone(), split);
        utterances.push(Utterance {
            utterance_id: utt_id,
            audio_path: audio_name,
            transcript,
            tokens,
            sample_rate_hz: Some(spec.sample_rate_hz),
        });
    }

    let create = |path: &Path| File::create(path).map(BufWriter::new).map_err(io(path));
    let alignments = dir.join("alignments.jsonl");
    write_alignment_jsonl(&utterances, create(&alignments)?).map_err(io(&alignments))?;

    let lexicon = dir.join("lexicon.csv");
    {
        let mut w = csv::Writer::from_writer(create(&lexicon)?);
        let rows = std::iter::once([
            "word".to_string(),
            "syllable_count".into(),
            "stress_syllable_index".into(),
        ])
        .chain(
            vocab
                .iter()
                .map(|e| [e.text.to_string(), e.syllables.to_string(), e.stress.to_string()]),
        );
        for r in rows {
            w.write_record(&r).map_err(|e| SynthError::Io {
                path: lexicon.display().to_string(),
                source: e.into(),
            })?;
        }
        w.flush().map_err(io(&lexicon))?;
    }

    let splits = dir.join("splits.csv");
    write_split_assignment(&assignment, create(&splits)?).map_err(io(&splits))?;
    let prominence_path = dir.join("prominence.csv");
    write_column(&prominence, create(&prominence_path)?).map_err(io(&prominence_path))?;
    let surprisal_path = dir.join("surprisal.csv");
    write_column(&surprisal, create(&surprisal_path)?).map_err(io(&surprisal_path))?;

    let slots = vocab.len();
    let mut embeddings = Vec::new();
    for context in ContextType::ALL {
        let n_parts = match context {
            ContextType::CurrentWord => 1,
            ContextType::PastContext => 2,
            ContextType::Bidirectional => 3,
        };
        let dim = slots * n_parts;
        let mut rows = vec![0.0f32; dim * word_ids.len()];
        for (r, (_, w, prev, next)) in word_ids.iter().enumerate() {
            let visible = [Some(*w), *prev, *next];
            for (k, word) in visible.iter().take(n_parts).enumerate() {
                if let Some(word) = word {
                    rows[r * dim + k * slots + word] = 1.0;
                }
            }
        }
        let ids = word_ids.iter().map(|(id, ..)| id.clone()).collect();
        let set = EmbeddingSet::new(context, dim, SAWTOOTH_EMBEDDING_MODEL, rows, ids)?;
        let path = dir.join(format!("embeddings_{}.bin", context.short_name()));
        write_embedding_set(&set, &path)?;
        embeddings.push((context, path));
    }

    Ok(SawtoothFiles {
        alignments,
        audio_root,
        lexicon,
        splits,
        prominence: prominence_path,
        surprisal: surprisal_path,
        embeddings,
    })
}
