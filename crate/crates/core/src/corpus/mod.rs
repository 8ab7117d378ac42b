//! Corpus ingestion: word alignments, lexicon, dataset splits, precomputed
//! per-token columns and embedding sets.

mod alignment;
mod columns;
mod embedding;
mod join;
mod lexicon;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alignment::{load_alignment, parse_alignment_jsonl, parse_textgrid, write_alignment_jsonl, AlignmentFormat};
pub use columns::{
    load_column, load_split_assignment, make_splits, random_split_assignment, write_column, write_split_assignment,
    Column, SplitAssignment,
};
pub use embedding::{read_embedding_set, sidecar_path, write_embedding_set, EmbeddingSet};
pub use join::{join_embeddings, JoinedDataset, TargetTable};
pub use lexicon::{heuristic_syllable_count, Lexicon, LexiconEntry, SyllableSource};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("invalid alignment: {0}")]
    Validation(String),
    #[error("duplicate token id {0}")]
    DuplicateToken(TokenId),
    #[error("{count} token id(s) missing from {what}: {shown}")]
    MissingTokens {
        what: &'static str,
        count: usize,
        shown: String,
    },
    #[error("embedding file: {0}")]
    Embedding(String),
    #[error("split assignment: {0}")]
    Split(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Stable identity of a word token: its utterance and position in it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId {
    pub utterance_id: String,
    pub index: u32,
}

impl TokenId {
    pub fn new(utterance_id: impl Into<String>, index: u32) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            index,
        }
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.utterance_id, self.index)
    }
}

/// A phone interval inside a word, used to locate the stressed vowel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phone {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordToken {
    pub id: TokenId,
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker_id: String,
    /// Optional phone-level alignment; empty when only word timings exist.
    pub phones: Vec<Phone>,
}

impl WordToken {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub utterance_id: String,
    pub audio_path: String,
    pub transcript: String,
    pub tokens: Vec<WordToken>,
    /// `None` when the alignment source does not carry it (TextGrid); the
    /// WAV header is authoritative either way.
    pub sample_rate_hz: Option<u32>,
}

impl Utterance {
    /// Fragments such as chapter titles; dropped by [`filter_short`].
    pub fn is_fragment(&self, min_words: usize) -> bool {
        self.tokens.len() < min_words
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.tokens.first()?.start_s, self.tokens.last()?.end_s))
    }
}

/// Keeps utterances with at least `min_words` tokens, preserving order.
pub fn filter_short(utterances: Vec<Utterance>, min_words: usize) -> Vec<Utterance> {
    utterances.into_iter().filter(|u| !u.is_fragment(min_words)).collect()
}

/// Which conditioning text the embeddings encode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextType {
    CurrentWord,
    PastContext,
    Bidirectional,
}

impl ContextType {
    pub const ALL: [ContextType; 3] = [Self::CurrentWord, Self::PastContext, Self::Bidirectional];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CurrentWord => "current_word",
            Self::PastContext => "past_context",
            Self::Bidirectional => "bidirectional",
        }
    }

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            Self::CurrentWord => "current",
            Self::PastContext => "past",
            Self::Bidirectional => "bidirectional",
        }
    }
}

impl fmt::Display for ContextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ContextType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "current" | "current_word" => Ok(Self::CurrentWord),
            "past" | "past_context" => Ok(Self::PastContext),
            "bidirectional" | "bi" => Ok(Self::Bidirectional),
            other => Err(format!("unknown context type `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [Self::Train, Self::Dev, Self::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Dev => "dev",
            Self::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "dev" => Ok(Self::Dev),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub token_ids: BTreeSet<TokenId>,
}

impl DatasetSplit {
    /// Restricts the split to tokens accepted by `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&TokenId) -> bool) -> DatasetSplit {
        DatasetSplit {
            name: self.name,
            token_ids: self.token_ids.iter().filter(|t| keep(t)).cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, n: usize) -> Utterance {
        let tokens = (0..n)
            .map(|i| WordToken {
                id: TokenId::new(id, i as u32),
                text: format!("w{i}"),
                start_s: i as f64,
                end_s: i as f64 + 0.5,
                speaker_id: "s".into(),
                phones: vec![],
            })
            .collect();
        Utterance {
            utterance_id: id.into(),
            audio_path: format!("{id}.wav"),
            transcript: String::new(),
            tokens,
            sample_rate_hz: Some(16_000),
        }
    }

    #[test]
    fn filter_short_drops_single_word_fragments() {
        let kept = filter_short(vec![utt("a", 2), utt("chapter", 1)], 2);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].utterance_id, "a");
    }

    #[test]
    fn filter_short_min_one_is_identity() {
        let input = vec![utt("a", 2), utt("b", 1)];
        assert_eq!(filter_short(input.clone(), 1), input);
    }

    #[test]
    fn filter_short_empty() {
        assert!(filter_short(vec![], 2).is_empty());
    }

    #[test]
    fn filter_short_is_idempotent() {
        let input = vec![utt("a", 3), utt("b", 1), utt("c", 2), utt("d", 0)];
        let once = filter_short(input, 2);
        assert_eq!(filter_short(once.clone(), 2), once);
    }

    #[test]
    fn context_type_parsing() {
        assert_eq!("past".parse::<ContextType>().unwrap(), ContextType::PastContext);
        assert_eq!("current_word".parse::<ContextType>().unwrap(), ContextType::CurrentWord);
        assert!("future".parse::<ContextType>().is_err());
    }
}
