use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyllableSource {
    Lexicon,
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub syllable_count: u32,
    /// 0-based index of the primary-stressed syllable.
    pub stress_syllable_index: u32,
    pub source: SyllableSource,
}

/// Case-folded word -> (syllable count, stressed syllable index).
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    entries: HashMap<String, (u32, u32)>,
}

#[derive(Deserialize)]
struct LexiconRow {
    word: String,
    syllable_count: u32,
    stress_syllable_index: u32,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, word: &str, syllable_count: u32, stress_syllable_index: u32) -> Result<()> {
        if syllable_count == 0 || stress_syllable_index >= syllable_count {
            return Err(CorpusError::Validation(format!(
                "lexicon entry `{word}`: stress index {stress_syllable_index} not below syllable count {syllable_count}"
            )));
        }
        self.entries
            .insert(normalize_word(word), (syllable_count, stress_syllable_index));
        Ok(())
    }

    /// Reads a CSV with header `word,syllable_count,stress_syllable_index`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut lex = Lexicon::new();
        for (i, row) in reader.deserialize::<LexiconRow>().enumerate() {
            let row = row.map_err(|e| csv_error(path, e))?;
            lex.insert(&row.word, row.syllable_count, row.stress_syllable_index)
                .map_err(|e| CorpusError::Parse {
                    path: path.display().to_string(),
                    line: i + 2,
                    message: e.to_string(),
                })?;
        }
        Ok(lex)
    }

    /// Lexicon hit, or the vowel-group heuristic with stress on the first
    /// syllable. Never fails.
    pub fn lookup_syllables(&self, word: &str) -> LexiconEntry {
        let key = normalize_word(word);
        match self.entries.get(&key) {
            Some(&(count, stress)) => LexiconEntry {
                word: key,
                syllable_count: count,
                stress_syllable_index: stress,
                source: SyllableSource::Lexicon,
            },
            None => LexiconEntry {
                syllable_count: heuristic_syllable_count(&key),
                word: key,
                stress_syllable_index: 0,
                source: SyllableSource::Heuristic,
            },
        }
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> CorpusError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    CorpusError::Parse {
        path: path.display().to_string(),
        line,
        message: e.to_string(),
    }
}

/// Lower-cases and strips surrounding punctuation (apostrophes inside words
/// are kept).
fn normalize_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
        .to_lowercase()
}

/// Number of maximal runs of vowel letters (`aeiouy`), at least 1.
pub fn heuristic_syllable_count(word: &str) -> u32 {
    let mut groups = 0;
    let mut in_vowel = false;
    for c in word.chars().flat_map(char::to_lowercase) {
        let vowel = matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
        if vowel && !in_vowel {
            groups += 1;
        }
        in_vowel = vowel;
    }
    groups.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_hit() {
        let mut lex = Lexicon::new();
        lex.insert("table", 2, 0).unwrap();
        let e = lex.lookup_syllables("Table,");
        assert_eq!(
            (e.syllable_count, e.stress_syllable_index, e.source),
            (2, 0, SyllableSource::Lexicon)
        );
    }

    #[test]
    fn heuristic_minimum_clamp() {
        let e = Lexicon::new().lookup_syllables("zxq");
        assert_eq!(
            (e.syllable_count, e.stress_syllable_index, e.source),
            (1, 0, SyllableSource::Heuristic)
        );
    }

    #[test]
    fn heuristic_banana() {
        let e = Lexicon::new().lookup_syllables("banana");
        assert_eq!(
            (e.syllable_count, e.stress_syllable_index, e.source),
            (3, 0, SyllableSource::Heuristic)
        );
    }

    #[test]
    fn invalid_stress_index_rejected() {
        assert!(Lexicon::new().insert("cat", 1, 1).is_err());
    }

    #[test]
    fn load_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.csv");
        std::fs::write(&p, "word,syllable_count,stress_syllable_index\nbanana,3,1\nCat,1,0\n").unwrap();
        let lex = Lexicon::load(&p).unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.lookup_syllables("cat").source, SyllableSource::Lexicon);
        assert_eq!(lex.lookup_syllables("banana").stress_syllable_index, 1);
    }
}
