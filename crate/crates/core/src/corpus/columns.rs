use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lexicon::csv_error;
use super::{CorpusError, DatasetSplit, Result, SplitName, TokenId, Utterance};

/// A precomputed per-token column (prominence, surprisal, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: BTreeMap<TokenId, f64>,
}

impl Column {
    pub fn get(&self, id: &TokenId) -> Option<f64> {
        self.values.get(id).copied()
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

/// Reads a CSV with header `utterance_id,index_in_utterance,<column_name>`.
pub fn load_column(path: &Path) -> Result<Column> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 3 || &headers[0] != "utterance_id" || &headers[1] != "index_in_utterance" {
        return Err(CorpusError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "expected header `utterance_id,index_in_utterance,<column>`".into(),
        });
    }
    let name = headers[2].to_string();
    let mut values = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |field: &str| CorpusError::Parse {
            path: path.display().to_string(),
            line,
            message: format!("field {field} is not numeric"),
        };
        let index: u32 = rec[1].trim().parse().map_err(|_| bad("index_in_utterance"))?;
        let value: f64 = rec[2].trim().parse().map_err(|_| bad(&name))?;
        let id = TokenId::new(rec[0].to_string(), index);
        if values.insert(id.clone(), value).is_some() {
            return Err(CorpusError::DuplicateToken(id));
        }
    }
    Ok(Column { name, values })
}

/// Writes `column` with header `utterance_id,index_in_utterance,<name>`,
/// rows in token order.
pub fn write_column<W: Write>(column: &Column, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["utterance_id", "index_in_utterance", column.name.as_str()])?;
    for (id, v) in &column.values {
        w.write_record([id.utterance_id.clone(), id.index.to_string(), v.to_string()])?;
    }
    w.flush()
}

/// Utterance id -> split, as read from `utterance_id,split`.
pub type SplitAssignment = BTreeMap<String, SplitName>;

pub fn load_split_assignment(path: &Path) -> Result<SplitAssignment> {
    let mut rdr = reader(path)?;
    let mut out = SplitAssignment::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let split: SplitName = rec[1].trim().parse().map_err(|message| CorpusError::Parse {
            path: path.display().to_string(),
            line,
            message,
        })?;
        out.insert(rec[0].to_string(), split);
    }
    Ok(out)
}

pub fn write_split_assignment<W: Write>(assignment: &SplitAssignment, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["utterance_id", "split"])?;
    for (utt, split) in assignment {
        w.write_record([utt.as_str(), split.as_str()])?;
    }
    w.flush()
}

/// Shuffles utterances with a seeded RNG and assigns them to train/dev/test
/// by the given fractions (test takes the remainder).
pub fn random_split_assignment(utterances: &[Utterance], train_frac: f64, dev_frac: f64, seed: u64) -> SplitAssignment {
    let mut ids: Vec<&str> = utterances.iter().map(|u| u.utterance_id.as_str()).collect();
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = (train_frac * n as f64).round() as usize;
    let n_dev = (dev_frac * n as f64).round() as usize;
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_train {
                SplitName::Train
            } else if i < n_train + n_dev {
                SplitName::Dev
            } else {
                SplitName::Test
            };
            (id.to_string(), split)
        })
        .collect()
}

/// Builds the three token-level splits. Every utterance must be assigned;
/// whole utterances go to one split.
pub fn make_splits(utterances: &[Utterance], assignment: &SplitAssignment) -> Result<[DatasetSplit; 3]> {
    let mut sets: [BTreeSet<TokenId>; 3] = Default::default();
    for u in utterances {
        let split = assignment
            .get(&u.utterance_id)
            .ok_or_else(|| CorpusError::Split(format!("utterance {} has no split", u.utterance_id)))?;
        let slot = SplitName::ALL.iter().position(|s| s == split).expect("split in ALL");
        sets[slot].extend(u.tokens.iter().map(|t| t.id.clone()));
    }
    let [train, dev, test] = sets;
    Ok([
        DatasetSplit {
            name: SplitName::Train,
            token_ids: train,
        },
        DatasetSplit {
            name: SplitName::Dev,
            token_ids: dev,
        },
        DatasetSplit {
            name: SplitName::Test,
            token_ids: test,
        },
    ])
}
