//! Binary embedding sets shared with the embedding extractor.
//!
//! Layout: one JSON header line
//! `{"context": str, "dim": int, "count": int, "model": str, "dtype": "f32le"}`
//! followed by `count * dim` little-endian `f32`, row-major. Row identities
//! live in a sidecar CSV `row,utterance_id,index_in_utterance` next to the
//! file (`<file>.rows.csv`).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::lexicon::csv_error;
use super::{ContextType, CorpusError, Result, TokenId};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub context: ContextType,
    pub dim: usize,
    pub model: String,
    rows: Vec<f32>,
    row_token_ids: Vec<TokenId>,
    index: HashMap<TokenId, usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    context: ContextType,
    dim: usize,
    count: usize,
    model: String,
    dtype: String,
}

impl EmbeddingSet {
    /// Validates shape, finiteness and token-id uniqueness.
    pub fn new(
        context: ContextType,
        dim: usize,
        model: impl Into<String>,
        rows: Vec<f32>,
        row_token_ids: Vec<TokenId>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(CorpusError::Embedding("dim must be positive".into()));
        }
        if rows.len() != dim * row_token_ids.len() {
            return Err(CorpusError::Embedding(format!(
                "{} values for {} rows of dim {dim}",
                rows.len(),
                row_token_ids.len()
            )));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(CorpusError::Embedding(format!(
                "non-finite value in row {} ({})",
                pos / dim,
                row_token_ids[pos / dim]
            )));
        }
        let mut index = HashMap::with_capacity(row_token_ids.len());
        for (i, id) in row_token_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateToken(id.clone()));
            }
        }
        Ok(Self {
            context,
            dim,
            model: model.into(),
            rows,
            row_token_ids,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.row_token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_token_ids.is_empty()
    }

    pub fn row_token_ids(&self) -> &[TokenId] {
        &self.row_token_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &TokenId) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn values(&self) -> &[f32] {
        &self.rows
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".rows.csv");
    PathBuf::from(name)
}

pub fn write_embedding_set(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CorpusError::Io { path: p, source }
    };
    let header = Header {
        context: set.context,
        dim: set.dim,
        count: set.len(),
        model: set.model.clone(),
        dtype: "f32le".into(),
    };
    let mut buf = serde_json::to_vec(&header).expect("header serializes");
    buf.push(b'\n');
    buf.reserve(set.rows.len() * 4);
    for v in &set.rows {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(io_err(path))?;

    let side = sidecar_path(path);
    let file = std::fs::File::create(&side).map_err(io_err(&side))?;
    let mut w = csv::Writer::from_writer(file);
    let write =
        |w: &mut csv::Writer<std::fs::File>, rec: [String; 3]| w.write_record(&rec).map_err(|e| csv_error(&side, e));
    write(
        &mut w,
        ["row".into(), "utterance_id".into(), "index_in_utterance".into()],
    )?;
    for (i, id) in set.row_token_ids.iter().enumerate() {
        write(&mut w, [i.to_string(), id.utterance_id.clone(), id.index.to_string()])?;
    }
    w.flush().map_err(io_err(&side))?;
    Ok(())
}

pub fn read_embedding_set(path: &Path) -> Result<EmbeddingSet> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| CorpusError::Parse {
        path: path.display().to_string(),
        line: 1,
        message: format!("embedding header: {e}"),
    })?;
    if header.dtype != "f32le" {
        return Err(CorpusError::Embedding(format!("unsupported dtype `{}`", header.dtype)));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let expected = header.count * header.dim * 4;
    if payload.len() != expected {
        return Err(CorpusError::Embedding(format!(
            "{}: payload has {} bytes, header implies {expected}",
            path.display(),
            payload.len()
        )));
    }
    let rows: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let side = sidecar_path(path);
    let mut rdr = csv::Reader::from_path(&side).map_err(|e| csv_error(&side, e))?;
    let mut ids = Vec::with_capacity(header.count);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(&side, e))?;
        let bad = |message: String| CorpusError::Parse {
            path: side.display().to_string(),
            line: i + 2,
            message,
        };
        let row: usize = rec[0].parse().map_err(|_| bad("row is not an integer".into()))?;
        if row != i {
            return Err(bad(format!("rows out of order: expected {i}, found {row}")));
        }
        let index: u32 = rec[2]
            .parse()
            .map_err(|_| bad("index_in_utterance is not an integer".into()))?;
        ids.push(TokenId::new(rec[1].to_string(), index));
    }
    if ids.len() != header.count {
        return Err(CorpusError::Embedding(format!(
            "sidecar lists {} rows, header says {}",
            ids.len(),
            header.count
        )));
    }
    EmbeddingSet::new(header.context, header.dim, header.model, rows, ids)
}
