use std::collections::BTreeMap;

use super::{CorpusError, DatasetSplit, EmbeddingSet, Result, TokenId};

/// Per-token prediction targets: a scalar feature (`dim == 1`) or a vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TargetTable {
    pub dim: usize,
    pub values: BTreeMap<TokenId, Vec<f64>>,
}

/// Embedding rows aligned one-to-one with targets, ordered by token id.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinedDataset {
    pub token_ids: Vec<TokenId>,
    pub input_dim: usize,
    pub target_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl JoinedDataset {
    /// Builds a dataset from flat row-major buffers.
    ///
    /// Panics if the buffer lengths disagree with the dimensions.
    pub fn from_parts(
        token_ids: Vec<TokenId>,
        input_dim: usize,
        inputs: Vec<f64>,
        target_dim: usize,
        targets: Vec<f64>,
    ) -> Self {
        assert_eq!(inputs.len(), token_ids.len() * input_dim, "input buffer shape");
        assert_eq!(targets.len(), token_ids.len() * target_dim, "target buffer shape");
        Self {
            token_ids,
            input_dim,
            target_dim,
            inputs,
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_dim..(i + 1) * self.target_dim]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, rows: &[usize]) -> JoinedDataset {
        let mut inputs = Vec::with_capacity(rows.len() * self.input_dim);
        let mut targets = Vec::with_capacity(rows.len() * self.target_dim);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            inputs.extend_from_slice(self.input(r));
            targets.extend_from_slice(self.target(r));
            ids.push(self.token_ids[r].clone());
        }
        JoinedDataset::from_parts(ids, self.input_dim, inputs, self.target_dim, targets)
    }
}

const MAX_LISTED: usize = 10;

fn missing_error(what: &'static str, missing: &[&TokenId]) -> CorpusError {
    let shown = missing
        .iter()
        .take(MAX_LISTED)
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    CorpusError::MissingTokens {
        what,
        count: missing.len(),
        shown,
    }
}

/// Aligns the split's tokens with their embedding rows and targets.
/// Every token in the split must be present in both.
pub fn join_embeddings(
    split: &DatasetSplit,
    embeddings: &EmbeddingSet,
    targets: &TargetTable,
) -> Result<JoinedDataset> {
    let missing_emb: Vec<&TokenId> = split.token_ids.iter().filter(|t| embeddings.get(t).is_none()).collect();
    if !missing_emb.is_empty() {
        return Err(missing_error("embeddings", &missing_emb));
    }
    let missing_tgt: Vec<&TokenId> = split
        .token_ids
        .iter()
        .filter(|t| !targets.values.contains_key(t))
        .collect();
    if !missing_tgt.is_empty() {
        return Err(missing_error("targets", &missing_tgt));
    }
    let n = split.token_ids.len();
    let mut inputs = Vec::with_capacity(n * embeddings.dim);
    let mut flat_targets = Vec::with_capacity(n * targets.dim);
    for id in &split.token_ids {
        inputs.extend(embeddings.get(id).expect("checked above").iter().map(|&v| v as f64));
        let t = &targets.values[id];
        if t.len() != targets.dim {
            return Err(CorpusError::Validation(format!(
                "target for {id} has {} values, expected {}",
                t.len(),
                targets.dim
            )));
        }
        flat_targets.extend_from_slice(t);
    }
    Ok(JoinedDataset::from_parts(
        split.token_ids.iter().cloned().collect(),
        embeddings.dim,
        inputs,
        targets.dim,
        flat_targets,
    ))
}
