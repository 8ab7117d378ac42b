//! Head files: one JSON header line, then the f32 little-endian weights
//! layer by layer (weights before biases).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, MlpConfig, PredictiveFamily, PredictorError, Result, TargetScaling, TrainedHead};
use crate::corpus::ContextType;

#[derive(Serialize, Deserialize)]
struct HeadHeader {
    config: MlpConfig,
    family: PredictiveFamily,
    input_dim: usize,
    /// `[inputs, outputs]` per layer.
    layer_shapes: Vec<[usize; 2]>,
    scaling: TargetScaling,
    val_xent_nats: f64,
    val_history: Vec<f64>,
    context_type: Option<ContextType>,
    zscore_ref: Option<String>,
}

pub fn write_head(head: &TrainedHead, path: &Path) -> Result<()> {
    let io = |source| PredictorError::Io {
        path: path.display().to_string(),
        source,
    };
    let header = HeadHeader {
        config: head.config.clone(),
        family: head.family,
        input_dim: head.input_dim,
        layer_shapes: head.layers.iter().map(|l| [l.inputs, l.outputs]).collect(),
        scaling: head.scaling.clone(),
        val_xent_nats: head.val_xent_nats,
        val_history: head.val_history.clone(),
        context_type: head.context_type,
        zscore_ref: head.zscore_ref.clone(),
    };
    let mut buf = serde_json::to_vec(&header).expect("header serializes");
    buf.push(b'\n');
    for l in &head.layers {
        for v in l.weights.iter().chain(&l.biases) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}

pub fn read_head(path: &Path) -> Result<TrainedHead> {
    let io = |source| PredictorError::Io {
        path: path.display().to_string(),
        source,
    };
    let bad = |message: String| PredictorError::Format {
        path: path.display().to_string(),
        message,
    };
    let mut reader = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).map_err(io)?;
    let h: HeadHeader = serde_json::from_slice(&line).map_err(|e| bad(e.to_string()))?;

    if h.layer_shapes.len() != h.config.n_layers + 1 {
        return Err(bad(format!(
            "{} layers stored for a {}-hidden-layer config",
            h.layer_shapes.len(),
            h.config.n_layers
        )));
    }
    let mut expected_in = h.input_dim;
    for (i, &[inputs, outputs]) in h.layer_shapes.iter().enumerate() {
        if inputs != expected_in {
            return Err(bad(format!("layer {i} takes {inputs} inputs, expected {expected_in}")));
        }
        expected_in = outputs;
    }
    if expected_in != h.family.n_params() {
        return Err(bad(format!(
            "output layer has {expected_in} units, family {} needs {}",
            h.family,
            h.family.n_params()
        )));
    }
    let k = h.family.target_dim();
    if h.scaling.offset.len() != k || h.scaling.scale.len() != k {
        return Err(bad("target scaling has the wrong dimension".into()));
    }

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(io)?;
    let n_values: usize = h.layer_shapes.iter().map(|[i, o]| i * o + o).sum();
    if payload.len() != 4 * n_values {
        return Err(bad(format!(
            "expected {} payload bytes, found {}",
            4 * n_values,
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let layers = h
        .layer_shapes
        .iter()
        .map(|&[inputs, outputs]| Layer {
            inputs,
            outputs,
            weights: values.by_ref().take(inputs * outputs).collect(),
            biases: values.by_ref().take(outputs).collect(),
        })
        .collect();
    Ok(TrainedHead {
        config: h.config,
        family: h.family,
        input_dim: h.input_dim,
        layers,
        scaling: h.scaling,
        val_xent_nats: h.val_xent_nats,
        val_history: h.val_history,
        context_type: h.context_type,
        zscore_ref: h.zscore_ref,
    })
}
