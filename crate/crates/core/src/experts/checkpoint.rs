//! Checkpoint file: `EXFG`, a little-endian u32 header length, a JSON header,
//! then every weight matrix (row-major) and bias vector as little-endian f32.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::config::ExpertConfig;
use super::model::Params;
use super::train::Expert;
use crate::error::{Error, Result};
use crate::nn::Linear;

const MAGIC: &[u8; 4] = b"EXFG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ExpertConfig,
    /// `(fan_in, fan_out)` per layer; each layer also stores `fan_out` biases.
    pub shapes: Vec<(usize, usize)>,
    pub epoch: usize,
    pub val_accuracy: f64,
    pub graph_fingerprint: u64,
}

pub fn save_checkpoint(expert: &Expert, path: impl AsRef<Path>) -> Result<()> {
    let header = CheckpointHeader {
        config: expert.config.clone(),
        shapes: expert.params.shapes(),
        epoch: expert.best_epoch,
        val_accuracy: expert.best_val_acc,
        graph_fingerprint: expert.graph_fingerprint,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(8 + json.len() + 4 * expert.params.num_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for l in &expert.params.layers {
        for x in l.w.iter().chain(l.b.iter()) {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointHeader, Params)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let corrupt = |m: &str| Error::parse(path, 0, m.to_string());
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let mut floats = bytes[8 + hlen..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut layers = Vec::new();
    for &(r, c) in &header.shapes {
        let w: Vec<f64> = floats.by_ref().take(r * c).collect();
        let b: Vec<f64> = floats.by_ref().take(c).collect();
        if w.len() != r * c || b.len() != c {
            return Err(corrupt("parameter blob shorter than header shapes"));
        }
        layers.push(Linear {
            w: Array2::from_shape_vec((r, c), w).map_err(|e| Error::Shape(e.to_string()))?,
            b: Array1::from(b),
        });
    }
    if floats.next().is_some() {
        return Err(corrupt("trailing parameter data"));
    }
    Ok((header, Params { layers }))
}

pub fn write_logits_csv(logits: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["node_id".to_string()];
    head.extend((0..logits.ncols()).map(|k| format!("logit_{k}")));
    w.write_record(&head)?;
    for (v, row) in logits.rows().into_iter().enumerate() {
        let mut rec = vec![v.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a logits CSV; rows are placed by their `node_id`.
pub fn read_logits_csv(path: impl AsRef<Path>, num_nodes: usize) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Option<Array2<f64>> = None;
    let mut seen = vec![false; num_nodes];
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let vals: Vec<&str> = rec.iter().collect();
        let id: usize = vals[0].parse().map_err(|_| Error::parse(path, line, "bad node_id"))?;
        if id >= num_nodes {
            return Err(Error::NodeOutOfRange { id, num_nodes });
        }
        let m = out.get_or_insert_with(|| Array2::zeros((num_nodes, vals.len() - 1)));
        if vals.len() - 1 != m.ncols() {
            return Err(Error::parse(path, line, "ragged logits row"));
        }
        for (k, s) in vals[1..].iter().enumerate() {
            m[[id, k]] = s.parse().map_err(|_| Error::parse(path, line, format!("cannot parse {s:?}")))?;
        }
        seen[id] = true;
    }
    if let Some(v) = seen.iter().position(|&s| !s) {
        return Err(Error::InvalidDataset(format!("{}: no logits for node {v}", path.display())));
    }
    out.ok_or_else(|| Error::InvalidDataset(format!("{}: empty logits file", path.display())))
}
