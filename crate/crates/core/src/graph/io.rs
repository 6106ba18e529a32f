//! Dataset directory format: `edges.tsv`, `features.csv`, `labels.csv`,
//! `splits.json`.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, Graph, IngestStats};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    directed: bool,
    num_classes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub ingest: IngestStats,
    pub isolated_nodes: usize,
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingFile(p))
    }
}

fn reader(path: &Path, delim: u8) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delim)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line() as usize);
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::parse(path, line, format!("expected at least {} columns", i + 1)))?;
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {raw:?}")))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    load_dataset_with_report(dir).map(|(ds, _)| ds)
}

/// Loads and validates a dataset directory; duplicate edges and self-loops are
/// dropped and counted.
pub fn load_dataset_with_report(dir: impl AsRef<Path>) -> Result<(Dataset, LoadReport)> {
    let dir = dir.as_ref();
    let edges_p = require(dir, "edges.tsv")?;
    let feats_p = require(dir, "features.csv")?;
    let labels_p = require(dir, "labels.csv")?;
    let splits_p = require(dir, "splits.json")?;

    let splits: Splits = serde_json::from_str(&fs::read_to_string(&splits_p)?)?;

    let mut labels = Vec::new();
    for rec in reader(&labels_p, b',')?.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        labels.push(field::<usize>(&labels_p, &rec, 0)?);
    }
    let n = labels.len();

    let mut rows: Vec<f64> = Vec::new();
    let mut dim = None;
    let mut nrows = 0;
    for rec in reader(&feats_p, b',')?.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if *dim.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::parse(&feats_p, line, "ragged feature row"));
        }
        for i in 0..rec.len() {
            rows.push(field(&feats_p, &rec, i)?);
        }
        nrows += 1;
    }
    if nrows != n {
        return Err(Error::InvalidDataset(format!(
            "features.csv has {nrows} rows but labels.csv has {n}"
        )));
    }
    let features = Array2::from_shape_vec((n, dim.unwrap_or(0)), rows)
        .map_err(|e| Error::Shape(e.to_string()))?;

    let mut edges = Vec::new();
    for rec in reader(&edges_p, b'\t')?.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        edges.push((field(&edges_p, &rec, 0)?, field(&edges_p, &rec, 1)?));
    }

    let (graph, ingest) = Graph::new(n, edges, splits.directed, features, labels, splits.num_classes)?;
    if ingest.self_loops + ingest.duplicates > 0 {
        warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            edges_p.display(),
            ingest.self_loops,
            ingest.duplicates
        );
    }
    let isolated = graph.isolated_nodes();
    if isolated > 0 {
        warn!("{} isolated nodes", isolated);
    }

    let mask = |ids: &[usize]| -> Result<Vec<bool>> {
        let mut m = vec![false; n];
        for &id in ids {
            if id >= n {
                return Err(Error::NodeOutOfRange { id, num_nodes: n });
            }
            if m[id] {
                return Err(Error::InvalidDataset(format!("node {id} listed twice in one split")));
            }
            m[id] = true;
        }
        Ok(m)
    };
    let ds = Dataset::new(graph, mask(&splits.train)?, mask(&splits.val)?, mask(&splits.test)?)?;
    Ok((
        ds,
        LoadReport {
            ingest,
            isolated_nodes: isolated,
        },
    ))
}

pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let g = &ds.graph;

    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .delimiter(b'\t')
        .from_path(dir.join("edges.tsv"))?;
    for (u, v) in g.edges() {
        w.write_record([u.to_string(), v.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("features.csv"))?;
    for row in g.features().rows() {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;

    let labels: String = g.labels().iter().map(|c| format!("{c}\n")).collect();
    fs::write(dir.join("labels.csv"), labels)?;

    let ids = |m: &[bool]| (0..m.len()).filter(|&i| m[i]).collect::<Vec<_>>();
    let splits = Splits {
        train: ids(&ds.train_mask),
        val: ids(&ds.val_mask),
        test: ids(&ds.test_mask),
        directed: g.is_directed(),
        num_classes: g.num_classes(),
    };
    fs::write(dir.join("splits.json"), serde_json::to_string(&splits)?)?;
    Ok(())
}
