//! Graph and dataset representation.
//!
//! Topology is stored as three sorted CSR structures: out-neighbors,
//! in-neighbors, and the undirected projection. For undirected graphs all
//! three coincide.

mod io;
mod split;
mod synth;

pub use io::{load_dataset, load_dataset_with_report, save_dataset, LoadReport};
pub use split::random_masks;
pub use synth::{generate_synthetic, BlockSpec, DirectionMode, SynthConfig, DEFAULT_SPLIT};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Csr {
    ptr: Vec<usize>,
    idx: Vec<usize>,
}

impl Csr {
    /// `pairs` must be sorted and deduplicated.
    fn from_sorted(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut ptr = vec![0usize; n + 1];
        for &(u, _) in pairs {
            ptr[u + 1] += 1;
        }
        for i in 0..n {
            ptr[i + 1] += ptr[i];
        }
        Csr {
            ptr,
            idx: pairs.iter().map(|&(_, v)| v).collect(),
        }
    }

    fn row(&self, v: usize) -> &[usize] {
        &self.idx[self.ptr[v]..self.ptr[v + 1]]
    }
}

/// Counts of edges dropped while normalizing raw input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    directed: bool,
    out: Csr,
    inc: Csr,
    und: Csr,
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    /// Builds a graph from raw edges, dropping self-loops and exact duplicates.
    /// Undirected graphs are symmetrized.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        directed: bool,
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<(Self, IngestStats)> {
        if features.nrows() != num_nodes {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows, expected {num_nodes}",
                features.nrows()
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::Shape(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }

        let mut stats = IngestStats::default();
        let mut pairs = Vec::new();
        for (u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::NodeOutOfRange { id, num_nodes });
                }
            }
            if u == v {
                stats.self_loops += 1;
            } else {
                pairs.push((u, v));
            }
        }
        let raw = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        stats.duplicates = raw - pairs.len();

        Ok((
            Self::from_pairs(num_nodes, pairs, directed, features, labels, num_classes),
            stats,
        ))
    }

    /// `pairs` sorted, deduplicated, loop-free.
    fn from_pairs(
        num_nodes: usize,
        mut pairs: Vec<(usize, usize)>,
        directed: bool,
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Self {
        let mut sym: Vec<(usize, usize)> = pairs.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
        sym.sort_unstable();
        sym.dedup();
        let und = Csr::from_sorted(num_nodes, &sym);
        if !directed {
            pairs = sym;
        }
        let out = Csr::from_sorted(num_nodes, &pairs);
        let mut rev: Vec<(usize, usize)> = pairs.iter().map(|&(u, v)| (v, u)).collect();
        rev.sort_unstable();
        let inc = Csr::from_sorted(num_nodes, &rev);
        Graph {
            num_nodes,
            directed,
            out,
            inc,
            und,
            features,
            labels,
            num_classes,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Number of stored directed pairs. An undirected edge counts twice.
    pub fn num_edges(&self) -> usize {
        self.out.idx.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        self.out.row(v)
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        self.inc.row(v)
    }

    /// Neighbors in the undirected projection, sorted.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.und.row(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.und.row(v).len()
    }

    /// All stored pairs in (src, dst) order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| self.out.row(u).iter().map(move |&v| (u, v)))
    }

    pub fn isolated_nodes(&self) -> usize {
        (0..self.num_nodes).filter(|&v| self.degree(v) == 0).count()
    }

    /// Same nodes, features and labels with a new (already normalized) edge set.
    fn with_pairs(&self, pairs: Vec<(usize, usize)>, directed: bool) -> Graph {
        Graph::from_pairs(
            self.num_nodes,
            pairs,
            directed,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    pub fn to_undirected(&self) -> Graph {
        let pairs = (0..self.num_nodes)
            .flat_map(|u| self.und.row(u).iter().map(move |&v| (u, v)))
            .collect();
        self.with_pairs(pairs, false)
    }

    /// Keeps only edges whose endpoints share a label under `labels`.
    pub fn intra_class_graph(&self, labels: &[usize]) -> Graph {
        assert_eq!(labels.len(), self.num_nodes, "one label per node");
        let pairs = self.edges().filter(|&(u, v)| labels[u] == labels[v]).collect();
        self.with_pairs(pairs, self.directed)
    }

    /// Relabels node `v` as `perm[v]`, carrying features and labels along.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes);
        let mut pairs: Vec<(usize, usize)> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        pairs.sort_unstable();
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut labels = vec![0; self.num_nodes];
        for v in 0..self.num_nodes {
            features.row_mut(perm[v]).assign(&self.features.row(v));
            labels[perm[v]] = self.labels[v];
        }
        Graph::from_pairs(self.num_nodes, pairs, self.directed, features, labels, self.num_classes)
    }

    /// Copy with replaced features (same row count).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Graph> {
        if features.nrows() != self.num_nodes {
            return Err(Error::Shape("feature rows must equal num_nodes".into()));
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    /// Stable hash of node count, directedness, edges and labels. Features
    /// are left out so feature transforms keep the identity.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::rng::hash_str(if self.directed { "directed" } else { "undirected" });
        let mut mix = |x: u64| h = crate::rng::derive_seed(h, &[x]);
        mix(self.num_nodes as u64);
        for (u, v) in self.edges() {
            mix(((u as u64) << 32) ^ v as u64);
        }
        for &c in &self.labels {
            mix(c as u64);
        }
        h
    }

    /// Fraction of edges (undirected projection) joining same-label endpoints.
    pub fn edge_homophily(&self) -> f64 {
        let m = self.und.idx.len();
        if m == 0 {
            return 0.0;
        }
        let same = (0..self.num_nodes)
            .flat_map(|u| self.und.row(u).iter().map(move |&v| (u, v)))
            .filter(|&(u, v)| self.labels[u] == self.labels[v])
            .count();
        same as f64 / m as f64
    }
}

/// A graph plus disjoint train/validation/test node masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl Dataset {
    pub fn new(
        graph: Graph,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        for (name, m) in [("train", &train_mask), ("val", &val_mask), ("test", &test_mask)] {
            if m.len() != n {
                return Err(Error::Shape(format!("{name} mask has length {}, expected {n}", m.len())));
            }
        }
        for v in 0..n {
            let hits = [train_mask[v], val_mask[v], test_mask[v]].iter().filter(|&&b| b).count();
            if hits > 1 {
                return Err(Error::InvalidDataset(format!("node {v} appears in more than one split")));
            }
        }
        if !train_mask.iter().any(|&b| b) {
            return Err(Error::InvalidDataset("empty train split".into()));
        }
        let mut seen = vec![false; graph.num_classes()];
        for v in (0..n).filter(|&v| train_mask[v]) {
            seen[graph.labels()[v]] = true;
        }
        if let Some(c) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidDataset(format!("class {c} absent from train split")));
        }
        Ok(Dataset {
            graph,
            train_mask,
            val_mask,
            test_mask,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn labels(&self) -> &[usize] {
        self.graph.labels()
    }

    /// Same masks over a different graph on the same node set.
    pub fn with_graph(&self, graph: Graph) -> Result<Dataset> {
        Dataset::new(graph, self.train_mask.clone(), self.val_mask.clone(), self.test_mask.clone())
    }
}

pub fn mask_and(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(&x, &y)| x && y).collect()
}

pub fn mask_count(m: &[bool]) -> usize {
    m.iter().filter(|&&b| b).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy;

    fn edge_set(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().collect()
    }

    #[test]
    fn undirected_ingest_symmetrizes_and_drops_loops() {
        let (g, stats) = Graph::new(
            3,
            [(0, 1), (1, 2), (1, 1), (0, 1)],
            false,
            Array2::zeros((3, 1)),
            vec![0, 0, 0],
            1,
        )
        .unwrap();
        assert_eq!(stats, IngestStats { self_loops: 1, duplicates: 1 });
        assert_eq!(edge_set(&g), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(g.num_edges() / 2, 2);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        let err = Graph::new(2, [(0, 5)], true, Array2::zeros((2, 1)), vec![0, 0], 1).unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { id: 5, .. }));
    }

    #[test]
    fn to_undirected_cases() {
        let g = toy(2, &[(0, 1)], true, &[0, 0]);
        let u = g.to_undirected();
        assert!(!u.is_directed());
        assert_eq!(edge_set(&u), vec![(0, 1), (1, 0)]);
        let both = toy(2, &[(0, 1), (1, 0)], true, &[0, 0]).to_undirected();
        assert_eq!(both.num_edges(), 2);
        assert_eq!(u.to_undirected(), u);
    }

    #[test]
    fn intra_class_cases() {
        let tri = toy(3, &[(0, 1), (1, 2), (0, 2)], false, &[0, 0, 1]);
        let intra = tri.intra_class_graph(tri.labels());
        assert_eq!(edge_set(&intra), vec![(0, 1), (1, 0)]);

        let same = toy(3, &[(0, 1), (1, 2)], false, &[0, 0, 0]);
        assert_eq!(edge_set(&same.intra_class_graph(same.labels())), edge_set(&same));

        let bip = toy(4, &[(0, 1), (0, 3), (2, 1), (2, 3)], false, &[0, 1, 0, 1]);
        assert_eq!(bip.intra_class_graph(bip.labels()).num_edges(), 0);
    }

    #[test]
    fn directed_in_out_neighbors() {
        let g = toy(3, &[(0, 1), (2, 1), (1, 0)], true, &[0, 0, 0]);
        assert_eq!(g.out_neighbors(1), &[0]);
        assert_eq!(g.in_neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn dataset_rejects_overlap_and_missing_class() {
        let g = toy(3, &[(0, 1)], false, &[0, 1, 1]);
        let err = Dataset::new(
            g.clone(),
            vec![true, true, false],
            vec![false, true, false],
            vec![false, false, true],
        );
        assert!(err.is_err());
        let err = Dataset::new(g, vec![false, true, false], vec![true, false, false], vec![false, false, true]);
        assert!(matches!(err, Err(Error::InvalidDataset(m)) if m.contains("class 0")));
    }
}
