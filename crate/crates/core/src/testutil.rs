use ndarray::Array2;
use rand::Rng as _;

use crate::graph::Graph;
use crate::rng;

pub fn toy(n: usize, edges: &[(usize, usize)], directed: bool, labels: &[usize]) -> Graph {
    let c = labels.iter().max().map_or(1, |m| m + 1);
    Graph::new(n, edges.iter().copied(), directed, Array2::zeros((n, 2)), labels.to_vec(), c)
        .unwrap()
        .0
}

/// Erdős–Rényi style graph with random labels and Gaussian-ish features.
pub fn random_graph(n: usize, p: f64, classes: usize, dim: usize, directed: bool, seed: u64) -> Graph {
    let mut r = rng::stream(seed, "testutil", &[]);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && (directed || u < v) && r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
    let features = Array2::from_shape_fn((n, dim), |_| r.random::<f64>() * 2.0 - 1.0);
    Graph::new(n, edges, directed, features, labels, classes).unwrap().0
}
