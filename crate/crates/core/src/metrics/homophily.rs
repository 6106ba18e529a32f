//! Label-aware neighborhood metrics, including the intra-class family.
//!
//! The intra-class metrics are computed on the graph restricted to edges
//! whose endpoints share a label. Node homophily is the intra-class degree
//! normalized by the full degree.

use ndarray::{Array2, ArrayView1};

use super::NodeScores;
use crate::graph::Graph;

fn label_counts(g: &Graph, y: &[usize], v: usize, num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_classes];
    for &u in g.neighbors(v) {
        counts[y[u]] += 1;
    }
    counts
}

fn num_classes(g: &Graph, y: &[usize]) -> usize {
    y.iter().max().map_or(0, |m| m + 1).max(g.num_classes())
}

/// Fraction of (undirected) neighbors sharing the node's label.
pub fn node_homophily(g: &Graph, y: &[usize]) -> NodeScores {
    let vals = (0..g.num_nodes()).map(|v| {
        let nb = g.neighbors(v);
        if nb.is_empty() {
            return None;
        }
        let same = nb.iter().filter(|&&u| y[u] == y[v]).count();
        Some(same as f64 / nb.len() as f64)
    });
    NodeScores::from_options("homophily", vals)
}

/// Node homophily using only the labels in `known`: neighbors with unknown
/// labels are ignored and nodes with unknown labels are undefined.
pub fn node_homophily_filtered(g: &Graph, y: &[usize], known: &[bool]) -> NodeScores {
    let vals = (0..g.num_nodes()).map(|v| {
        if !known[v] {
            return None;
        }
        let nb: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| known[u]).collect();
        if nb.is_empty() {
            return None;
        }
        let same = nb.iter().filter(|&&u| y[u] == y[v]).count();
        Some(same as f64 / nb.len() as f64)
    });
    NodeScores::from_options("homophily-filtered", vals)
}

/// Shannon entropy (natural log) of the neighbor label distribution.
pub fn neighborhood_entropy(g: &Graph, y: &[usize]) -> NodeScores {
    let c = num_classes(g, y);
    let vals = (0..g.num_nodes()).map(|v| {
        let d = g.degree(v);
        if d == 0 {
            return None;
        }
        let h = label_counts(g, y, v, c)
            .into_iter()
            .filter(|&k| k > 0)
            .map(|k| {
                let p = k as f64 / d as f64;
                -p * p.ln()
            })
            .sum::<f64>();
        Some(h.max(0.0))
    });
    NodeScores::from_options("neigh-entropy", vals)
}

/// Largest single-class share of the neighborhood.
pub fn max_neighbor_ratio(g: &Graph, y: &[usize]) -> NodeScores {
    let c = num_classes(g, y);
    let vals = (0..g.num_nodes()).map(|v| {
        let d = g.degree(v);
        (d > 0).then(|| *label_counts(g, y, v, c).iter().max().unwrap() as f64 / d as f64)
    });
    NodeScores::from_options("max-neigh-ratio", vals)
}

/// Degree in the intra-class graph.
pub fn intra_degree(g: &Graph, y: &[usize]) -> NodeScores {
    let intra = g.intra_class_graph(y);
    NodeScores::all_defined(
        "intra-degree",
        (0..g.num_nodes()).map(|v| intra.degree(v) as f64).collect(),
    )
}

fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b)
}

fn l2_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

fn mean_neighbor_dot(
    name: &str,
    nbrs: impl Fn(usize) -> Vec<usize>,
    x: &Array2<f64>,
    n: usize,
) -> NodeScores {
    let vals = (0..n).map(|v| {
        let nb = nbrs(v);
        if nb.is_empty() {
            return None;
        }
        let s: f64 = nb.iter().map(|&u| dot(x.row(u), x.row(v))).sum();
        Some(s / nb.len() as f64)
    });
    NodeScores::from_options(name, vals)
}

/// Mean dot product between a node's features and those of its intra-class
/// neighbors. With `normalize`, rows are L2-normalized first (cosine).
pub fn intra_feature_similarity(g: &Graph, x: &Array2<f64>, y: &[usize], normalize: bool) -> NodeScores {
    let owned;
    let x = if normalize {
        owned = l2_rows(x);
        &owned
    } else {
        x
    };
    mean_neighbor_dot(
        "intra-feat",
        |v| g.neighbors(v).iter().copied().filter(|&u| y[u] == y[v]).collect(),
        x,
        g.num_nodes(),
    )
}

/// Label-free counterpart over all neighbors.
pub fn feature_similarity(g: &Graph, x: &Array2<f64>, normalize: bool) -> NodeScores {
    let owned;
    let x = if normalize {
        owned = l2_rows(x);
        &owned
    } else {
        x
    };
    mean_neighbor_dot("feat-sim", |v| g.neighbors(v).to_vec(), x, g.num_nodes())
}

/// Mean agreement `<y~_u, y~_v>` over intra-class neighbors, where `y~_v`
/// counts neighbor labels in the full graph.
pub fn intra_label_agreement(g: &Graph, y: &[usize]) -> NodeScores {
    let c = num_classes(g, y);
    let n = g.num_nodes();
    let counts = Array2::from_shape_fn((n, c), |(v, k)| {
        g.neighbors(v).iter().filter(|&&u| y[u] == k).count() as f64
    });
    mean_neighbor_dot(
        "intra-label",
        |v| g.neighbors(v).iter().copied().filter(|&u| y[u] == y[v]).collect(),
        &counts,
        n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_graph, toy};
    use approx::assert_abs_diff_eq;

    #[test]
    fn homophily_basic() {
        let g = toy(4, &[(0, 1), (0, 2), (0, 3)], false, &[0, 0, 0, 1]);
        let h = node_homophily(&g, g.labels());
        assert_abs_diff_eq!(h.values[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(h.get(1), Some(1.0));
        let iso = toy(2, &[], false, &[0, 1]);
        assert_eq!(node_homophily(&iso, iso.labels()).num_defined(), 0);
    }

    #[test]
    fn homophily_equals_intra_over_degree() {
        let g = random_graph(200, 0.03, 3, 2, false, 1);
        let h = node_homophily(&g, g.labels());
        let k = intra_degree(&g, g.labels());
        for v in 0..200 {
            let d = g.degree(v);
            if d > 0 {
                assert!((h.values[v] - k.values[v] / d as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn entropy_and_ratio() {
        // node 0 has neighbor labels (0,0,0,1)
        let g = toy(5, &[(0, 1), (0, 2), (0, 3), (0, 4)], false, &[0, 0, 0, 0, 1]);
        let e = neighborhood_entropy(&g, g.labels());
        assert_abs_diff_eq!(e.values[0], -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[0], 0.5623, epsilon = 1e-4);
        assert_eq!(e.get(1), Some(0.0));
        assert_eq!(max_neighbor_ratio(&g, g.labels()).values[0], 0.75);
        assert_eq!(max_neighbor_ratio(&g, g.labels()).values[1], 1.0);

        let even = toy(3, &[(0, 1), (0, 2)], false, &[0, 0, 1]);
        assert_abs_diff_eq!(neighborhood_entropy(&even, even.labels()).values[0], 2f64.ln(), epsilon = 1e-15);
        assert_eq!(max_neighbor_ratio(&even, even.labels()).values[0], 0.5);
    }

    #[test]
    fn intra_degree_cases() {
        let tri = toy(3, &[(0, 1), (1, 2), (0, 2)], false, &[0, 0, 1]);
        assert_eq!(intra_degree(&tri, tri.labels()).values, vec![1.0, 1.0, 0.0]);
        let bip = toy(4, &[(0, 1), (2, 3)], false, &[0, 1, 0, 1]);
        assert_eq!(intra_degree(&bip, bip.labels()).values, vec![0.0; 4]);
        let same = toy(3, &[(0, 1), (1, 2)], false, &[0, 0, 0]);
        assert_eq!(intra_degree(&same, same.labels()).values, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn intra_feature_cases() {
        let x = ndarray::array![[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]];
        let g = toy(3, &[(0, 1), (0, 2)], false, &[0, 0, 1]).with_features(x).unwrap();
        let s = intra_feature_similarity(&g, g.features(), g.labels(), false);
        assert_eq!(s.get(0), Some(2.0));
        assert_eq!(s.get(2), None);

        let x = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
        let g = toy(2, &[(0, 1)], false, &[0, 0]).with_features(x).unwrap();
        assert_eq!(intra_feature_similarity(&g, g.features(), g.labels(), false).values, vec![0.0, 0.0]);

        // two intra-class neighbors with dot products 1 and 3
        let x = ndarray::array![[1.0, 0.0], [1.0, 5.0], [3.0, -2.0]];
        let g = toy(3, &[(0, 1), (0, 2)], false, &[0, 0, 0]).with_features(x).unwrap();
        assert_eq!(intra_feature_similarity(&g, g.features(), g.labels(), false).get(0), Some(2.0));
        let cos = intra_feature_similarity(&g, g.features(), g.labels(), true);
        assert!(cos.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn label_agreement_pair() {
        let g = toy(2, &[(0, 1)], false, &[0, 0]);
        let a = intra_label_agreement(&g, g.labels());
        assert_eq!(a.values, vec![1.0, 1.0]);
        let g = toy(2, &[(0, 1)], false, &[0, 1]);
        assert_eq!(intra_label_agreement(&g, g.labels()).num_defined(), 0);
    }

    #[test]
    fn label_agreement_matches_dense() {
        let g = random_graph(10, 0.4, 3, 1, false, 5);
        let y = g.labels();
        let n = 10;
        let mut a = vec![vec![0.0; n]; n];
        for (u, v) in g.edges() {
            a[u][v] = 1.0;
        }
        let onehot: Vec<Vec<f64>> = (0..n).map(|v| (0..3).map(|k| (y[v] == k) as u8 as f64).collect()).collect();
        // Y~ = A Y
        let yt: Vec<Vec<f64>> = (0..n)
            .map(|v| (0..3).map(|k| (0..n).map(|u| a[v][u] * onehot[u][k]).sum()).collect())
            .collect();
        let got = intra_label_agreement(&g, y);
        for v in 0..n {
            let intra: Vec<usize> = (0..n).filter(|&u| a[v][u] == 1.0 && y[u] == y[v]).collect();
            if intra.is_empty() {
                assert!(got.get(v).is_none());
                continue;
            }
            let s: f64 = intra
                .iter()
                .map(|&u| (0..3).map(|k| yt[u][k] * yt[v][k]).sum::<f64>())
                .sum();
            assert_abs_diff_eq!(got.values[v], s / intra.len() as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn filtered_homophily_ignores_unknown() {
        let g = toy(4, &[(0, 1), (0, 2), (0, 3)], false, &[0, 0, 1, 1]);
        let known = [true, true, false, true];
        let h = node_homophily_filtered(&g, g.labels(), &known);
        assert_eq!(h.get(0), Some(0.5));
        assert_eq!(h.get(2), None);
    }
}
