use super::NodeScores;
use crate::graph::Graph;

/// Power-iteration PageRank following out-edges. Mass at dangling nodes is
/// spread uniformly. Stops once the L1 change drops below `tol`.
pub fn pagerank(g: &Graph, damping: f64, tol: f64, max_iter: usize) -> NodeScores {
    assert!(damping > 0.0 && damping < 1.0, "damping must lie in (0, 1)");
    let n = g.num_nodes();
    if n == 0 {
        return NodeScores::all_defined("pagerank", Vec::new());
    }
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&v| g.out_neighbors(v).is_empty()).map(|v| x[v]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        next.iter_mut().for_each(|y| *y = base);
        for u in 0..n {
            let out = g.out_neighbors(u);
            if out.is_empty() {
                continue;
            }
            let share = damping * x[u] / out.len() as f64;
            for &v in out {
                next[v] += share;
            }
        }
        // renormalize to wash out rounding drift
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|y| *y /= total);
        let delta: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if delta < tol {
            break;
        }
    }
    NodeScores::all_defined("pagerank", x)
}

fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                k += 1;
                i += 1;
                j += 1;
            }
        }
    }
    k
}

/// Local clustering coefficient on the undirected projection. Undefined for
/// degree below 2.
pub fn clustering_coefficient(g: &Graph) -> NodeScores {
    let vals = (0..g.num_nodes()).map(|v| {
        let nb = g.neighbors(v);
        let d = nb.len();
        if d < 2 {
            return None;
        }
        let twice_tri: usize = nb.iter().map(|&u| sorted_intersection(nb, g.neighbors(u))).sum();
        Some(twice_tri as f64 / (d * (d - 1)) as f64)
    });
    NodeScores::from_options("clustering", vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_graph, toy};
    use approx::assert_abs_diff_eq;

    #[test]
    fn cycle_and_empty_are_uniform() {
        let cyc = toy(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)], true, &[0; 5]);
        for x in pagerank(&cyc, 0.85, 1e-12, 1000).values {
            assert_abs_diff_eq!(x, 0.2, epsilon = 1e-12);
        }
        let empty = toy(4, &[], true, &[0; 4]);
        for x in pagerank(&empty, 0.85, 1e-12, 1000).values {
            assert_abs_diff_eq!(x, 0.25, epsilon = 1e-12);
        }
    }

    /// Dense fixed point: (I - d M) x = (1-d)/n 1 + d/n (dangling . x) 1,
    /// solved by Gaussian elimination on the full system with sum(x) = 1.
    fn dense_pagerank(n: usize, edges: &[(usize, usize)], d: f64) -> Vec<f64> {
        let mut out = vec![0usize; n];
        for &(u, _) in edges {
            out[u] += 1;
        }
        // x_v = (1-d)/n + d * sum_{u->v} x_u / out_u + d/n * sum_{dangling u} x_u
        let mut a = vec![vec![0.0; n + 1]; n];
        for v in 0..n {
            a[v][v] += 1.0;
            for &(u, w) in edges {
                if w == v {
                    a[v][u] -= d / out[u] as f64;
                }
            }
            for u in 0..n {
                if out[u] == 0 {
                    a[v][u] -= d / n as f64;
                }
            }
            a[v][n] = (1.0 - d) / n as f64;
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for k in col..=n {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
        let s: f64 = x.iter().sum();
        x.iter().map(|v| v / s).collect()
    }

    #[test]
    fn chain_matches_dense_solve() {
        let edges = [(0, 1), (1, 2)];
        let g = toy(3, &edges, true, &[0; 3]);
        let pr = pagerank(&g, 0.85, 1e-14, 10_000);
        let oracle = dense_pagerank(3, &edges, 0.85);
        for (a, b) in pr.values.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(pr.values.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn pagerank_is_permutation_equivariant() {
        let g = random_graph(25, 0.15, 2, 1, true, 4);
        let perm: Vec<usize> = (0..25).map(|i| (i * 7 + 3) % 25).collect();
        let a = pagerank(&g, 0.85, 1e-13, 1000);
        let b = pagerank(&g.permuted(&perm), 0.85, 1e-13, 1000);
        for v in 0..25 {
            assert_abs_diff_eq!(a.values[v], b.values[perm[v]], epsilon = 1e-10);
        }
    }

    #[test]
    fn triangle_and_star() {
        let tri = toy(3, &[(0, 1), (1, 2), (2, 0)], false, &[0; 3]);
        assert_eq!(clustering_coefficient(&tri).values, vec![1.0; 3]);
        let star = toy(4, &[(0, 1), (0, 2), (0, 3)], false, &[0; 4]);
        let cc = clustering_coefficient(&star);
        assert_eq!(cc.get(0), Some(0.0));
        assert_eq!(cc.get(1), None);
    }

    #[test]
    fn clustering_matches_triple_enumeration() {
        let g = random_graph(20, 0.3, 2, 1, false, 8);
        let n = 20;
        let adj = |a: usize, b: usize| g.neighbors(a).contains(&b);
        let cc = clustering_coefficient(&g);
        for v in 0..n {
            let d = g.degree(v);
            if d < 2 {
                assert!(cc.get(v).is_none());
                continue;
            }
            let mut tri = 0;
            for u in 0..n {
                for w in u + 1..n {
                    if adj(v, u) && adj(v, w) && adj(u, w) {
                        tri += 1;
                    }
                }
            }
            assert_abs_diff_eq!(cc.values[v], 2.0 * tri as f64 / (d * (d - 1)) as f64, epsilon = 1e-15);
        }
    }
}
