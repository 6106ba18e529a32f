//! Sparse propagation operators.

use ndarray::Array2;

use super::config::Filter;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Row-compressed sparse square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseMatrix {
    /// `rows[v]` lists `(column, value)` for row `v`.
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut ptr = Vec::with_capacity(n + 1);
        let (mut idx, mut val) = (Vec::new(), Vec::new());
        ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                idx.push(c);
                val.push(v);
            }
            ptr.push(idx.len());
        }
        SparseMatrix { n, ptr, idx, val }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut rows = vec![Vec::new(); self.n];
        for r in 0..self.n {
            for k in self.ptr[r]..self.ptr[r + 1] {
                rows[self.idx[k]].push((r, self.val[k]));
            }
        }
        SparseMatrix::from_rows(rows)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n, self.n));
        for r in 0..self.n {
            for k in self.ptr[r]..self.ptr[r + 1] {
                d[[r, self.idx[k]]] += self.val[k];
            }
        }
        d
    }

    /// `self * x`, accumulating each row in column order.
    pub fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "sparse matmul shape");
        let f = x.ncols();
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.n * f];
        for r in 0..self.n {
            let dst = &mut out[r * f..(r + 1) * f];
            for k in self.ptr[r]..self.ptr[r + 1] {
                let w = self.val[k];
                let src = &xs[self.idx[k] * f..(self.idx[k] + 1) * f];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        Array2::from_shape_vec((self.n, f), out).expect("shape")
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.val[self.ptr[r]..self.ptr[r + 1]].iter().sum()).collect()
    }
}

/// One operator (or a forward/backward pair for the directed filter) plus
/// transposes for backprop.
#[derive(Debug, Clone)]
pub struct PropagationOperator {
    filter: Filter,
    mats: Vec<SparseMatrix>,
    transposed: Vec<SparseMatrix>,
}

fn with_self_loops(nbrs: &[usize], v: usize) -> Vec<usize> {
    let mut out = nbrs.to_vec();
    out.push(v);
    out
}

pub fn build_propagation(g: &Graph, filter: Filter) -> Result<PropagationOperator> {
    let n = g.num_nodes();
    let mats = match filter {
        Filter::Identity => Vec::new(),
        Filter::SymNorm => {
            let dt: Vec<f64> = (0..n).map(|v| (g.degree(v) + 1) as f64).collect();
            let rows = (0..n)
                .map(|v| {
                    with_self_loops(g.neighbors(v), v)
                        .into_iter()
                        .map(|u| (u, 1.0 / (dt[v] * dt[u]).sqrt()))
                        .collect()
                })
                .collect();
            vec![SparseMatrix::from_rows(rows)]
        }
        Filter::RwNorm => {
            let rows = (0..n)
                .map(|v| {
                    let w = 1.0 / (g.degree(v) + 1) as f64;
                    with_self_loops(g.neighbors(v), v).into_iter().map(|u| (u, w)).collect()
                })
                .collect();
            vec![SparseMatrix::from_rows(rows)]
        }
        Filter::HighPass => {
            let d: Vec<f64> = (0..n).map(|v| g.degree(v) as f64).collect();
            let rows = (0..n)
                .map(|v| {
                    let mut row: Vec<(usize, f64)> =
                        g.neighbors(v).iter().map(|&u| (u, -1.0 / (d[v] * d[u]).sqrt())).collect();
                    row.push((v, 1.0));
                    row
                })
                .collect();
            vec![SparseMatrix::from_rows(rows)]
        }
        Filter::Directed => {
            if !g.is_directed() {
                return Err(Error::RequiresDirected);
            }
            let norm = |nb: &[usize], v: usize| -> Vec<(usize, f64)> {
                let w = 1.0 / (nb.len() + 1) as f64;
                with_self_loops(nb, v).into_iter().map(|u| (u, w)).collect()
            };
            let fwd = (0..n).map(|v| norm(g.out_neighbors(v), v)).collect();
            let bwd = (0..n).map(|v| norm(g.in_neighbors(v), v)).collect();
            vec![SparseMatrix::from_rows(fwd), SparseMatrix::from_rows(bwd)]
        }
    };
    let transposed = mats.iter().map(SparseMatrix::transpose).collect();
    Ok(PropagationOperator {
        filter,
        mats,
        transposed,
    })
}

impl PropagationOperator {
    pub fn filter(&self) -> Filter {
        self.filter
    }

    pub fn matrices(&self) -> &[SparseMatrix] {
        &self.mats
    }

    /// Number of column blocks produced by [`apply`](Self::apply).
    pub fn num_blocks(&self) -> usize {
        self.mats.len().max(1)
    }

    /// Propagated blocks `[P_1 h, ...]` (just `[h]` for the identity filter).
    pub fn apply(&self, h: &Array2<f64>) -> Vec<Array2<f64>> {
        if self.mats.is_empty() {
            vec![h.clone()]
        } else {
            self.mats.iter().map(|m| m.matmul(h)).collect()
        }
    }

    /// Gradient of `apply` w.r.t. its input, summed over blocks.
    pub fn apply_transpose(&self, grads: &[Array2<f64>]) -> Array2<f64> {
        if self.transposed.is_empty() {
            return grads[0].clone();
        }
        let mut acc = self.transposed[0].matmul(&grads[0]);
        for (t, g) in self.transposed.iter().zip(grads).skip(1) {
            acc += &t.matmul(g);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_graph, toy};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identity_is_noop() {
        let g = random_graph(10, 0.3, 2, 3, false, 1);
        let p = build_propagation(&g, Filter::Identity).unwrap();
        assert_eq!(p.apply(g.features())[0], *g.features());
    }

    #[test]
    fn rw_on_two_clique_averages() {
        let g = toy(2, &[(0, 1)], false, &[0, 0]);
        let p = build_propagation(&g, Filter::RwNorm).unwrap();
        let x = array![[2.0, 0.0], [4.0, 2.0]];
        assert_eq!(p.apply(&x)[0], array![[3.0, 1.0], [3.0, 1.0]]);
    }

    #[test]
    fn isolated_rows() {
        let g = toy(3, &[(0, 1)], false, &[0, 0, 0]);
        let sym = build_propagation(&g, Filter::SymNorm).unwrap().matrices()[0].to_dense();
        assert_eq!(sym.row(2).to_vec(), vec![0.0, 0.0, 1.0]);
        let hp = build_propagation(&g, Filter::HighPass).unwrap().matrices()[0].to_dense();
        assert_eq!(hp.row(2).to_vec(), vec![0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(hp[[0, 1]], -1.0);
    }

    #[test]
    fn directed_requires_digraph_and_rows_sum_to_one() {
        let g = random_graph(15, 0.2, 2, 2, true, 3);
        assert!(matches!(
            build_propagation(&g.to_undirected(), Filter::Directed),
            Err(Error::RequiresDirected)
        ));
        let p = build_propagation(&g, Filter::Directed).unwrap();
        assert_eq!(p.num_blocks(), 2);
        for m in p.matrices() {
            for s in m.row_sums() {
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    /// Symmetric Jacobi eigenvalue iteration.
    fn eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _ in 0..200 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[[p, q]] * a[[p, q]];
                }
            }
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[[k, p]], a[[k, q]]);
                        a[[k, p]] = c * akp - s * akq;
                        a[[k, q]] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                        a[[p, k]] = c * apk - s * aqk;
                        a[[q, k]] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[[i, i]]).collect()
    }

    #[test]
    fn high_pass_spectrum_in_zero_two() {
        // 3-regular circulant on 12 nodes: i ~ i±1, i ~ i+6
        let mut edges = Vec::new();
        for i in 0..12 {
            edges.push((i, (i + 1) % 12));
            if i < 6 {
                edges.push((i, i + 6));
            }
        }
        let g = toy(12, &edges, false, &[0; 12]);
        assert!((0..12).all(|v| g.degree(v) == 3));
        let l = build_propagation(&g, Filter::HighPass).unwrap().matrices()[0].to_dense();
        let ev = eigenvalues(l);
        for e in &ev {
            assert!(*e >= -1e-9 && *e <= 2.0 + 1e-9, "{ev:?}");
        }
        assert!(ev.iter().any(|e| e.abs() < 1e-9));
    }

    #[test]
    fn transpose_matches_dense() {
        let g = random_graph(12, 0.3, 2, 2, true, 5);
        let p = build_propagation(&g, Filter::Directed).unwrap();
        for (m, t) in p.mats.iter().zip(&p.transposed) {
            assert_eq!(m.to_dense().t().to_owned(), t.to_dense());
        }
    }
}
