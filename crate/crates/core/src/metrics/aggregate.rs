use ndarray::Array2;

use crate::graph::Graph;

/// `P^hops X` with `P = D~^-1 (A + I)` on the undirected projection.
pub fn aggregate_features(g: &Graph, x: &Array2<f64>, hops: usize) -> Array2<f64> {
    assert!(hops >= 1, "hops must be at least 1");
    let mut cur = x.clone();
    for _ in 0..hops {
        let mut next = cur.clone();
        for v in 0..g.num_nodes() {
            let nb = g.neighbors(v);
            let mut row = next.row_mut(v);
            for &u in nb {
                row += &cur.row(u);
            }
            row /= (nb.len() + 1) as f64;
        }
        cur = next;
    }
    cur
}
