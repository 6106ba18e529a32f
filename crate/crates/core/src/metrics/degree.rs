use super::NodeScores;
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeProfile {
    pub d_in: NodeScores,
    pub d_out: NodeScores,
    /// `d_in + d_out`.
    pub d_und: NodeScores,
    /// `(d_in - d_out) / (d_in + d_out)`, undefined where both are zero.
    pub d_dir: NodeScores,
}

/// In/out degrees over stored edges. On undirected graphs every edge is
/// stored both ways, so `d_in == d_out` and `d_dir` is zero.
pub fn degree_profile(g: &Graph) -> DegreeProfile {
    let n = g.num_nodes();
    let d_in: Vec<f64> = (0..n).map(|v| g.in_neighbors(v).len() as f64).collect();
    let d_out: Vec<f64> = (0..n).map(|v| g.out_neighbors(v).len() as f64).collect();
    let d_und: Vec<f64> = d_in.iter().zip(&d_out).map(|(a, b)| a + b).collect();
    let d_dir = NodeScores::from_options(
        "d_dir",
        (0..n).map(|v| (d_und[v] > 0.0).then(|| (d_in[v] - d_out[v]) / d_und[v])),
    );
    DegreeProfile {
        d_in: NodeScores::all_defined("d_in", d_in),
        d_out: NodeScores::all_defined("d_out", d_out),
        d_und: NodeScores::all_defined("d_und", d_und),
        d_dir,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy;

    #[test]
    fn isolated_source_and_mixed_nodes() {
        // 0 is a pure source with out-degree 3; 4 receives 3 and sends 1; 5 isolated
        let g = toy(6, &[(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4), (4, 1)], true, &[0; 6]);
        let p = degree_profile(&g);
        assert_eq!(p.d_dir.get(0), Some(-1.0));
        assert_eq!(p.d_dir.get(4), Some(0.5));
        assert_eq!(p.d_und.values[4], 4.0);
        assert_eq!(p.d_dir.get(5), None);
        assert_eq!(p.d_und.values[5], 0.0);
    }

    #[test]
    fn undirected_has_zero_direction() {
        let g = toy(4, &[(0, 1), (1, 2), (2, 3), (0, 2)], false, &[0; 4]);
        let p = degree_profile(&g);
        for v in 0..4 {
            assert_eq!(p.d_dir.get(v), Some(0.0));
        }
    }
}
