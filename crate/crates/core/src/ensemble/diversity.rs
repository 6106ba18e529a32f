//! Correctness matrices and the diversity / complementarity measures built on
//! them: pairwise and set-level error inconsistency, oracle accuracy and
//! complementary gain.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::argmax_rows;

/// `c[k][n]` is true iff expert `k` predicts evaluation node `n` correctly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectnessMatrix {
    pub c: Vec<Vec<bool>>,
    pub expert_ids: Vec<String>,
    /// Node ids of the evaluation set, in column order.
    pub eval_nodes: Vec<usize>,
}

impl CorrectnessMatrix {
    /// From raw rows; all rows must share one length.
    pub fn from_rows(c: Vec<Vec<bool>>) -> Result<Self> {
        let n = c.first().map_or(0, Vec::len);
        if c.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("correctness rows differ in length".into()));
        }
        Ok(CorrectnessMatrix {
            expert_ids: (0..c.len()).map(|k| format!("expert{k}")).collect(),
            eval_nodes: (0..n).collect(),
            c,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.c.len()
    }

    pub fn num_eval(&self) -> usize {
        self.eval_nodes.len()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        let n = self.num_eval().max(1) as f64;
        self.c.iter().map(|r| r.iter().filter(|&&b| b).count() as f64 / n).collect()
    }
}

/// Argmax (lowest class id on ties) correctness of each logit matrix on the
/// nodes selected by `mask`.
pub fn correctness(zs: &[&Array2<f64>], y: &[usize], mask: &[bool]) -> Result<CorrectnessMatrix> {
    if zs.is_empty() {
        return Err(Error::Degenerate("need at least one expert".into()));
    }
    if mask.len() != y.len() {
        return Err(Error::Shape("mask and labels differ in length".into()));
    }
    let shape = zs[0].dim();
    if shape.0 != y.len() || zs.iter().any(|z| z.dim() != shape) {
        return Err(Error::Shape(format!(
            "logit matrices must all be {} x C with equal C",
            y.len()
        )));
    }
    let eval_nodes: Vec<usize> = (0..y.len()).filter(|&v| mask[v]).collect();
    let c = zs
        .iter()
        .map(|z| {
            let pred = argmax_rows(z);
            eval_nodes.iter().map(|&v| pred[v] == y[v]).collect()
        })
        .collect();
    Ok(CorrectnessMatrix {
        c,
        expert_ids: (0..zs.len()).map(|k| format!("expert{k}")).collect(),
        eval_nodes,
    })
}

/// Pairwise EI (mean disagreement in correctness) and the set-level EI: the
/// fraction of nodes where at least one expert is right and one is wrong.
pub fn error_inconsistency(cm: &CorrectnessMatrix) -> Result<(Array2<f64>, f64)> {
    let k = cm.num_experts();
    if k < 2 {
        return Err(Error::Degenerate("error inconsistency needs at least two experts".into()));
    }
    let n = cm.num_eval();
    if n == 0 {
        return Err(Error::Degenerate("empty evaluation set".into()));
    }
    let nf = n as f64;
    let mut pair = Array2::zeros((k, k));
    for i in 0..k {
        for j in i + 1..k {
            let d = cm.c[i].iter().zip(&cm.c[j]).filter(|(a, b)| a != b).count() as f64 / nf;
            pair[[i, j]] = d;
            pair[[j, i]] = d;
        }
    }
    let mixed = (0..n)
        .filter(|&v| {
            let any = cm.c.iter().any(|r| r[v]);
            let all = cm.c.iter().all(|r| r[v]);
            any && !all
        })
        .count();
    Ok((pair, mixed as f64 / nf))
}

/// Oracle (upper-bound) accuracy and its gain over the best single expert.
/// `accs` must agree with the row means of `cm`.
pub fn oracle_and_cg(cm: &CorrectnessMatrix, accs: &[f64]) -> Result<(f64, f64)> {
    let own = cm.accuracies();
    if accs.len() != own.len() || accs.iter().zip(&own).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Invariant("accuracies inconsistent with correctness matrix".into()));
    }
    let n = cm.num_eval();
    if n == 0 {
        return Err(Error::Degenerate("empty evaluation set".into()));
    }
    let hit = (0..n).filter(|&v| cm.c.iter().any(|r| r[v])).count();
    let oracle = hit as f64 / n as f64;
    let best = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((oracle, oracle - best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cm(rows: &[&[u8]]) -> CorrectnessMatrix {
        CorrectnessMatrix::from_rows(rows.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect()).unwrap()
    }

    #[test]
    fn identical_experts_have_zero_ei() {
        let m = cm(&[&[1, 0, 1], &[1, 0, 1]]);
        let (p, s) = error_inconsistency(&m).unwrap();
        assert_eq!(p, Array2::<f64>::zeros((2, 2)));
        assert_eq!(s, 0.0);
    }

    #[test]
    fn pairwise_example() {
        let (p, s) = error_inconsistency(&cm(&[&[1, 0, 1, 0], &[1, 1, 0, 0]])).unwrap();
        assert_eq!(p[[0, 1]], 0.5);
        assert_eq!(s, 0.5);
    }

    #[test]
    fn oracle_examples() {
        let single = cm(&[&[1, 0, 1, 1]]);
        assert_eq!(oracle_and_cg(&single, &single.accuracies()).unwrap(), (0.75, 0.0));
        let m = cm(&[&[1, 0, 1], &[0, 0, 1]]);
        let (o, g) = oracle_and_cg(&m, &m.accuracies()).unwrap();
        assert!((o - 2.0 / 3.0).abs() < 1e-15 && g.abs() < 1e-15);
        let m = cm(&[&[1, 1, 0, 0], &[0, 0, 1, 1]]);
        assert_eq!(oracle_and_cg(&m, &m.accuracies()).unwrap(), (1.0, 0.5));
        assert!(oracle_and_cg(&m, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn correctness_tie_break_and_shapes() {
        let z = array![[0.2, 0.2], [0.0, 1.0]];
        let m = correctness(&[&z], &[0, 0], &[true, true]).unwrap();
        assert_eq!(m.c, vec![vec![true, false]]);
        let bad = array![[0.0, 1.0, 2.0]];
        assert!(correctness(&[&z, &bad], &[0, 0], &[true, true]).is_err());
        assert!(error_inconsistency(&m).is_err());
    }
}
