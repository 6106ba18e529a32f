//! Correlation between degree patterns and labels: AMUD (first order) and
//! Direction Informativeness.

use serde::{Deserialize, Serialize};

use super::degree_profile;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Lower clamp applied to both correlations before taking their log-ratio.
pub const DI_EPSILON: f64 = 1e-9;
/// DI above this is `Informative`; below zero is `Adverse`.
pub const INFORMATIVE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    /// Set when either input had zero variance; `r` is then 0.
    pub zero_variance: bool,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("pearson on lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(Correlation { r: 0.0, zero_variance: true });
    }
    Ok(Correlation {
        r: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        zero_variance: false,
    })
}

/// How class labels enter a correlation with a scalar node statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelEncoding {
    /// Class ids used as numbers.
    #[default]
    NumericId,
    /// Max over classes of |corr(x, 1{y = c})|.
    OneHotMax,
}

fn abs_label_corr(x: &[f64], y: &[usize], enc: LabelEncoding) -> Result<f64> {
    match enc {
        LabelEncoding::NumericId => {
            let yf: Vec<f64> = y.iter().map(|&c| c as f64).collect();
            Ok(pearson(x, &yf)?.r.abs())
        }
        LabelEncoding::OneHotMax => {
            let c = y.iter().max().map_or(0, |m| m + 1);
            let mut best = 0.0f64;
            for k in 0..c {
                let ind: Vec<f64> = y.iter().map(|&l| (l == k) as u8 as f64).collect();
                best = best.max(pearson(x, &ind)?.r.abs());
            }
            Ok(best)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Informative,
    Neutral,
    Adverse,
}

impl Verdict {
    pub fn from_di(di: f64) -> Self {
        if di > INFORMATIVE_THRESHOLD {
            Verdict::Informative
        } else if di < 0.0 {
            Verdict::Adverse
        } else {
            Verdict::Neutral
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionReport {
    pub rho_dir: f64,
    pub rho_und: f64,
    pub di: f64,
    pub amud: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmudValue {
    pub value: f64,
    /// Both correlations were (near) zero; `value` is 0.
    pub degenerate: bool,
}

/// `|rho_in - rho_out| / (rho_in + rho_out)` from the two raw correlations.
pub fn amud_from(rho_in: f64, rho_out: f64) -> AmudValue {
    let s = rho_in + rho_out;
    if s < DI_EPSILON {
        AmudValue { value: 0.0, degenerate: true }
    } else {
        AmudValue {
            value: (rho_in - rho_out).abs() / s,
            degenerate: false,
        }
    }
}

pub fn amud(g: &Graph, y: &[usize]) -> Result<AmudValue> {
    amud_with(g, y, LabelEncoding::NumericId)
}

pub fn amud_with(g: &Graph, y: &[usize], enc: LabelEncoding) -> Result<AmudValue> {
    if !g.is_directed() {
        return Err(Error::RequiresDirected);
    }
    let p = degree_profile(g);
    let rho_in = abs_label_corr(&p.d_in.values, y, enc)?;
    let rho_out = abs_label_corr(&p.d_out.values, y, enc)?;
    Ok(amud_from(rho_in, rho_out))
}

/// `rho_dir * ln(rho_dir / rho_und)` after clamping both to `[DI_EPSILON, 1]`.
pub fn di_from(rho_dir: f64, rho_und: f64) -> f64 {
    let a = rho_dir.clamp(DI_EPSILON, 1.0);
    let b = rho_und.clamp(DI_EPSILON, 1.0);
    a * (a / b).ln()
}

pub fn direction_informativeness(g: &Graph, y: &[usize]) -> Result<DirectionReport> {
    direction_informativeness_with(g, y, LabelEncoding::NumericId)
}

/// Both correlations are taken over the nodes where the normalized directed
/// degree is defined (nonzero total degree).
pub fn direction_informativeness_with(g: &Graph, y: &[usize], enc: LabelEncoding) -> Result<DirectionReport> {
    if !g.is_directed() {
        return Err(Error::RequiresDirected);
    }
    let p = degree_profile(g);
    let (d_dir, ys) = p.d_dir.defined_pairs(y);
    let (_, d_und) = p.d_dir.defined_pairs(&p.d_und.values);
    let rho_dir = abs_label_corr(&d_dir, &ys, enc)?;
    let rho_und = abs_label_corr(&d_und, &ys, enc)?;
    let di = di_from(rho_dir, rho_und);
    Ok(DirectionReport {
        rho_dir,
        rho_und,
        di,
        amud: amud_with(g, y, enc)?.value,
        verdict: Verdict::from_di(di),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, BlockSpec, DirectionMode, SynthConfig, DEFAULT_SPLIT};
    use crate::testutil::toy;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert_abs_diff_eq!(pearson(&x, &lin).unwrap().r, 1.0, epsilon = 1e-15);
        let c = pearson(&x, &[5.0; 4]).unwrap();
        assert_eq!((c.r, c.zero_variance), (0.0, true));
        assert_abs_diff_eq!(pearson(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap().r, 0.8, epsilon = 1e-15);
        assert!(pearson(&x, &[1.0]).is_err());
    }

    #[test]
    fn amud_formula() {
        assert_abs_diff_eq!(amud_from(0.6, 0.2).value, 0.5, epsilon = 1e-15);
        assert!(amud_from(0.0, 0.0).degenerate);
    }

    #[test]
    fn balanced_digraph_has_zero_amud() {
        // directed cycle plus a reversed cycle: d_in == d_out everywhere
        let g = toy(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], true, &[0, 1, 0, 1]);
        let g2 = toy(3, &[(0, 1), (1, 2), (2, 0)], true, &[0, 1, 2]);
        assert_eq!(amud(&g2, g2.labels()).unwrap().value, 0.0);
        assert!(amud(&g, g.labels()).unwrap().value <= 1.0);
        assert!(matches!(amud(&g.to_undirected(), g.labels()), Err(Error::RequiresDirected)));
    }

    #[test]
    fn di_identity_and_verdicts() {
        assert_eq!(di_from(0.4, 0.4), 0.0);
        assert_eq!(Verdict::from_di(3.24), Verdict::Informative);
        assert_eq!(Verdict::from_di(0.88), Verdict::Informative);
        assert_eq!(Verdict::from_di(0.05), Verdict::Neutral);
        assert_eq!(Verdict::from_di(-0.04), Verdict::Adverse);
        // bounded by rho_dir * ln(1 / eps)
        assert!(di_from(1.0, 0.0) <= (1.0 / DI_EPSILON).ln() + 1e-12);
    }

    fn digraph(mode: DirectionMode, seed: u64) -> crate::graph::Dataset {
        generate_synthetic(&SynthConfig {
            num_nodes: 1500,
            num_classes: 3,
            blocks: vec![BlockSpec {
                fraction: 1.0,
                p_in: 0.3,
                p_out: 0.3,
                mean_degree: 10.0,
            }],
            feature_dim: 4,
            feature_snr: 1.0,
            direction: mode,
            seed,
            degree_heterogeneity: 0.3,
            direction_strength: 0.9,
            block_feature_shift: 0.0,
            split: DEFAULT_SPLIT,
        })
        .unwrap()
    }

    #[test]
    fn synthetic_direction_regimes() {
        let ds = digraph(DirectionMode::LabelCoupled, 1);
        let rep = direction_informativeness(&ds.graph, ds.labels()).unwrap();
        assert!(rep.di > 0.5, "{rep:?}");
        assert_eq!(rep.verdict, Verdict::Informative);
        let ds = digraph(DirectionMode::LabelIndependent, 1);
        let rep = direction_informativeness(&ds.graph, ds.labels()).unwrap();
        assert!(rep.di.abs() <= 0.05, "{rep:?}");
    }

    #[test]
    fn in_degree_coupled_amud_near_one() {
        // class-1 nodes receive edges; out-degree constant across classes
        let n = 60;
        let mut edges = Vec::new();
        let labels: Vec<usize> = (0..n).map(|v| v % 2).collect();
        for v in 0..n {
            edges.push((v, (v + 1) % n));
            if labels[v] == 0 {
                // every class-0 node also sends one edge to a class-1 node
                edges.push((v, (v + 3) % n));
            } else {
                edges.push((v, (v + 2) % n));
            }
        }
        let g = toy(n, &edges, true, &labels);
        let a = amud(&g, &labels).unwrap();
        assert!(a.value > 0.9, "{a:?}");
    }
}
