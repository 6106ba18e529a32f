use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{balanced_cuts, DomainAssignment};
use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::metrics::{self, NodeScores};
use crate::rng;

/// Sorts the defined nodes by `(score, seeded jitter)` and cuts them into `m`
/// near-equal groups. Undefined nodes join domain 0.
pub fn quantile_partition(scores: &NodeScores, m: usize, tie_seed: u64) -> Result<DomainAssignment> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 domains, got {m}")));
    }
    let defined = scores.num_defined();
    if m > defined {
        return Err(Error::Degenerate(format!(
            "{m} domains requested but {} defines only {defined} nodes",
            scores.metric_name
        )));
    }
    let n = scores.len();
    let mut jitter: Vec<usize> = (0..n).collect();
    jitter.shuffle(&mut rng::stream(tie_seed, "quantile-ties", &[]));
    let mut order: Vec<usize> = (0..n).filter(|&v| scores.defined_mask[v]).collect();
    order.sort_by(|&a, &b| {
        scores.values[a]
            .total_cmp(&scores.values[b])
            .then(jitter[a].cmp(&jitter[b]))
    });
    let mut assignment = vec![0; n];
    for (&v, d) in order.iter().zip(balanced_cuts(defined, m)) {
        assignment[v] = d;
    }
    DomainAssignment::new(assignment, m, format!("quantile:{}", scores.metric_name))
}

/// Uniform random partition with sizes differing by at most one.
pub fn random_partition(n: usize, m: usize, seed: u64) -> Result<DomainAssignment> {
    if n < m {
        return Err(Error::InvalidConfig(format!("cannot split {n} nodes into {m} domains")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, "random-partition", &[]));
    let mut assignment = vec![0; n];
    for (&v, d) in perm.iter().zip(balanced_cuts(n, m)) {
        assignment[v] = d;
    }
    DomainAssignment::new(assignment, m, "random")
}

#[derive(Debug, Clone)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.outer_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are
/// re-seeded with the point farthest from its current center.
pub fn kmeans(x: &Array2<f64>, m: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    if m < 1 || max_iter < 1 {
        return Err(Error::InvalidConfig("k-means needs m >= 1 and max_iter >= 1".into()));
    }
    let n = x.nrows();
    let distinct: HashSet<Vec<u64>> = x
        .outer_iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    if m > distinct.len() {
        return Err(Error::Degenerate(format!(
            "{m} clusters requested but only {} distinct feature rows",
            distinct.len()
        )));
    }
    let mut rng = rng::stream(seed, "kmeans-init", &[]);
    let mut centers = Array2::zeros((m, x.ncols()));
    centers.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x.outer_iter().map(|r| sq_dist(r, centers.row(0))).collect();
    for k in 1..m {
        let total: f64 = d2.iter().sum();
        let mut t = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (v, &d) in d2.iter().enumerate() {
            if d > 0.0 && t < d {
                pick = v;
                break;
            }
            t -= d;
        }
        // Guard against landing on an existing center through rounding.
        if d2[pick] == 0.0 {
            pick = (0..n).max_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(b.cmp(&a))).unwrap_or(0);
        }
        centers.row_mut(k).assign(&x.row(pick));
        for (v, r) in x.outer_iter().enumerate() {
            d2[v] = d2[v].min(sq_dist(r, centers.row(k)));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for (v, r) in x.outer_iter().enumerate() {
            let (k, d) = nearest(r, &centers);
            dist[v] = d;
            if labels[v] != k {
                labels[v] = k;
                changed = true;
            }
        }
        let mut counts = vec![0usize; m];
        for &k in &labels {
            counts[k] += 1;
        }
        for k in 0..m {
            if counts[k] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&v| counts[labels[v]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(v) = far {
                counts[labels[v]] -= 1;
                labels[v] = k;
                counts[k] = 1;
                dist[v] = 0.0;
                changed = true;
            }
        }
        centers.fill(0.0);
        for (v, r) in x.outer_iter().enumerate() {
            let mut c = centers.row_mut(labels[v]);
            c += &r;
        }
        for (k, mut c) in centers.outer_iter_mut().enumerate() {
            c /= counts[k] as f64;
        }
        if !changed {
            break;
        }
    }
    let inertia = x
        .outer_iter()
        .zip(&labels)
        .map(|(r, &k)| sq_dist(r, centers.row(k)))
        .sum();
    Ok(KMeans {
        labels,
        centers,
        inertia,
        iterations,
    })
}

pub fn kmeans_partition(x: &Array2<f64>, m: usize, seed: u64, max_iter: usize) -> Result<DomainAssignment> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 domains, got {m}")));
    }
    let km = kmeans(x, m, seed, max_iter)?;
    DomainAssignment::new(km.labels, m, "kmeans")
}

/// Assignment functions exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMethod {
    Degree,
    Pagerank,
    Clustercoef,
    Homophily,
    HomophilyFiltered,
    IntraDegree,
    IntraFeat,
    IntraLabel,
    Kmeans,
    KmeansAggr,
    Random,
    NeighEntropy,
    MaxNeighRatio,
}

impl PartitionMethod {
    pub const ALL: [PartitionMethod; 13] = [
        PartitionMethod::Degree,
        PartitionMethod::Pagerank,
        PartitionMethod::Clustercoef,
        PartitionMethod::Homophily,
        PartitionMethod::HomophilyFiltered,
        PartitionMethod::IntraDegree,
        PartitionMethod::IntraFeat,
        PartitionMethod::IntraLabel,
        PartitionMethod::Kmeans,
        PartitionMethod::KmeansAggr,
        PartitionMethod::Random,
        PartitionMethod::NeighEntropy,
        PartitionMethod::MaxNeighRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartitionMethod::Degree => "degree",
            PartitionMethod::Pagerank => "pagerank",
            PartitionMethod::Clustercoef => "clustercoef",
            PartitionMethod::Homophily => "homophily",
            PartitionMethod::HomophilyFiltered => "homophily-filtered",
            PartitionMethod::IntraDegree => "intra-degree",
            PartitionMethod::IntraFeat => "intra-feat",
            PartitionMethod::IntraLabel => "intra-label",
            PartitionMethod::Kmeans => "kmeans",
            PartitionMethod::KmeansAggr => "kmeans-aggr",
            PartitionMethod::Random => "random",
            PartitionMethod::NeighEntropy => "neigh-entropy",
            PartitionMethod::MaxNeighRatio => "max-neigh-ratio",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown partition method `{s}`")))
    }

    /// Node scores behind a metric-based method; `None` for k-means/random.
    pub fn scores(self, ds: &Dataset) -> Option<NodeScores> {
        let g = &ds.graph;
        let y = ds.labels();
        Some(match self {
            PartitionMethod::Degree => {
                NodeScores::all_defined("degree", (0..g.num_nodes()).map(|v| g.degree(v) as f64).collect())
            }
            PartitionMethod::Pagerank => metrics::pagerank(g, 0.85, 1e-10, 200),
            PartitionMethod::Clustercoef => metrics::clustering_coefficient(g),
            PartitionMethod::Homophily => metrics::node_homophily(g, y),
            PartitionMethod::HomophilyFiltered => {
                let known: Vec<bool> = ds.train_mask.iter().zip(&ds.val_mask).map(|(&a, &b)| a || b).collect();
                metrics::node_homophily_filtered(g, y, &known)
            }
            PartitionMethod::IntraDegree => metrics::intra_degree(g, y),
            PartitionMethod::IntraFeat => metrics::intra_feature_similarity(g, g.features(), y, true),
            PartitionMethod::IntraLabel => metrics::intra_label_agreement(g, y),
            PartitionMethod::NeighEntropy => metrics::neighborhood_entropy(g, y),
            PartitionMethod::MaxNeighRatio => metrics::max_neighbor_ratio(g, y),
            PartitionMethod::Kmeans | PartitionMethod::KmeansAggr | PartitionMethod::Random => return None,
        })
    }
}

pub const KMEANS_MAX_ITER: usize = 100;

/// Builds an `m`-domain assignment for `ds` with the given method.
pub fn assign_by_method(ds: &Dataset, method: PartitionMethod, m: usize, seed: u64) -> Result<DomainAssignment> {
    let g = &ds.graph;
    let mut dom = match method {
        PartitionMethod::Random => random_partition(g.num_nodes(), m, seed)?,
        PartitionMethod::Kmeans => kmeans_partition(g.features(), m, seed, KMEANS_MAX_ITER)?,
        PartitionMethod::KmeansAggr => {
            let agg = metrics::aggregate_features(g, g.features(), 2);
            kmeans_partition(&agg, m, seed, KMEANS_MAX_ITER)?
        }
        _ => {
            let scores = method.scores(ds).expect("metric-based method");
            quantile_partition(&scores, m, seed)?
        }
    };
    dom.source = method.name().to_string();
    Ok(dom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SynthConfig};
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quantile_sorted_scores() {
        let s = NodeScores::all_defined("s", (0..10).map(f64::from).collect());
        let d = quantile_partition(&s, 2, 0).unwrap();
        assert_eq!(d.assignment, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn quantile_ties_depend_on_seed_only() {
        let s = NodeScores::all_defined("s", vec![1.0; 20]);
        let a = quantile_partition(&s, 2, 7).unwrap();
        assert_eq!(a.sizes(), vec![10, 10]);
        assert_eq!(a, quantile_partition(&s, 2, 7).unwrap());
        assert_ne!(a.assignment, quantile_partition(&s, 2, 8).unwrap().assignment);
    }

    #[test]
    fn quantile_undefined_and_monotone() {
        let s = NodeScores::from_options("s", vec![Some(3.0), None, Some(1.0), Some(2.0), Some(0.5), None]);
        let d = quantile_partition(&s, 2, 1).unwrap();
        assert_eq!(d.assignment, vec![1, 0, 0, 1, 0, 0]);
        assert!(quantile_partition(&s, 5, 1).is_err());
    }

    #[test]
    fn random_sizes() {
        assert_eq!(random_partition(10, 2, 3).unwrap().sizes(), vec![5, 5]);
        let mut s = random_partition(7, 3, 3).unwrap().sizes();
        s.sort_unstable();
        assert_eq!(s, vec![2, 2, 3]);
        assert_eq!(random_partition(50, 3, 9).unwrap(), random_partition(50, 3, 9).unwrap());
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut r = rng::stream(5, "blobs", &[]);
        let x = Array2::from_shape_fn((60, 3), |(i, _)| {
            let c = if i % 2 == 0 { -20.0 } else { 20.0 };
            let e: f64 = StandardNormal.sample(&mut r);
            c + e
        });
        let d = kmeans_partition(&x, 2, 11, 50).unwrap();
        for i in 0..60 {
            assert_eq!(d.assignment[i] == d.assignment[0], i % 2 == 0);
        }
        assert_eq!(d, kmeans_partition(&x, 2, 11, 50).unwrap());
    }

    #[test]
    fn kmeans_one_point_per_cluster() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i * 3 + j) as f64);
        let km = kmeans(&x, 6, 0, 10).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut l = km.labels.clone();
        l.sort_unstable();
        assert_eq!(l, (0..6).collect::<Vec<_>>());
        let dup = Array2::from_elem((5, 2), 1.0);
        assert!(kmeans(&dup, 2, 0, 10).is_err());
    }

    #[test]
    fn homophily_split_recovers_regimes() {
        let cfg = SynthConfig::two_regime(1000, 3);
        let ds = generate_synthetic(&cfg).unwrap();
        let d = assign_by_method(&ds, PartitionMethod::Homophily, 2, 0).unwrap();
        for (b, r) in cfg.block_ranges().into_iter().enumerate() {
            let len = r.len() as f64;
            let hi = r.filter(|&v| d.assignment[v] == 1).count() as f64 / len;
            let frac = if b == 0 { hi } else { 1.0 - hi };
            assert!(frac >= 0.9, "block {b}: {frac}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in PartitionMethod::ALL {
            assert_eq!(PartitionMethod::parse(m.name()).unwrap(), m);
        }
    }
}
