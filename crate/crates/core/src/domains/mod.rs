//! Domain assignment: partitioning nodes into groups by a single node metric,
//! by k-means over (aggregated) features, or at random, and measuring how much
//! domain-specialized experts gain over a full-data expert.

mod eval;
mod partition;

pub use eval::{
    evaluate_assignment, evaluate_assignment_with, evaluate_experts, train_domain_experts, DomainEvalReport,
    DomainExperts, DomainResult, TrainingMode,
};
pub use partition::{
    assign_by_method, kmeans, kmeans_partition, quantile_partition, random_partition, KMeans, PartitionMethod,
};

use serde::Serialize;

use crate::error::{Error, Result};

/// A hard partition of the nodes into `num_domains` groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainAssignment {
    pub assignment: Vec<usize>,
    pub num_domains: usize,
    /// `|domain m| / N`.
    pub weights: Vec<f64>,
    pub source: String,
}

impl DomainAssignment {
    pub fn new(assignment: Vec<usize>, num_domains: usize, source: impl Into<String>) -> Result<Self> {
        if num_domains < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 domains, got {num_domains}")));
        }
        if assignment.is_empty() {
            return Err(Error::InvalidConfig("empty domain assignment".into()));
        }
        if let Some(&bad) = assignment.iter().find(|&&d| d >= num_domains) {
            return Err(Error::Invariant(format!("domain id {bad} out of range 0..{num_domains}")));
        }
        let mut counts = vec![0usize; num_domains];
        for &d in &assignment {
            counts[d] += 1;
        }
        let n = assignment.len() as f64;
        Ok(DomainAssignment {
            weights: counts.iter().map(|&c| c as f64 / n).collect(),
            assignment,
            num_domains,
            source: source.into(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_domains];
        for &d in &self.assignment {
            counts[d] += 1;
        }
        counts
    }

    pub fn mask(&self, m: usize) -> Vec<bool> {
        self.assignment.iter().map(|&d| d == m).collect()
    }
}

/// Splits `n` items into `m` contiguous groups whose sizes differ by at most
/// one; the first groups take the remainder.
pub(crate) fn balanced_cuts(n: usize, m: usize) -> Vec<usize> {
    let (base, rem) = (n / m, n % m);
    let mut out = Vec::with_capacity(n);
    for g in 0..m {
        out.extend(std::iter::repeat_n(g, base + usize::from(g < rem)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_follow_counts() {
        let d = DomainAssignment::new(vec![0, 1, 1, 0, 1], 2, "t").unwrap();
        assert_eq!(d.sizes(), vec![2, 3]);
        assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(DomainAssignment::new(vec![0, 2], 2, "t").is_err());
        assert!(DomainAssignment::new(vec![0, 0], 1, "t").is_err());
    }

    #[test]
    fn cuts_are_balanced() {
        assert_eq!(balanced_cuts(7, 3), vec![0, 0, 0, 1, 1, 2, 2]);
        assert_eq!(balanced_cuts(4, 2), vec![0, 0, 1, 1]);
    }
}
