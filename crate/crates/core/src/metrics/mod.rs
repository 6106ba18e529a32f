//! Node-level and graph-level metrics.
//!
//! Every node metric returns [`NodeScores`]: a value per node plus a mask of
//! nodes where the metric is defined. Undefined entries hold `0.0`, never NaN.
//! Unless stated otherwise, neighborhoods are taken on the undirected
//! projection.

mod aggregate;
mod centrality;
mod degree;
mod direction;
mod homophily;

pub use aggregate::aggregate_features;
pub use centrality::{clustering_coefficient, pagerank};
pub use degree::{degree_profile, DegreeProfile};
pub use direction::{
    amud, amud_with, direction_informativeness, direction_informativeness_with, pearson, Correlation,
    DirectionReport, LabelEncoding, Verdict, DI_EPSILON, INFORMATIVE_THRESHOLD,
};
pub use homophily::{
    feature_similarity, intra_degree, intra_feature_similarity, intra_label_agreement, max_neighbor_ratio,
    neighborhood_entropy, node_homophily, node_homophily_filtered,
};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeScores {
    pub metric_name: String,
    pub values: Vec<f64>,
    pub defined_mask: Vec<bool>,
}

impl NodeScores {
    pub fn new(metric_name: impl Into<String>, values: Vec<f64>, defined_mask: Vec<bool>) -> Self {
        debug_assert_eq!(values.len(), defined_mask.len());
        let values = values
            .into_iter()
            .zip(&defined_mask)
            .map(|(v, &d)| if d { v } else { 0.0 })
            .collect();
        NodeScores {
            metric_name: metric_name.into(),
            values,
            defined_mask,
        }
    }

    pub fn all_defined(metric_name: impl Into<String>, values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        NodeScores::new(metric_name, values, mask)
    }

    /// Builds scores from an optional value per node.
    pub fn from_options(metric_name: impl Into<String>, vals: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (values, mask) = vals
            .into_iter()
            .map(|o| (o.unwrap_or(0.0), o.is_some()))
            .unzip();
        NodeScores::new(metric_name, values, mask)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_defined(&self) -> usize {
        self.defined_mask.iter().filter(|&&d| d).count()
    }

    pub fn get(&self, v: usize) -> Option<f64> {
        self.defined_mask[v].then(|| self.values[v])
    }

    /// (values, labels) restricted to the defined nodes.
    pub(crate) fn defined_pairs<T: Copy>(&self, other: &[T]) -> (Vec<f64>, Vec<T>) {
        (0..self.len())
            .filter(|&v| self.defined_mask[v])
            .map(|v| (self.values[v], other[v]))
            .unzip()
    }
}
