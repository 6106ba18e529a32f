use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domains::{assign_by_method, evaluate_experts, train_domain_experts, PartitionMethod, TrainingMode};
use crate::ensemble::{evaluate_expert_set, EnsembleConfig, EnsembleReport};
use crate::error::{Error, Result};
use crate::experts::{train_expert, Expert, ExpertConfig, FineTuneConfig, Filter, Skip};
use crate::graph::Dataset;
use crate::rng;

pub const MAX_EXPERTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Reinit,
    Hparam,
    Arch,
    Direct,
    Dataset,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Reinit,
        Category::Hparam,
        Category::Arch,
        Category::Direct,
        Category::Dataset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Reinit => "REINIT",
            Category::Hparam => "HPARAM",
            Category::Arch => "ARCH",
            Category::Direct => "DIRECT",
            Category::Dataset => "DATASET",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// How the `K` experts of a strategy differ from the base config. Every
/// expert also gets its own derived seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    Seeds { count: usize },
    Dropout { values: Vec<f64> },
    HiddenDim { values: Vec<usize> },
    Epochs { values: Vec<usize> },
    LearningRate { values: Vec<f64> },
    Depth { values: Vec<usize> },
    Filter { values: Vec<Filter> },
    Skip { values: Vec<Skip> },
    /// One expert with the directed filter and one with `undirected`.
    Direction { undirected: Filter },
    /// One expert per domain of an `m`-way partition.
    Partition {
        method: PartitionMethod,
        domains: usize,
        mode: TrainingMode,
        #[serde(default)]
        finetune: FineTuneConfig,
    },
}

impl Perturbation {
    pub fn num_experts(&self) -> usize {
        match self {
            Perturbation::Seeds { count } => *count,
            Perturbation::Dropout { values } | Perturbation::LearningRate { values } => values.len(),
            Perturbation::HiddenDim { values } | Perturbation::Epochs { values } | Perturbation::Depth { values } => {
                values.len()
            }
            Perturbation::Filter { values } => values.len(),
            Perturbation::Skip { values } => values.len(),
            Perturbation::Direction { .. } => 2,
            Perturbation::Partition { domains, .. } => *domains,
        }
    }

    fn fits(&self, cat: Category) -> bool {
        matches!(
            (cat, self),
            (Category::Reinit, Perturbation::Seeds { .. })
                | (
                    Category::Hparam,
                    Perturbation::Dropout { .. }
                        | Perturbation::HiddenDim { .. }
                        | Perturbation::Epochs { .. }
                        | Perturbation::LearningRate { .. }
                )
                | (
                    Category::Arch,
                    Perturbation::Depth { .. } | Perturbation::Filter { .. } | Perturbation::Skip { .. }
                )
                | (Category::Direct, Perturbation::Direction { .. })
                | (Category::Dataset, Perturbation::Partition { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: String,
    pub category: Category,
    #[serde(default)]
    pub base: ExpertConfig,
    pub perturbation: Perturbation,
    /// Falls back to the suite-level settings when absent.
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    /// Restricts the strategy to these suite datasets; all when absent.
    #[serde(default)]
    pub datasets: Option<Vec<String>>,
}

impl StrategySpec {
    pub fn num_experts(&self) -> usize {
        self.perturbation.num_experts()
    }

    pub fn applies_to(&self, dataset: &str) -> bool {
        self.datasets.as_ref().is_none_or(|ds| ds.iter().any(|d| d == dataset))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_experts();
        if !(1..=MAX_EXPERTS).contains(&k) {
            return Err(Error::InvalidConfig(format!(
                "strategy {}: {k} experts, expected 1..={MAX_EXPERTS}",
                self.name
            )));
        }
        if !self.perturbation.fits(self.category) {
            return Err(Error::InvalidConfig(format!(
                "strategy {}: perturbation does not belong to category {}",
                self.name,
                self.category.name()
            )));
        }
        if let Perturbation::Direction { undirected } = &self.perturbation {
            if *undirected == Filter::Directed {
                return Err(Error::InvalidConfig(format!(
                    "strategy {}: the undirected expert cannot use the directed filter",
                    self.name
                )));
            }
        }
        for cfg in self.expert_configs(0) {
            cfg.validate()
                .map_err(|e| Error::InvalidConfig(format!("strategy {}: {e}", self.name)))?;
        }
        Ok(())
    }

    /// Configs of the independently trained experts (not used by DATASET,
    /// whose experts share the base config).
    pub fn expert_configs(&self, seed: u64) -> Vec<ExpertConfig> {
        let base = &self.base;
        let mut out: Vec<ExpertConfig> = match &self.perturbation {
            Perturbation::Seeds { count } => vec![base.clone(); *count],
            Perturbation::Dropout { values } => values
                .iter()
                .map(|&dropout| ExpertConfig { dropout, ..base.clone() })
                .collect(),
            Perturbation::HiddenDim { values } => values
                .iter()
                .map(|&hidden_dim| ExpertConfig { hidden_dim, ..base.clone() })
                .collect(),
            Perturbation::Epochs { values } => values
                .iter()
                .map(|&epochs| ExpertConfig { epochs, ..base.clone() })
                .collect(),
            Perturbation::LearningRate { values } => values
                .iter()
                .map(|&learning_rate| ExpertConfig { learning_rate, ..base.clone() })
                .collect(),
            Perturbation::Depth { values } => values.iter().map(|&d| base.clone().with_depth(d)).collect(),
            Perturbation::Filter { values } => values
                .iter()
                .map(|&filter| ExpertConfig { filter, ..base.clone() })
                .collect(),
            Perturbation::Skip { values } => values
                .iter()
                .map(|&skip| ExpertConfig { skip, ..base.clone() })
                .collect(),
            Perturbation::Direction { undirected } => vec![
                ExpertConfig {
                    filter: Filter::Directed,
                    ..base.clone()
                },
                ExpertConfig {
                    filter: *undirected,
                    ..base.clone()
                },
            ],
            Perturbation::Partition { .. } => vec![base.clone()],
        };
        for (i, c) in out.iter_mut().enumerate() {
            c.seed = rng::derive_seed(seed, &[rng::hash_str("expert"), i as u64]);
        }
        out
    }
}

/// One evaluated strategy run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub dataset: String,
    pub strategy: String,
    pub category: Category,
    /// Replicate seed as listed in the suite.
    pub seed: u64,
    /// Seed the run actually used, derived from the replicate seed and ids.
    pub run_seed: u64,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub report: EnsembleReport,
    /// Weighted domain-expert gain (DATASET only).
    pub delta_acc: Option<f64>,
    pub wall_clock_secs: f64,
}

/// Trains the strategy's experts on `ds` and evaluates the set. `seed` is used
/// as is; suites derive it per (dataset, strategy, replicate).
pub fn run_strategy(ds: &Dataset, spec: &StrategySpec, seed: u64) -> Result<RunRecord> {
    spec.validate()?;
    if spec.category == Category::Direct && !ds.graph.is_directed() {
        return Err(Error::RequiresDirected);
    }
    let start = Instant::now();
    let ens_cfg = spec.ensemble.clone().unwrap_or_default();
    let (experts, delta_acc): (Vec<Expert>, Option<f64>) = match &spec.perturbation {
        Perturbation::Partition {
            method,
            domains,
            mode,
            finetune,
        } => {
            let dom = assign_by_method(ds, *method, *domains, seed)?;
            let trained = train_domain_experts(ds, &dom, &spec.base, *mode, finetune, seed)?;
            let report = evaluate_experts(ds, &dom, &trained, *mode)?;
            let kept = trained.domain.into_iter().flatten().collect();
            (kept, Some(report.delta_acc))
        }
        _ => {
            use rayon::prelude::*;
            let experts = spec
                .expert_configs(seed)
                .par_iter()
                .map(|c| train_expert(ds, c, None))
                .collect::<Result<Vec<_>>>()?;
            (experts, None)
        }
    };
    let refs: Vec<&Expert> = experts.iter().collect();
    let ens_seed = rng::derive_seed(seed, &[rng::hash_str("ensemble")]);
    let mut report = evaluate_expert_set(ds, &refs, &ens_cfg, ens_seed)?;
    report.expert_ids = experts
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{i}:{}", e.config.describe()))
        .collect();
    Ok(RunRecord {
        dataset: format!("graph-{:016x}", ds.graph.fingerprint()),
        strategy: spec.name.clone(),
        category: spec.category,
        seed,
        run_seed: seed,
        num_nodes: ds.num_nodes(),
        num_edges: ds.graph.num_edges(),
        report,
        delta_acc,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
