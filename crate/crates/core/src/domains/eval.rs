use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DomainAssignment;
use crate::error::{Error, Result};
use crate::experts::{fine_tune, train_expert, train_expert_masked, Expert, ExpertConfig, FineTuneConfig};
use crate::graph::{mask_and, mask_count, Dataset};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    /// Domain experts trained from a fresh initialization on `train ∩ domain`.
    Scratch,
    /// Domain experts start from the full-data expert and continue on
    /// `train ∩ domain`.
    Finetune,
}

impl TrainingMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainingMode::Scratch => "scratch",
            TrainingMode::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainResult {
    pub domain: usize,
    pub num_train: usize,
    pub num_test: usize,
    /// `|domain| / N` before renormalization.
    pub raw_weight: f64,
    /// Weight used in `delta_acc`, renormalized over kept domains; 0 if skipped.
    pub weight: f64,
    /// Domain expert accuracy on `test ∩ domain`.
    pub acc_domain: f64,
    /// Full-data expert accuracy on `test ∩ domain`.
    pub acc_full: f64,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainEvalReport {
    pub source: String,
    pub mode: TrainingMode,
    pub domains: Vec<DomainResult>,
    pub delta_acc: f64,
    pub full_test_acc: f64,
}

impl DomainEvalReport {
    /// `Σ w_m (Acc_{m→m} − Acc_{all→m})` over kept domains.
    pub fn recompute_delta(&self) -> f64 {
        self.domains
            .iter()
            .filter(|d| d.skipped.is_none())
            .map(|d| d.weight * (d.acc_domain - d.acc_full))
            .sum()
    }
}

/// The full-data expert and one expert per domain (`None` when skipped).
#[derive(Debug, Clone)]
pub struct DomainExperts {
    pub full: Expert,
    pub domain: Vec<Option<Expert>>,
    pub skipped: Vec<Option<String>>,
}

impl DomainExperts {
    /// Experts of the kept domains, in domain order.
    pub fn kept(&self) -> Vec<&Expert> {
        self.domain.iter().flatten().collect()
    }
}

fn domain_seed(seed: u64, m: usize) -> u64 {
    rng::derive_seed(seed, &[rng::hash_str("domain"), m as u64])
}

/// Trains the full-data expert and the `M` domain experts. Domains with no
/// training or test nodes, or whose scratch training set holds a single
/// class, are skipped with a warning.
pub fn train_domain_experts(
    ds: &Dataset,
    dom: &DomainAssignment,
    cfg: &ExpertConfig,
    mode: TrainingMode,
    ft: &FineTuneConfig,
    seed: u64,
) -> Result<DomainExperts> {
    if dom.num_nodes() != ds.num_nodes() {
        return Err(Error::Shape(format!(
            "assignment covers {} nodes, dataset has {}",
            dom.num_nodes(),
            ds.num_nodes()
        )));
    }
    cfg.validate()?;
    let full_cfg = ExpertConfig {
        seed: rng::derive_seed(seed, &[rng::hash_str("full")]),
        ..cfg.clone()
    };
    let full = train_expert(ds, &full_cfg, None)?;

    let results: Vec<Result<std::result::Result<Expert, String>>> = (0..dom.num_domains)
        .into_par_iter()
        .map(|m| {
            let mask = dom.mask(m);
            let n_train = mask_count(&mask_and(&mask, &ds.train_mask));
            let n_test = mask_count(&mask_and(&mask, &ds.test_mask));
            if n_train == 0 || n_test == 0 {
                return Ok(Err(format!("{n_train} train / {n_test} test nodes")));
            }
            let seed = domain_seed(seed, m);
            match mode {
                TrainingMode::Scratch => {
                    let c = ExpertConfig { seed, ..cfg.clone() };
                    match train_expert_masked(ds, &c, &mask, &ds.val_mask) {
                        Ok(e) => Ok(Ok(e)),
                        Err(Error::Degenerate(msg)) => Ok(Err(msg)),
                        Err(e) => Err(e),
                    }
                }
                TrainingMode::Finetune => {
                    let mut start = full.clone();
                    start.config.seed = seed;
                    fine_tune(&start, ds, &mask, ft).map(Ok)
                }
            }
        })
        .collect();

    let mut domain = Vec::with_capacity(dom.num_domains);
    let mut skipped = Vec::with_capacity(dom.num_domains);
    for (m, r) in results.into_iter().enumerate() {
        match r? {
            Ok(e) => {
                domain.push(Some(e));
                skipped.push(None);
            }
            Err(msg) => {
                warn!("domain {m} of {} skipped: {msg}", dom.source);
                domain.push(None);
                skipped.push(Some(msg));
            }
        }
    }
    Ok(DomainExperts { full, domain, skipped })
}

/// ΔAcc of already trained domain experts, evaluated on `test ∩ domain`.
pub fn evaluate_experts(
    ds: &Dataset,
    dom: &DomainAssignment,
    experts: &DomainExperts,
    mode: TrainingMode,
) -> Result<DomainEvalReport> {
    let y = ds.labels();
    let kept_mass: f64 = (0..dom.num_domains)
        .filter(|&m| experts.skipped[m].is_none())
        .map(|m| dom.weights[m])
        .sum();
    if kept_mass <= 0.0 {
        return Err(Error::Degenerate(format!("every domain of {} was skipped", dom.source)));
    }
    let mut domains = Vec::with_capacity(dom.num_domains);
    for m in 0..dom.num_domains {
        let mask = dom.mask(m);
        let test = mask_and(&mask, &ds.test_mask);
        let mut r = DomainResult {
            domain: m,
            num_train: mask_count(&mask_and(&mask, &ds.train_mask)),
            num_test: mask_count(&test),
            raw_weight: dom.weights[m],
            weight: 0.0,
            acc_domain: 0.0,
            acc_full: 0.0,
            skipped: experts.skipped[m].clone(),
        };
        if let Some(e) = &experts.domain[m] {
            r.weight = dom.weights[m] / kept_mass;
            r.acc_domain = e.accuracy_on(y, &test);
            r.acc_full = experts.full.accuracy_on(y, &test);
        }
        domains.push(r);
    }
    let mut report = DomainEvalReport {
        source: dom.source.clone(),
        mode,
        domains,
        delta_acc: 0.0,
        full_test_acc: experts.full.accuracy_on(y, &ds.test_mask),
    };
    report.delta_acc = report.recompute_delta();
    Ok(report)
}

pub fn evaluate_assignment(
    ds: &Dataset,
    dom: &DomainAssignment,
    cfg: &ExpertConfig,
    mode: TrainingMode,
    seed: u64,
) -> Result<DomainEvalReport> {
    evaluate_assignment_with(ds, dom, cfg, mode, &FineTuneConfig::default(), seed)
}

pub fn evaluate_assignment_with(
    ds: &Dataset,
    dom: &DomainAssignment,
    cfg: &ExpertConfig,
    mode: TrainingMode,
    ft: &FineTuneConfig,
    seed: u64,
) -> Result<DomainEvalReport> {
    let experts = train_domain_experts(ds, dom, cfg, mode, ft, seed)?;
    evaluate_experts(ds, dom, &experts, mode)
}
