//! Expert-set analysis: correctness-based diversity (error inconsistency),
//! complementarity (oracle accuracy, complementary gain) and the two
//! aggregators, a global weighted logit sum and a node-adaptive gate.

mod diversity;
mod gate;
mod weights;

pub use diversity::{correctness, error_inconsistency, oracle_and_cg, CorrectnessMatrix};
pub use gate::{gate_features, train_gate, GateConfig, GateInput, GateModel};
pub use weights::{tune_global_weights, weighted_accuracy, WeightSearch};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::Expert;
use crate::graph::Dataset;
use crate::nn::{argmax_rows, mask_rows};

/// Which nodes the diversity and accuracy figures are computed on. Weights
/// and the gate are always fit on validation nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSplit {
    #[default]
    Test,
    Val,
}

/// Settings for [`evaluate_expert_set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub gate: GateConfig,
    /// Candidate evaluations for the global weight search.
    pub weight_budget: usize,
    pub eval_split: EvalSplit,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            gate: GateConfig::default(),
            weight_budget: 100,
            eval_split: EvalSplit::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub expert_ids: Vec<String>,
    pub expert_accuracies: Vec<f64>,
    /// Empty for a single expert.
    pub pairwise_ei: Vec<Vec<f64>>,
    pub set_ei: Option<f64>,
    pub oracle: f64,
    pub cg: f64,
    pub mean_expert_acc: f64,
    pub max_expert_acc: f64,
    pub ensemble_accuracy: f64,
    pub ensemble_weights: Vec<f64>,
    pub ensemble_val_accuracy: f64,
    pub gate_accuracy: f64,
    pub eval_split: EvalSplit,
    pub num_eval: usize,
}

impl EnsembleReport {
    /// Checks the structural invariants every report must satisfy.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invariant(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let accs = self
            .expert_accuracies
            .iter()
            .chain([&self.oracle, &self.ensemble_accuracy, &self.gate_accuracy, &self.ensemble_val_accuracy]);
        if let Some(a) = accs.into_iter().find(|&&a| !unit(a)) {
            return bad(format!("accuracy {a} outside [0, 1]"));
        }
        if self.oracle + 1e-12 < self.max_expert_acc {
            return bad(format!("oracle {} below best expert {}", self.oracle, self.max_expert_acc));
        }
        if (self.cg - (self.oracle - self.max_expert_acc)).abs() > 1e-12 || self.cg < -1e-12 {
            return bad(format!("complementary gain {} inconsistent", self.cg));
        }
        if let Some(s) = self.set_ei {
            if !unit(s) {
                return bad(format!("set EI {s} outside [0, 1]"));
            }
            if self.expert_accuracies.len() == 2 && (s - self.pairwise_ei[0][1]).abs() > 1e-12 {
                return bad("set EI differs from pairwise EI for two experts".into());
            }
        }
        let w: f64 = self.ensemble_weights.iter().sum();
        if (w - 1.0).abs() > 1e-9 || self.ensemble_weights.iter().any(|&x| x < 0.0) {
            return bad("ensemble weights are not on the simplex".into());
        }
        Ok(())
    }

    /// Gain of each aggregator over the mean and the best expert accuracy.
    pub fn gains(&self) -> Gains {
        Gains {
            oracle_vs_mean: self.oracle - self.mean_expert_acc,
            oracle_vs_max: self.cg,
            ensemble_vs_mean: self.ensemble_accuracy - self.mean_expert_acc,
            ensemble_vs_max: self.ensemble_accuracy - self.max_expert_acc,
            gate_vs_mean: self.gate_accuracy - self.mean_expert_acc,
            gate_vs_max: self.gate_accuracy - self.max_expert_acc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gains {
    pub oracle_vs_mean: f64,
    pub oracle_vs_max: f64,
    pub ensemble_vs_mean: f64,
    pub ensemble_vs_max: f64,
    pub gate_vs_mean: f64,
    pub gate_vs_max: f64,
}

/// Where every expert predicts the same class, a simplex mixture must too.
/// Near-ties within floating-point slack are tolerated.
fn check_agreement(zs: &[&Array2<f64>], mixed: &Array2<f64>, rows: &[usize]) -> Result<()> {
    let preds: Vec<Vec<usize>> = zs.iter().map(|z| argmax_rows(z)).collect();
    let mixed_pred = argmax_rows(mixed);
    for &v in rows {
        let c = preds[0][v];
        if preds.iter().all(|p| p[v] == c) && mixed_pred[v] != c {
            let gap = mixed[[v, mixed_pred[v]]] - mixed[[v, c]];
            let scale = mixed.row(v).iter().fold(1.0f64, |a, &b| a.max(b.abs()));
            if gap > 1e-9 * scale {
                return Err(Error::Invariant(format!(
                    "node {v}: all experts predict {c} but the gate mixture predicts {}",
                    mixed_pred[v]
                )));
            }
        }
    }
    Ok(())
}

/// Full report for a set of logit matrices over `ds`.
pub fn evaluate_logits(
    ds: &Dataset,
    zs: &[&Array2<f64>],
    ids: &[String],
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<EnsembleReport> {
    if zs.is_empty() {
        return Err(Error::Degenerate("no experts to evaluate".into()));
    }
    let y = ds.labels();
    let eval_mask = match cfg.eval_split {
        EvalSplit::Test => &ds.test_mask,
        EvalSplit::Val => &ds.val_mask,
    };
    let cm = correctness(zs, y, eval_mask)?;
    if cm.num_eval() == 0 {
        return Err(Error::Degenerate("evaluation split is empty".into()));
    }
    let accs = cm.accuracies();
    let (oracle, cg) = oracle_and_cg(&cm, &accs)?;
    let k = zs.len();
    let mean_acc = accs.iter().sum::<f64>() / k as f64;
    let max_acc = accs.iter().copied().fold(0.0, f64::max);
    let eval_rows = mask_rows(eval_mask);
    let val_rows = mask_rows(&ds.val_mask);

    let (pairwise, set_ei, weights, ens_val, gate_acc) = if k == 1 {
        let val_acc = weighted_accuracy(zs, &[1.0], y, &val_rows);
        (Vec::new(), None, vec![1.0], val_acc, accs[0])
    } else {
        let (pair, set) = error_inconsistency(&cm)?;
        let search = tune_global_weights(zs, y, &ds.val_mask, cfg.weight_budget.max(k), seed)?;
        let extra = gate_features(ds, &cfg.gate.inputs);
        let gate = train_gate(zs, extra.as_ref(), y, &ds.val_mask, &cfg.gate, seed)?;
        let mixed = gate.mixed_logits(zs, extra.as_ref())?;
        check_agreement(zs, &mixed, &eval_rows)?;
        let pred = argmax_rows(&mixed);
        let gate_acc = eval_rows.iter().filter(|&&v| pred[v] == y[v]).count() as f64 / eval_rows.len() as f64;
        let pair = pair.outer_iter().map(|r| r.to_vec()).collect();
        (pair, Some(set), search.weights, search.val_acc, gate_acc)
    };
    let report = EnsembleReport {
        expert_ids: ids.to_vec(),
        ensemble_accuracy: weighted_accuracy(zs, &weights, y, &eval_rows),
        expert_accuracies: accs,
        pairwise_ei: pairwise,
        set_ei,
        oracle,
        cg,
        mean_expert_acc: mean_acc,
        max_expert_acc: max_acc,
        ensemble_weights: weights,
        ensemble_val_accuracy: ens_val,
        gate_accuracy: gate_acc,
        eval_split: cfg.eval_split,
        num_eval: cm.num_eval(),
    };
    report.check()?;
    Ok(report)
}

/// Evaluates trained experts; all must come from `ds`'s graph.
pub fn evaluate_expert_set(
    ds: &Dataset,
    experts: &[&Expert],
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<EnsembleReport> {
    let fp = ds.graph.fingerprint();
    if let Some(i) = experts.iter().position(|e| e.graph_fingerprint != fp) {
        return Err(Error::InvalidDataset(format!("expert {i} was trained on a different graph")));
    }
    let zs: Vec<&Array2<f64>> = experts.iter().map(|e| &e.logits).collect();
    let ids: Vec<String> = experts.iter().map(|e| e.config.describe()).collect();
    evaluate_logits(ds, &zs, &ids, cfg, seed)
}
