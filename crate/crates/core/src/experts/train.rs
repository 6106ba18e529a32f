use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::ExpertConfig;
use super::model::{Mode, Network, Params};
use super::propagation::{build_propagation, PropagationOperator};
use crate::error::{Error, Result};
use crate::graph::{mask_and, Dataset};
use crate::nn::{accuracy, argmax_rows, l2_penalty, mask_rows, softmax_xent, Adam};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// A trained expert: parameters of the best-validation checkpoint and the
/// full-graph logits they produce.
#[derive(Debug, Clone)]
pub struct Expert {
    pub config: ExpertConfig,
    pub params: Params,
    pub logits: Array2<f64>,
    pub history: Vec<EpochRecord>,
    /// Epoch of the kept checkpoint; 0 is the starting point of a fine-tune.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub graph_fingerprint: u64,
}

impl Expert {
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(&self.logits)
    }

    pub fn accuracy_on(&self, labels: &[usize], mask: &[bool]) -> f64 {
        accuracy(&self.predictions(), labels, &mask_rows(mask))
    }
}

/// Learning-rate and epoch overrides for fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    pub lr_scale: f64,
    pub epochs_scale: f64,
    /// Explicit epoch count, overriding `epochs_scale`.
    pub epochs: Option<usize>,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            lr_scale: 1.0,
            epochs_scale: 0.5,
            epochs: None,
        }
    }
}

struct Run<'a> {
    net: Network<'a>,
    labels: &'a [usize],
    train: Vec<usize>,
    val: Vec<usize>,
}

struct Outcome {
    params: Params,
    history: Vec<EpochRecord>,
    best_epoch: usize,
    best_val: f64,
}

impl Run<'_> {
    fn monitor_rows(&self) -> &[usize] {
        if self.val.is_empty() {
            &self.train
        } else {
            &self.val
        }
    }

    fn eval_acc(&self, params: &Params) -> Result<(f64, f64)> {
        let (z, _) = self.net.forward(params, Mode::Eval)?;
        let pred = argmax_rows(&z);
        Ok((
            accuracy(&pred, self.labels, &self.train),
            accuracy(&pred, self.labels, self.monitor_rows()),
        ))
    }

    /// Adam on the train rows with validation-accuracy checkpointing and
    /// patience. With `keep_start`, the starting parameters compete as epoch 0.
    fn optimize(
        &self,
        mut params: Params,
        lr: f64,
        epochs: usize,
        stream_tag: &str,
        keep_start: bool,
    ) -> Result<Outcome> {
        let cfg = self.net.config();
        let mut adam = Adam::new(&params.layers, lr, cfg.weight_decay);
        let mut history = Vec::with_capacity(epochs);
        let mut best: Option<(f64, usize, Params)> = None;
        if keep_start || epochs == 0 {
            let (_, v) = self.eval_acc(&params)?;
            best = Some((v, 0, params.clone()));
        }
        for epoch in 1..=epochs {
            let mut drop_rng = rng::stream(cfg.seed, stream_tag, &[epoch as u64]);
            let (z, cache) = self.net.forward(&params, Mode::Train(&mut drop_rng))?;
            let (ce, dz) = softmax_xent(&z, self.labels, &self.train);
            let loss = ce + l2_penalty(&params.layers, cfg.weight_decay);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            let grads = self.net.backward(&params, &cache, &dz);
            adam.step(&mut params.layers, &grads.layers);

            let (train_acc, val_acc) = self.eval_acc(&params)?;
            history.push(EpochRecord {
                epoch,
                train_loss: loss,
                train_acc,
                val_acc,
            });
            match &best {
                Some((b, _, _)) if val_acc <= *b => {}
                _ => best = Some((val_acc, epoch, params.clone())),
            }
            let best_epoch = best.as_ref().map_or(0, |b| b.1);
            if epoch - best_epoch >= cfg.patience.max(1) {
                break;
            }
        }
        let (best_val, best_epoch, params) = best.expect("at least one candidate");
        Ok(Outcome {
            params,
            history,
            best_epoch,
            best_val,
        })
    }
}

fn distinct_classes(labels: &[usize], rows: &[usize]) -> usize {
    let mut seen: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn finish(
    ds: &Dataset,
    cfg: &ExpertConfig,
    net: &Network<'_>,
    out: Outcome,
) -> Result<Expert> {
    let (logits, _) = net.forward(&out.params, Mode::Eval)?;
    Ok(Expert {
        config: cfg.clone(),
        params: out.params,
        logits,
        history: out.history,
        best_epoch: out.best_epoch,
        best_val_acc: out.best_val,
        graph_fingerprint: ds.graph.fingerprint(),
    })
}

/// Trains an expert on `train_mask_override` (or the dataset's train mask).
pub fn train_expert(ds: &Dataset, cfg: &ExpertConfig, train_mask_override: Option<&[bool]>) -> Result<Expert> {
    let train = train_mask_override.unwrap_or(&ds.train_mask);
    train_expert_masked(ds, cfg, train, &ds.val_mask)
}

/// Trains on `train_mask` and checkpoints on accuracy over `val_mask`.
pub fn train_expert_masked(
    ds: &Dataset,
    cfg: &ExpertConfig,
    train_mask: &[bool],
    val_mask: &[bool],
) -> Result<Expert> {
    cfg.validate()?;
    let prop = build_propagation(&ds.graph, cfg.filter)?;
    train_with_operator(ds, cfg, &prop, train_mask, val_mask)
}

pub(crate) fn train_with_operator(
    ds: &Dataset,
    cfg: &ExpertConfig,
    prop: &PropagationOperator,
    train_mask: &[bool],
    val_mask: &[bool],
) -> Result<Expert> {
    let train = mask_rows(&mask_and(train_mask, &ds.train_mask));
    if distinct_classes(ds.labels(), &train) < 2 {
        return Err(Error::Degenerate("train mask must contain at least two classes".into()));
    }
    let g = &ds.graph;
    let net = Network::new(cfg, prop, g.features())?;
    let mut init_rng = rng::stream(cfg.seed, "init", &[]);
    let params = Params::init(cfg, g.features().ncols(), g.num_classes(), &mut init_rng);
    let run = Run {
        net,
        labels: ds.labels(),
        train,
        val: mask_rows(val_mask),
    };
    let out = run.optimize(params, cfg.learning_rate, cfg.epochs, "dropout", false)?;
    finish(ds, cfg, &run.net, out)
}

/// Continues training `expert` on `train ∩ domain_mask` with a reduced
/// learning rate. Checkpointing uses `val ∩ domain_mask` when nonempty.
pub fn fine_tune(expert: &Expert, ds: &Dataset, domain_mask: &[bool], ft: &FineTuneConfig) -> Result<Expert> {
    if expert.graph_fingerprint != ds.graph.fingerprint() {
        return Err(Error::InvalidDataset("expert was trained on a different graph".into()));
    }
    let cfg = &expert.config;
    let train = mask_rows(&mask_and(&ds.train_mask, domain_mask));
    if train.is_empty() {
        return Err(Error::Degenerate("fine-tune mask has no training nodes".into()));
    }
    let dom_val = mask_and(&ds.val_mask, domain_mask);
    let val = if dom_val.iter().any(|&b| b) {
        mask_rows(&dom_val)
    } else {
        mask_rows(&ds.val_mask)
    };
    let prop = build_propagation(&ds.graph, cfg.filter)?;
    let net = Network::new(cfg, &prop, ds.graph.features())?;
    let epochs = ft
        .epochs
        .unwrap_or_else(|| (cfg.epochs as f64 * ft.epochs_scale).round() as usize);
    let run = Run {
        net,
        labels: ds.labels(),
        train,
        val,
    };
    let out = run.optimize(
        expert.params.clone(),
        cfg.learning_rate * ft.lr_scale,
        epochs,
        "finetune-dropout",
        true,
    )?;
    finish(ds, cfg, &run.net, out)
}

/// Recomputes full-graph eval-mode logits from an expert's parameters.
pub fn predict(expert_params: &Params, cfg: &ExpertConfig, ds: &Dataset) -> Result<Array2<f64>> {
    let prop = build_propagation(&ds.graph, cfg.filter)?;
    let net = Network::new(cfg, &prop, ds.graph.features())?;
    Ok(net.forward(expert_params, Mode::Eval)?.0)
}
