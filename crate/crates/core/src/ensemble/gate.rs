//! Node-adaptive gate: a one-hidden-layer network mapping per-node expert
//! probabilities (and optional node descriptors) to simplex mixing weights.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::metrics;
use crate::nn::{argmax_rows, l2_penalty, relu, softmax_rows, softmax_xent, Adam, Linear};
use crate::rng;

/// Label-free node descriptors that can be appended to the gate input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateInput {
    /// `ln(1 + degree)`.
    Degree,
    Pagerank,
    Clustercoef,
    /// Mean cosine similarity to neighbor features.
    FeatSim,
    /// The raw node features.
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    /// Fraction of validation nodes held out for early stopping.
    pub holdout: f64,
    pub inputs: Vec<GateInput>,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            hidden_dim: 64,
            epochs: 300,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            patience: 50,
            holdout: 0.2,
            inputs: Vec::new(),
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("gate hidden_dim must be positive".into()));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::InvalidConfig("gate holdout must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("gate learning_rate must be positive, weight_decay nonnegative".into()));
        }
        Ok(())
    }
}

/// Stacks the requested descriptors for every node; `None` if none requested.
pub fn gate_features(ds: &Dataset, inputs: &[GateInput]) -> Option<Array2<f64>> {
    if inputs.is_empty() {
        return None;
    }
    let g = &ds.graph;
    let n = g.num_nodes();
    let mut cols: Vec<Array1<f64>> = Vec::new();
    for inp in inputs {
        match inp {
            GateInput::Degree => cols.push((0..n).map(|v| (g.degree(v) as f64).ln_1p()).collect()),
            GateInput::Pagerank => cols.push(metrics::pagerank(g, 0.85, 1e-10, 200).values.into()),
            GateInput::Clustercoef => cols.push(metrics::clustering_coefficient(g).values.into()),
            GateInput::FeatSim => cols.push(metrics::feature_similarity(g, g.features(), true).values.into()),
            GateInput::Features => cols.extend(g.features().columns().into_iter().map(|c| c.to_owned())),
        }
    }
    let mut out = Array2::zeros((n, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).assign(c);
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateModel {
    pub hidden: Linear,
    pub head: Linear,
    pub num_experts: usize,
    /// Standardization of the appended descriptors, fit on validation nodes.
    pub extra_mean: Vec<f64>,
    pub extra_std: Vec<f64>,
    pub best_epoch: usize,
    pub holdout_acc: f64,
}

fn build_inputs(zs: &[&Array2<f64>], extra: Option<&Array2<f64>>, mean: &[f64], std: &[f64]) -> Array2<f64> {
    let n = zs[0].nrows();
    let mut blocks: Vec<Array2<f64>> = zs.iter().map(|z| softmax_rows(z)).collect();
    if let Some(x) = extra {
        let mut s = x.clone();
        for (j, mut c) in s.columns_mut().into_iter().enumerate() {
            c.mapv_inplace(|v| (v - mean[j]) / std[j]);
        }
        blocks.push(s);
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
    debug_assert_eq!(out.nrows(), n);
    out
}

/// Row-wise mixture `Σ_k w[:, k] * Z^k`.
fn mix(zs: &[Array2<f64>], w: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(zs[0].raw_dim());
    for (k, z) in zs.iter().enumerate() {
        out += &(z * &w.column(k).insert_axis(Axis(1)));
    }
    out
}

struct Forward {
    h: Array2<f64>,
    w: Array2<f64>,
    m: Array2<f64>,
}

fn forward(hidden: &Linear, head: &Linear, u: &Array2<f64>, zs: &[Array2<f64>]) -> Forward {
    let h = relu(&hidden.forward(u));
    let w = softmax_rows(&head.forward(&h));
    let m = mix(zs, &w);
    Forward { h, w, m }
}

/// Mean cross-entropy of the mixed logits (no weight penalty) and gradients
/// for `[hidden, head]`.
pub(crate) fn loss_and_grad(
    hidden: &Linear,
    head: &Linear,
    u: &Array2<f64>,
    zs: &[Array2<f64>],
    y: &[usize],
) -> (f64, [Linear; 2]) {
    let f = forward(hidden, head, u, zs);
    let rows: Vec<usize> = (0..y.len()).collect();
    let (loss, dm) = softmax_xent(&f.m, y, &rows);
    // dL/dw_nk = <dm_n, Z^k_n>, then back through the softmax.
    let mut g = Array2::zeros(f.w.raw_dim());
    for (k, z) in zs.iter().enumerate() {
        g.column_mut(k).assign(&(&dm * z).sum_axis(Axis(1)));
    }
    let wg = (&f.w * &g).sum_axis(Axis(1)).insert_axis(Axis(1));
    let da = &f.w * &(&g - &wg);
    let g_head = Linear::backward(&f.h, &da);
    let mut dh = da.dot(&head.w.t());
    dh.zip_mut_with(&f.h, |d, &h| {
        if h <= 0.0 {
            *d = 0.0;
        }
    });
    let g_hidden = Linear::backward(u, &dh);
    (loss, [g_hidden, g_head])
}

fn select(zs: &[&Array2<f64>], rows: &[usize]) -> Vec<Array2<f64>> {
    zs.iter().map(|z| z.select(Axis(0), rows)).collect()
}

fn check_shapes(zs: &[&Array2<f64>], extra: Option<&Array2<f64>>) -> Result<()> {
    let dim = zs[0].dim();
    if zs.iter().any(|z| z.dim() != dim) {
        return Err(Error::Shape("expert logit matrices differ in shape".into()));
    }
    if extra.is_some_and(|x| x.nrows() != dim.0) {
        return Err(Error::Shape("gate features and logits differ in row count".into()));
    }
    Ok(())
}

impl GateModel {
    fn inputs(&self, zs: &[&Array2<f64>], extra: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        if zs.len() != self.num_experts {
            return Err(Error::Shape(format!("gate expects {} experts, got {}", self.num_experts, zs.len())));
        }
        check_shapes(zs, extra)?;
        if extra.map_or(0, |x| x.ncols()) != self.extra_mean.len() {
            return Err(Error::Shape("gate feature width differs from training".into()));
        }
        Ok(build_inputs(zs, extra, &self.extra_mean, &self.extra_std))
    }

    /// Per-node mixing weights, `N × K`; each row lies on the simplex.
    pub fn weights(&self, zs: &[&Array2<f64>], extra: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        let u = self.inputs(zs, extra)?;
        Ok(softmax_rows(&self.head.forward(&relu(&self.hidden.forward(&u)))))
    }

    pub fn mixed_logits(&self, zs: &[&Array2<f64>], extra: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        let w = self.weights(zs, extra)?;
        let owned: Vec<Array2<f64>> = zs.iter().map(|&z| z.clone()).collect();
        Ok(mix(&owned, &w))
    }

    pub fn predict(&self, zs: &[&Array2<f64>], extra: Option<&Array2<f64>>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.mixed_logits(zs, extra)?))
    }
}

fn holdout_accuracy(f: &Forward, y: &[usize]) -> f64 {
    let pred = argmax_rows(&f.m);
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

/// Fits the gate on the validation nodes: cross-entropy of the mixed logits on
/// a seeded 80% share, early stopping on the remaining 20% (the untrained,
/// uniform-weight gate competes as epoch 0).
pub fn train_gate(
    zs: &[&Array2<f64>],
    extra: Option<&Array2<f64>>,
    y: &[usize],
    val_mask: &[bool],
    cfg: &GateConfig,
    seed: u64,
) -> Result<GateModel> {
    cfg.validate()?;
    let k = zs.len();
    if k < 2 {
        return Err(Error::Degenerate("gate needs at least two experts".into()));
    }
    check_shapes(zs, extra)?;
    if zs[0].nrows() != y.len() || val_mask.len() != y.len() {
        return Err(Error::Shape("labels, mask and logits differ in length".into()));
    }
    let mut val: Vec<usize> = (0..y.len()).filter(|&v| val_mask[v]).collect();
    let mut classes: Vec<usize> = val.iter().map(|&v| y[v]).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Degenerate("gate validation set must hold at least two classes".into()));
    }
    val.shuffle(&mut rng::stream(seed, "gate-split", &[]));
    let n_stop = ((val.len() as f64 * cfg.holdout).round() as usize).clamp(1, val.len() - 1);
    let (stop, fit) = val.split_at(n_stop);

    let width = extra.map_or(0, |x| x.ncols());
    let (mut mean, mut std) = (vec![0.0; width], vec![1.0; width]);
    if let Some(x) = extra {
        let xv = x.select(Axis(0), &val);
        for j in 0..width {
            let c = xv.column(j);
            let m = c.mean().unwrap_or(0.0);
            let s = c.mapv(|v| (v - m) * (v - m)).mean().unwrap_or(0.0).sqrt();
            mean[j] = m;
            std[j] = if s > 1e-12 { s } else { 1.0 };
        }
    }
    let u = build_inputs(zs, extra, &mean, &std);
    let (u_fit, z_fit) = (u.select(Axis(0), fit), select(zs, fit));
    let y_fit: Vec<usize> = fit.iter().map(|&v| y[v]).collect();
    let (u_stop, z_stop) = (u.select(Axis(0), stop), select(zs, stop));
    let y_stop: Vec<usize> = stop.iter().map(|&v| y[v]).collect();

    let mut init = rng::stream(seed, "gate-init", &[]);
    let mut layers = vec![Linear::glorot(u.ncols(), cfg.hidden_dim, &mut init), Linear::zeros(cfg.hidden_dim, k)];
    let mut adam = Adam::new(&layers, cfg.learning_rate, cfg.weight_decay);
    let mut best = (
        holdout_accuracy(&forward(&layers[0], &layers[1], &u_stop, &z_stop), &y_stop),
        0,
        layers.clone(),
    );
    for epoch in 1..=cfg.epochs {
        let (ce, grads) = loss_and_grad(&layers[0], &layers[1], &u_fit, &z_fit, &y_fit);
        let loss = ce + l2_penalty(&layers, cfg.weight_decay);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        adam.step(&mut layers, &grads);
        let acc = holdout_accuracy(&forward(&layers[0], &layers[1], &u_stop, &z_stop), &y_stop);
        if acc > best.0 {
            best = (acc, epoch, layers.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (holdout_acc, best_epoch, mut layers) = best;
    let head = layers.pop().expect("two layers");
    let hidden = layers.pop().expect("two layers");
    Ok(GateModel {
        hidden,
        head,
        num_experts: k,
        extra_mean: mean,
        extra_std: std,
        best_epoch,
        holdout_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::weights::{tune_global_weights, weighted_accuracy};
    use rand::Rng as _;

    #[test]
    fn gate_gradient_matches_finite_differences() {
        let mut r = rng::stream(0, "gate-fd", &[]);
        let (n, c, k, d) = (7, 3, 2, 5);
        let zs: Vec<Array2<f64>> = (0..k)
            .map(|_| Array2::from_shape_fn((n, c), |_| r.random_range(-2.0..2.0)))
            .collect();
        let u = Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0));
        let y: Vec<usize> = (0..n).map(|i| i % c).collect();
        let mut layers = vec![Linear::glorot(d, 4, &mut r), Linear::glorot(4, k, &mut r)];
        layers[0].b.fill(0.1);
        layers[1].b.fill(-0.2);
        let (_, grads) = loss_and_grad(&layers[0], &layers[1], &u, &zs, &y);
        let h = 1e-6;
        for l in 0..2 {
            for idx in 0..layers[l].w.len() {
                let (i, j) = (idx / layers[l].w.ncols(), idx % layers[l].w.ncols());
                let orig = layers[l].w[[i, j]];
                layers[l].w[[i, j]] = orig + h;
                let lp = loss_and_grad(&layers[0], &layers[1], &u, &zs, &y).0;
                layers[l].w[[i, j]] = orig - h;
                let lm = loss_and_grad(&layers[0], &layers[1], &u, &zs, &y).0;
                layers[l].w[[i, j]] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads[l].w[[i, j]];
                assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "layer {l} ({i},{j}): {fd} vs {an}");
            }
        }
    }

    #[test]
    fn untrained_gate_is_uniform() {
        let z = Array2::from_shape_fn((20, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let y: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let cfg = GateConfig {
            epochs: 0,
            ..GateConfig::default()
        };
        let g = train_gate(&[&z, &z, &z], None, &y, &vec![true; 20], &cfg, 0).unwrap();
        let w = g.weights(&[&z, &z, &z], None).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn identical_experts_mix_to_their_prediction() {
        let z = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 5 + j * 11) % 7) as f64 - 3.0);
        let y: Vec<usize> = (0..40).map(|i| (i * 13) % 3).collect();
        let g = train_gate(&[&z, &z], None, &y, &vec![true; 40], &GateConfig::default(), 1).unwrap();
        assert_eq!(g.predict(&[&z, &z], None).unwrap(), argmax_rows(&z));
    }

    #[test]
    fn degenerate_validation_is_rejected() {
        let z = Array2::<f64>::zeros((4, 2));
        assert!(train_gate(&[&z, &z], None, &[0, 0, 0, 0], &[true; 4], &GateConfig::default(), 0).is_err());
        assert!(train_gate(&[&z], None, &[0, 1, 0, 1], &[true; 4], &GateConfig::default(), 0).is_err());
    }

    /// Expert A is right on region 0, expert B on region 1; the region
    /// indicator lets the gate route while any global weighting must pick one.
    #[test]
    fn gate_routes_region_specialists() {
        let mut wins = 0;
        for seed in 0..5u64 {
            let mut r = rng::stream(seed, "regions", &[]);
            let n = 600;
            let y: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
            let region: Vec<usize> = (0..n).map(|i| (i / 4) % 2).collect();
            // Right on its own region, confidently wrong (one fixed wrong
            // class) on 70% of the other region.
            let expert = |good_region: usize, r: &mut rng::Rng| {
                let target: Vec<usize> = (0..n)
                    .map(|i| {
                        if region[i] == good_region || r.random_range(0.0..1.0) < 0.3 {
                            y[i]
                        } else {
                            (y[i] + 1) % 3
                        }
                    })
                    .collect();
                Array2::from_shape_fn((n, 3), |(i, j)| {
                    let noise = r.random_range(0.0..1.0);
                    if j == target[i] {
                        noise + 2.0
                    } else {
                        noise
                    }
                })
            };
            let a = expert(0, &mut r);
            let b = expert(1, &mut r);
            let extra = Array2::from_shape_fn((n, 1), |(i, _)| region[i] as f64);
            let val: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % 4 == 2).collect();
            let g = train_gate(&[&a, &b], Some(&extra), &y, &val, &GateConfig::default(), seed).unwrap();
            let pred = g.predict(&[&a, &b], Some(&extra)).unwrap();
            let gate_acc = test.iter().filter(|&&v| pred[v] == y[v]).count() as f64 / test.len() as f64;
            let w = tune_global_weights(&[&a, &b], &y, &val, 40, seed).unwrap();
            let ens_acc = weighted_accuracy(&[&a, &b], &w.weights, &y, &test);
            wins += usize::from(gate_acc >= ens_acc);
        }
        assert!(wins >= 4, "gate beat the global ensemble in {wins}/5 seeds");
    }
}
