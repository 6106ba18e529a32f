//! Finite-difference check of the hand-written backward pass.

use ndarray::Array2;
use serde::Serialize;

use super::config::ExpertConfig;
use super::model::{Cache, Mode, Network, Params};
use super::propagation::build_propagation;
use crate::error::Result;
use crate::graph::Graph;
use crate::nn::{l2_penalty, softmax_xent};
use crate::rng;

pub const FD_STEP: f64 = 1e-5;
/// Floor on the denominator of the relative error.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub config: String,
    pub max_rel_error: f64,
    pub tensors: Vec<TensorCheck>,
    /// Coordinates skipped because the +/- step flipped a ReLU.
    pub skipped_kinks: usize,
    pub passed: bool,
}

fn loss_and_pattern(
    net: &Network<'_>,
    params: &Params,
    labels: &[usize],
    rows: &[usize],
    seed: u64,
) -> Result<(f64, Array2<f64>, Cache, Vec<Vec<bool>>)> {
    let mut r = rng::stream(seed, "gradcheck", &[]);
    let (z, cache) = net.forward(params, Mode::Train(&mut r))?;
    let (ce, dz) = softmax_xent(&z, labels, rows);
    let loss = ce + l2_penalty(&params.layers, net.config().weight_decay);
    let pattern = cache.pre.iter().map(|p| p.iter().map(|&v| v > 0.0).collect()).collect();
    Ok((loss, dz, cache, pattern))
}

fn coord(p: &mut Params, layer: usize, is_bias: bool, i: usize) -> &mut f64 {
    let lin = &mut p.layers[layer];
    if is_bias {
        &mut lin.b[i]
    } else {
        let cols = lin.w.ncols();
        &mut lin.w[[i / cols, i % cols]]
    }
}

/// Compares analytic gradients of the full-graph training loss against central
/// differences for every parameter. Dropout masks, if any, are held fixed.
pub fn gradient_check(cfg: &ExpertConfig, g: &Graph, tolerance: f64) -> Result<GradCheckReport> {
    let prop = build_propagation(g, cfg.filter)?;
    let net = Network::new(cfg, &prop, g.features())?;
    let mut init = rng::stream(cfg.seed, "init", &[]);
    let mut params = Params::init(cfg, g.features().ncols(), g.num_classes(), &mut init);
    // nonzero biases exercise the bias path
    for layer in &mut params.layers {
        for (i, b) in layer.b.iter_mut().enumerate() {
            *b = 0.05 * ((i % 7) as f64 - 3.0);
        }
    }
    let labels = g.labels();
    let rows: Vec<usize> = (0..g.num_nodes()).collect();

    let (_, dz, cache, _) = loss_and_pattern(&net, &params, labels, &rows, cfg.seed)?;
    let mut analytic = net.backward(&params, &cache, &dz);
    for (gl, pl) in analytic.layers.iter_mut().zip(&params.layers) {
        gl.w.scaled_add(cfg.weight_decay, &pl.w);
    }

    let mut tensors = Vec::new();
    let mut skipped = 0;
    for l in 0..params.layers.len() {
        for is_bias in [false, true] {
            let len = if is_bias {
                params.layers[l].b.len()
            } else {
                params.layers[l].w.len()
            };
            let mut worst = 0.0f64;
            let mut checked = 0;
            for i in 0..len {
                let orig = *coord(&mut params, l, is_bias, i);
                *coord(&mut params, l, is_bias, i) = orig + FD_STEP;
                let (lp, _, _, pat_p) = loss_and_pattern(&net, &params, labels, &rows, cfg.seed)?;
                *coord(&mut params, l, is_bias, i) = orig - FD_STEP;
                let (lm, _, _, pat_m) = loss_and_pattern(&net, &params, labels, &rows, cfg.seed)?;
                *coord(&mut params, l, is_bias, i) = orig;
                if pat_p != pat_m {
                    skipped += 1;
                    continue;
                }
                let numeric = (lp - lm) / (2.0 * FD_STEP);
                let a = *coord(&mut analytic, l, is_bias, i);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
                worst = worst.max(rel);
                checked += 1;
            }
            tensors.push(TensorCheck {
                name: format!("layer{l}.{}", if is_bias { "b" } else { "w" }),
                max_rel_error: worst,
                checked,
            });
        }
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        config: cfg.describe(),
        max_rel_error,
        tensors,
        skipped_kinks: skipped,
        passed: max_rel_error < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::config::{Filter, Skip};
    use crate::testutil::random_graph;

    fn cfg(depth: usize, filter: Filter, skip: Skip) -> ExpertConfig {
        ExpertConfig {
            depth,
            filter,
            skip,
            hidden_dim: 6,
            dropout: 0.0,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn mlp_on_eight_nodes() {
        let g = random_graph(8, 0.3, 3, 4, false, 1);
        let rep = gradient_check(&cfg(0, Filter::Identity, Skip::None), &g, 1e-6).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn two_layer_sym_rescat() {
        let g = random_graph(16, 0.25, 3, 4, false, 2);
        let rep = gradient_check(&cfg(2, Filter::SymNorm, Skip::ResCat), &g, 1e-5).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn directed_one_layer() {
        let g = random_graph(16, 0.2, 3, 4, true, 3);
        let rep = gradient_check(&cfg(1, Filter::Directed, Skip::None), &g, 1e-5).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn dropout_masks_held_fixed() {
        let g = random_graph(12, 0.3, 2, 3, false, 4);
        let c = ExpertConfig { dropout: 0.3, ..cfg(1, Filter::RwNorm, Skip::ResCat) };
        let rep = gradient_check(&c, &g, 1e-5).unwrap();
        assert!(rep.passed, "{rep:?}");
    }
}
