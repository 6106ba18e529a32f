//! Global scalar-weight ensemble: a seeded random search over the simplex
//! followed by coordinate hill-climbing.

use ndarray::Array2;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSearch {
    pub weights: Vec<f64>,
    pub val_acc: f64,
    pub evaluations: usize,
}

/// Accuracy of `argmax(Σ_k w_k Z^k)` on the given rows (lowest class wins ties).
pub fn weighted_accuracy(zs: &[&Array2<f64>], w: &[f64], y: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let c = zs[0].ncols();
    let mut mix = vec![0.0; c];
    let mut hit = 0usize;
    for &v in rows {
        mix.iter_mut().for_each(|m| *m = 0.0);
        for (z, &wk) in zs.iter().zip(w) {
            if wk != 0.0 {
                for (m, &x) in mix.iter_mut().zip(z.row(v)) {
                    *m += wk * x;
                }
            }
        }
        let mut best = 0;
        for j in 1..c {
            if mix[j] > mix[best] {
                best = j;
            }
        }
        hit += usize::from(best == y[v]);
    }
    hit as f64 / rows.len() as f64
}

fn normalized(mut w: Vec<f64>) -> Option<Vec<f64>> {
    let s: f64 = w.iter().sum();
    if !(s > 0.0) {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= s);
    Some(w)
}

/// Maximizes validation accuracy of the weighted logit sum over the
/// probability simplex.
///
/// The first half of the budget probes every one-hot vertex, the uniform
/// point and then flat-Dirichlet draws; the second half hill-climbs one
/// coordinate at a time, halving the step after a full sweep without
/// improvement. Returns the first-found best.
pub fn tune_global_weights(
    zs: &[&Array2<f64>],
    y: &[usize],
    val_mask: &[bool],
    budget: usize,
    seed: u64,
) -> Result<WeightSearch> {
    let k = zs.len();
    if k < 2 {
        return Err(Error::Degenerate("weight search needs at least two experts".into()));
    }
    if budget < k {
        return Err(Error::InvalidConfig(format!("budget {budget} smaller than expert count {k}")));
    }
    let rows: Vec<usize> = (0..y.len()).filter(|&v| val_mask[v]).collect();
    let eval = |w: &[f64]| weighted_accuracy(zs, w, y, &rows);

    let mut cands: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    cands.push(vec![1.0 / k as f64; k]);
    let n_random = (budget / 2).max(cands.len());
    let mut r = rng::stream(seed, "weight-search", &[]);
    while cands.len() < n_random {
        let draw: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut r)).collect();
        if let Some(w) = normalized(draw) {
            cands.push(w);
        }
    }
    let scores: Vec<f64> = cands.par_iter().map(|w| eval(w)).collect();
    let mut best_i = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_i] {
            best_i = i;
        }
    }
    let mut best = cands.swap_remove(best_i);
    let mut best_acc = scores[best_i];
    let mut evaluations = scores.len();

    let mut step = 0.1;
    let mut stale = 0;
    for i in 0..budget.saturating_sub(evaluations) {
        let coord = (i / 2) % k;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut w = best.clone();
        w[coord] = (w[coord] + sign * step).max(0.0);
        evaluations += 1;
        let improved = match normalized(w) {
            Some(w) => {
                let acc = eval(&w);
                if acc > best_acc {
                    best = w;
                    best_acc = acc;
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= 2 * k {
                step /= 2.0;
                stale = 0;
            }
        }
    }
    Ok(WeightSearch {
        weights: best,
        val_acc: best_acc,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::argmax_rows;
    use rand::Rng as _;

    fn fixture(seed: u64) -> (Array2<f64>, Array2<f64>, Vec<usize>) {
        let mut r = rng::stream(seed, "fixture", &[]);
        let n = 200;
        let y: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        let good = Array2::from_shape_fn((n, 3), |(i, j)| {
            let noise: f64 = r.random();
            if j == y[i] && i % 10 != 0 {
                2.0 + noise
            } else {
                noise
            }
        });
        let noise = Array2::from_shape_fn((n, 3), |_| r.random::<f64>() * 3.0);
        (good, noise, y)
    }

    #[test]
    fn dominant_expert_gets_the_mass() {
        let (good, noise, y) = fixture(1);
        let mask = vec![true; y.len()];
        let res = tune_global_weights(&[&noise, &good, &noise], &y, &mask, 60, 3).unwrap();
        let solo = weighted_accuracy(&[&good], &[1.0], &y, &(0..y.len()).collect::<Vec<_>>());
        assert!(res.weights[1] >= 0.8, "{:?}", res.weights);
        assert!(res.val_acc >= solo);
        assert!(res.evaluations <= 60);
    }

    #[test]
    fn twins_match_solo_accuracy() {
        let (good, _, y) = fixture(2);
        let mask = vec![true; y.len()];
        let res = tune_global_weights(&[&good, &good], &y, &mask, 20, 0).unwrap();
        let pred = argmax_rows(&good);
        let solo = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        assert_eq!(res.val_acc, solo);
    }

    #[test]
    fn vertices_are_always_probed_and_deterministic() {
        let (good, noise, y) = fixture(3);
        let mask: Vec<bool> = (0..y.len()).map(|i| i % 2 == 0).collect();
        let rows: Vec<usize> = (0..y.len()).filter(|&i| mask[i]).collect();
        let res = tune_global_weights(&[&noise, &good], &y, &mask, 2, 9).unwrap();
        for w in [[1.0, 0.0], [0.0, 1.0]] {
            assert!(res.val_acc >= weighted_accuracy(&[&noise, &good], &w, &y, &rows));
        }
        let a = tune_global_weights(&[&noise, &good], &y, &mask, 40, 9).unwrap();
        assert_eq!(a, tune_global_weights(&[&noise, &good], &y, &mask, 40, 9).unwrap());
        assert!(tune_global_weights(&[&good], &y, &mask, 40, 9).is_err());
    }
}
