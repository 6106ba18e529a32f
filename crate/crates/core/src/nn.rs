//! Small dense building blocks shared by experts and the gate: linear layers,
//! softmax cross-entropy, Adam and dropout masks.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Linear {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn forward(&self, a: &Array2<f64>) -> Array2<f64> {
        a.dot(&self.w) + &self.b
    }

    pub fn zeros_like(&self) -> Self {
        Linear::zeros(self.w.nrows(), self.w.ncols())
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Gradients for `z = a W + b` given `dz`; returns the parameter gradient.
    pub fn backward(a: &Array2<f64>, dz: &Array2<f64>) -> Linear {
        Linear {
            w: a.t().dot(dz),
            b: dz.sum_axis(Axis(0)),
        }
    }
}

pub fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

/// Inverted-dropout scale mask, or `None` when `p == 0`.
pub fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut Rng) -> Option<Array2<f64>> {
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < p { 0.0 } else { keep }))
}

pub fn log_softmax_row(row: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.mapv(|v| v - lse)
}

pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let ls = log_softmax_row(row.view());
        row.assign(&ls.mapv(f64::exp));
    }
    out
}

/// Mean cross-entropy over `rows` and its gradient w.r.t. the logits (zero
/// outside `rows`).
pub fn softmax_xent(logits: &Array2<f64>, labels: &[usize], rows: &[usize]) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(logits.raw_dim());
    if rows.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for &r in rows {
        let ls = log_softmax_row(logits.row(r));
        loss -= ls[labels[r]];
        let mut g = grad.row_mut(r);
        for (k, l) in ls.iter().enumerate() {
            g[k] = scale * (l.exp() - if k == labels[r] { 1.0 } else { 0.0 });
        }
    }
    (loss * scale, grad)
}

/// Row argmax with ties going to the lowest index.
pub fn argmax_rows(z: &Array2<f64>) -> Vec<usize> {
    z.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(pred: &[usize], labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|&&r| pred[r] == labels[r]).count() as f64 / rows.len() as f64
}

pub fn mask_rows(mask: &[bool]) -> Vec<usize> {
    (0..mask.len()).filter(|&i| mask[i]).collect()
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with L2 weight decay folded into the gradient (applied to weights,
/// not biases).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    t: i32,
    m: Vec<Linear>,
    v: Vec<Linear>,
}

impl Adam {
    pub fn new(layers: &[Linear], lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            t: 0,
            m: layers.iter().map(Linear::zeros_like).collect(),
            v: layers.iter().map(Linear::zeros_like).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Linear], grads: &[Linear]) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        let lr = self.lr;
        let wd = self.weight_decay;
        let upd = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
        };
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut p.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| {
                    let g = g + wd * *p;
                    upd(p, g, m, v)
                });
            ndarray::Zip::from(&mut p.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| upd(p, g, m, v));
        }
    }
}

/// `0.5 * wd * sum ||W||^2` over weight matrices.
pub fn l2_penalty(layers: &[Linear], weight_decay: f64) -> f64 {
    0.5 * weight_decay * layers.iter().map(|l| l.w.iter().map(|x| x * x).sum::<f64>()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax_rows(&array![[0.2, 0.2], [0.1, 0.3], [1.0, 1.0]]), vec![0, 1, 0]);
    }

    #[test]
    fn xent_gradient_matches_finite_difference() {
        let z = array![[0.3, -1.0, 2.0], [0.0, 0.5, 0.1]];
        let y = [2, 0];
        let (_, g) = softmax_xent(&z, &y, &[0, 1]);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut zp = z.clone();
                zp[[i, j]] += h;
                let mut zm = z.clone();
                zm[[i, j]] -= h;
                let fd = (softmax_xent(&zp, &y, &[0, 1]).0 - softmax_xent(&zm, &y, &[0, 1]).0) / (2.0 * h);
                assert_abs_diff_eq!(g[[i, j]], fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&array![[1000.0, 1000.0], [-3.0, 4.0]]);
        for row in p.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p[[0, 0]], 0.5, epsilon = 1e-12);
    }
}
