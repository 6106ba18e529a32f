use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

pub type Masks = (Vec<bool>, Vec<bool>, Vec<bool>);

/// Stratified random train/val/test masks.
///
/// Each class is shuffled independently and cut at rounded fractions of its
/// size. When the fractions sum to one, the test split takes the remainder.
pub fn random_masks(labels: &[usize], fractions: (f64, f64, f64), seed: u64) -> Result<Masks> {
    let (ftr, fva, fte) = fractions;
    if !(ftr > 0.0 && fva > 0.0 && fte > 0.0) || ftr + fva + fte > 1.0 + 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions must be positive and sum to at most 1, got {fractions:?}"
        )));
    }
    let n = labels.len();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (v, &c) in labels.iter().enumerate() {
        by_class[c].push(v);
    }
    let full = (ftr + fva + fte - 1.0).abs() < 1e-9;
    let mut r = rng::stream(seed, "masks", &[]);
    let (mut tr, mut va, mut te) = (vec![false; n], vec![false; n], vec![false; n]);
    for (c, nodes) in by_class.iter_mut().enumerate() {
        if nodes.is_empty() {
            continue;
        }
        if nodes.len() < 3 {
            return Err(Error::Degenerate(format!(
                "class {c} has {} nodes, cannot stratify",
                nodes.len()
            )));
        }
        nodes.shuffle(&mut r);
        let k = nodes.len();
        let ntr = ((ftr * k as f64).round() as usize).clamp(1, k);
        let nva = ((fva * k as f64).round() as usize).min(k - ntr);
        let nte = if full {
            k - ntr - nva
        } else {
            ((fte * k as f64).round() as usize).min(k - ntr - nva)
        };
        for &v in &nodes[..ntr] {
            tr[v] = true;
        }
        for &v in &nodes[ntr..ntr + nva] {
            va[v] = true;
        }
        for &v in &nodes[ntr + nva..ntr + nva + nte] {
            te[v] = true;
        }
    }
    Ok((tr, va, te))
}
