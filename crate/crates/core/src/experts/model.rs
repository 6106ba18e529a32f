//! Forward pass and hand-derived backward pass of a message-passing expert.
//!
//! Depth 0 is a one-hidden-layer MLP. Depth `L >= 1` stacks `L` propagation
//! layers `H <- relu(drop(agg(H)) W + b)` and a linear head, where `agg`
//! concatenates the filter's propagated blocks and, with `res-cat`, the layer
//! input itself.

use ndarray::{concatenate, s, Array2, Axis};

use super::config::{ExpertConfig, Skip};
use super::propagation::PropagationOperator;
use crate::error::{Error, Result};
use crate::nn::{dropout_mask, relu, Linear};
use crate::rng::Rng;

/// Per-layer parameters; the last entry is the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Linear>,
}

impl Params {
    pub fn init(cfg: &ExpertConfig, in_dim: usize, num_classes: usize, rng: &mut Rng) -> Self {
        let mut layers = Vec::new();
        let mult = cfg.input_multiplier();
        if cfg.depth == 0 {
            layers.push(Linear::glorot(in_dim, cfg.hidden_dim, rng));
        } else {
            let mut width = in_dim;
            for _ in 0..cfg.depth {
                layers.push(Linear::glorot(mult * width, cfg.hidden_dim, rng));
                width = cfg.hidden_dim;
            }
        }
        layers.push(Linear::glorot(cfg.hidden_dim, num_classes, rng));
        Params { layers }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Linear::num_params).sum()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.w.dim()).collect()
    }
}

pub enum Mode<'a> {
    /// Dropout active, masks drawn from the given stream.
    Train(&'a mut Rng),
    Eval,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input of every linear layer after dropout.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pub(crate) pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

/// An expert's architecture bound to a graph and its input features.
pub struct Network<'a> {
    cfg: &'a ExpertConfig,
    prop: &'a PropagationOperator,
    /// Aggregated raw features: the (constant) first-layer input.
    input0: Array2<f64>,
}

impl<'a> Network<'a> {
    pub fn new(cfg: &'a ExpertConfig, prop: &'a PropagationOperator, x: &Array2<f64>) -> Result<Self> {
        cfg.validate()?;
        if prop.matrices().first().is_some_and(|m| m.dim() != x.nrows()) {
            return Err(Error::Shape("operator and feature rows differ".into()));
        }
        let input0 = if cfg.depth == 0 {
            x.clone()
        } else {
            Self::aggregate(cfg, prop, x)
        };
        Ok(Network { cfg, prop, input0 })
    }

    pub fn config(&self) -> &ExpertConfig {
        self.cfg
    }

    fn aggregate(cfg: &ExpertConfig, prop: &PropagationOperator, h: &Array2<f64>) -> Array2<f64> {
        let mut blocks = prop.apply(h);
        if cfg.skip == Skip::ResCat {
            blocks.push(h.clone());
        }
        if blocks.len() == 1 {
            return blocks.pop().unwrap();
        }
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        concatenate(Axis(1), &views).expect("blocks share row count")
    }

    pub fn forward(&self, params: &Params, mut mode: Mode<'_>) -> Result<(Array2<f64>, Cache)> {
        let nh = params.layers.len() - 1;
        if params.layers[0].w.nrows() != self.input0.ncols() {
            return Err(Error::Shape(format!(
                "first layer expects {} inputs, got {}",
                params.layers[0].w.nrows(),
                self.input0.ncols()
            )));
        }
        let p = self.cfg.dropout;
        let mut cache = Cache {
            inputs: Vec::with_capacity(nh + 1),
            pre: Vec::with_capacity(nh),
            masks: Vec::with_capacity(nh + 1),
        };
        let mut drop = |a: Array2<f64>, cache: &mut Cache| {
            let mask = match &mut mode {
                Mode::Train(r) => dropout_mask(a.dim(), p, r),
                Mode::Eval => None,
            };
            let a = match &mask {
                Some(m) => a * m,
                None => a,
            };
            cache.masks.push(mask);
            a
        };
        let mut h = Array2::zeros((0, 0));
        for (l, layer) in params.layers[..nh].iter().enumerate() {
            let agg = if l == 0 {
                self.input0.clone()
            } else {
                Self::aggregate(self.cfg, self.prop, &h)
            };
            let a = drop(agg, &mut cache);
            let z = layer.forward(&a);
            h = relu(&z);
            cache.inputs.push(a);
            cache.pre.push(z);
        }
        let a = drop(h, &mut cache);
        let logits = params.layers[nh].forward(&a);
        cache.inputs.push(a);
        Ok((logits, cache))
    }

    /// Parameter gradients of a scalar loss given its gradient w.r.t. logits.
    pub fn backward(&self, params: &Params, cache: &Cache, dlogits: &Array2<f64>) -> Params {
        let nh = params.layers.len() - 1;
        let mut grads = vec![Linear::zeros(0, 0); nh + 1];
        grads[nh] = Linear::backward(&cache.inputs[nh], dlogits);
        let mut dh = dlogits.dot(&params.layers[nh].w.t());
        if let Some(m) = &cache.masks[nh] {
            dh *= m;
        }
        for l in (0..nh).rev() {
            let dz = dh * &cache.pre[l].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            grads[l] = Linear::backward(&cache.inputs[l], &dz);
            if l == 0 {
                break;
            }
            let mut da = dz.dot(&params.layers[l].w.t());
            if let Some(m) = &cache.masks[l] {
                da *= m;
            }
            let width = cache.pre[l - 1].ncols();
            let nb = self.prop.num_blocks();
            let blocks: Vec<Array2<f64>> = (0..nb)
                .map(|b| da.slice(s![.., b * width..(b + 1) * width]).to_owned())
                .collect();
            let mut prev = self.prop.apply_transpose(&blocks);
            if self.cfg.skip == Skip::ResCat {
                prev += &da.slice(s![.., nb * width..(nb + 1) * width]);
            }
            dh = prev;
        }
        Params { layers: grads }
    }
}
