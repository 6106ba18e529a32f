use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Filter {
    /// `I`: no message passing.
    Identity,
    /// `D~^-1/2 (A + I) D~^-1/2`
    #[serde(rename = "sym", alias = "sym-norm")]
    SymNorm,
    /// `D~^-1 (A + I)`
    #[serde(rename = "rw", alias = "rw-norm")]
    RwNorm,
    /// `I - D^-1/2 A D^-1/2`
    HighPass,
    /// Row-normalized `(A + I)` and `(A^T + I)` on the directed graph.
    #[serde(rename = "dir", alias = "directed")]
    Directed,
}

impl Filter {
    pub const ALL: [Filter; 5] = [
        Filter::Identity,
        Filter::SymNorm,
        Filter::RwNorm,
        Filter::HighPass,
        Filter::Directed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Filter::Identity => "identity",
            Filter::SymNorm => "sym",
            Filter::RwNorm => "rw",
            Filter::HighPass => "high-pass",
            Filter::Directed => "dir",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Skip {
    None,
    /// Concatenate the layer input to the propagated features.
    ResCat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub depth: usize,
    pub filter: Filter,
    pub skip: Skip,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            depth: 2,
            filter: Filter::SymNorm,
            skip: Skip::None,
            hidden_dim: 64,
            dropout: 0.5,
            epochs: 300,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            patience: 50,
            seed: 0,
        }
    }
}

pub const MAX_DEPTH: usize = 4;

impl ExpertConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.depth > MAX_DEPTH {
            return bad("depth must be at most 4");
        }
        if self.depth == 0 && (self.filter != Filter::Identity || self.skip != Skip::None) {
            return bad("depth 0 is a plain MLP: filter must be identity and skip none");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate must be positive and weight_decay nonnegative");
        }
        Ok(())
    }

    /// Forces the depth-0 constraints (identity filter, no skip).
    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        if depth == 0 {
            self.filter = Filter::Identity;
            self.skip = Skip::None;
        }
        self
    }

    /// Widening of a layer's input relative to the previous hidden width.
    pub(crate) fn input_multiplier(&self) -> usize {
        let agg = if self.filter == Filter::Directed { 2 } else { 1 };
        agg + usize::from(self.skip == Skip::ResCat)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ExpertConfig = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn describe(&self) -> String {
        format!(
            "L{}-{}-{}-h{}-p{}",
            self.depth,
            self.filter.name(),
            if self.skip == Skip::ResCat { "rescat" } else { "noskip" },
            self.hidden_dim,
            self.dropout
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_rules() {
        let cfg = ExpertConfig::default();
        assert!(ExpertConfig { depth: 0, ..cfg.clone() }.validate().is_err());
        assert!(cfg.clone().with_depth(0).validate().is_ok());
        assert!(ExpertConfig { dropout: 1.0, ..cfg.clone() }.validate().is_err());
        assert!(ExpertConfig { depth: 5, ..cfg }.validate().is_err());
    }

    #[test]
    fn toml_defaults_fill_in() {
        let cfg = ExpertConfig::from_toml("depth = 1\nfilter = \"dir\"\nskip = \"res-cat\"\n").unwrap();
        assert_eq!(cfg.filter, Filter::Directed);
        assert_eq!(cfg.input_multiplier(), 3);
        assert_eq!(cfg.epochs, 300);
    }
}
