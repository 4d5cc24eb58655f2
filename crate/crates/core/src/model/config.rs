use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::fields::N_FIELDS;
use crate::graph::Propagation;
use crate::nn::BatchNorm;

/// Order of operations inside every hidden MLP block.
pub const MLP_BLOCK_ORDER: &str = "linear,batchnorm,relu,dropout";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Flat1,
    Flat9,
    GcnGlobal,
    GcnSelective9,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Flat1,
        Variant::Flat9,
        Variant::GcnGlobal,
        Variant::GcnSelective9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Flat1 => "flat1",
            Variant::Flat9 => "flat9",
            Variant::GcnGlobal => "gcn_global",
            Variant::GcnSelective9 => "gcn_selective9",
        }
    }

    pub fn is_graph(self) -> bool {
        matches!(self, Variant::GcnGlobal | Variant::GcnSelective9)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| ModelError::UnknownVariant(s.to_string()))
    }
}

/// What the selective variant feeds to its MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Global mean concatenated with the nine field representations.
    #[default]
    Mixed,
    /// The nine field representations only.
    Selective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Width `d` of the input feature vectors.
    pub input_dim: usize,
    pub n_gcn_layers: usize,
    pub hidden_dim: usize,
    /// Output width of the last GCN layer in the selective variant.
    pub selective_out_dim: usize,
    pub pooling: Pooling,
    pub propagation: Propagation,
    /// Hidden widths of the classification MLP (output width is 1).
    pub mlp_hidden: Vec<usize>,
    pub dropout: f64,
    /// Rank of the factorised first layer of the flat baselines.
    pub low_rank: usize,
    /// Hidden and output width of the per-field head shared by `flat9`.
    pub flat9_head_hidden: usize,
    pub flat9_head_out: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub mlp_block_order: String,
    /// Free-form description of where input features came from.
    pub feature_source: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::GcnSelective9,
            input_dim: 768,
            n_gcn_layers: 3,
            hidden_dim: 200,
            selective_out_dim: 20,
            pooling: Pooling::Mixed,
            propagation: Propagation::ChildrenMean,
            mlp_hidden: vec![100, 50],
            dropout: 0.5,
            low_rank: 64,
            flat9_head_hidden: 100,
            flat9_head_out: 20,
            bn_momentum: BatchNorm::MOMENTUM,
            bn_eps: BatchNorm::EPS,
            mlp_block_order: MLP_BLOCK_ORDER.to_string(),
            feature_source: "bow-tfidf-rp".to_string(),
        }
    }
}

impl ModelConfig {
    pub fn new(variant: Variant, input_dim: usize) -> Self {
        Self {
            variant,
            input_dim,
            ..Self::default()
        }
    }

    /// Output width of each GCN layer.
    pub fn gcn_dims(&self) -> Vec<usize> {
        if !self.variant.is_graph() {
            return Vec::new();
        }
        let last = match self.variant {
            Variant::GcnSelective9 => self.selective_out_dim,
            _ => self.hidden_dim,
        };
        (0..self.n_gcn_layers)
            .map(|l| {
                if l + 1 == self.n_gcn_layers {
                    last
                } else {
                    self.hidden_dim
                }
            })
            .collect()
    }

    /// Width of the vector entering the classification MLP.
    pub fn pooled_width(&self) -> usize {
        match self.variant {
            Variant::Flat1 => self.input_dim,
            Variant::Flat9 => N_FIELDS * self.flat9_head_out,
            Variant::GcnGlobal => self.hidden_dim,
            Variant::GcnSelective9 => match self.pooling {
                Pooling::Mixed => (N_FIELDS + 1) * self.selective_out_dim,
                Pooling::Selective => N_FIELDS * self.selective_out_dim,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.variant.is_graph() && self.n_gcn_layers == 0 {
            return bad("n_gcn_layers must be at least 1".into());
        }
        if self.hidden_dim == 0 || self.selective_out_dim == 0 || self.mlp_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 {
            return bad("batch-norm momentum must lie in [0, 1] and eps be positive".into());
        }
        if self.mlp_block_order != MLP_BLOCK_ORDER {
            return bad(format!("only the block order {MLP_BLOCK_ORDER:?} is supported"));
        }
        match self.variant {
            Variant::Flat1 if self.mlp_hidden.is_empty() => {
                bad("flat1 needs at least one hidden MLP layer for its low-rank input".into())
            }
            Variant::Flat9 if self.flat9_head_hidden == 0 || self.flat9_head_out == 0 => {
                bad("flat9 head widths must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_widths() {
        let sel = ModelConfig::new(Variant::GcnSelective9, 768);
        assert_eq!(sel.gcn_dims(), [200, 200, 20]);
        assert_eq!(sel.pooled_width(), 200);
        let glob = ModelConfig::new(Variant::GcnGlobal, 768);
        assert_eq!(glob.gcn_dims(), [200, 200, 200]);
        assert_eq!(glob.pooled_width(), 200);
        let pure = ModelConfig {
            pooling: Pooling::Selective,
            ..sel.clone()
        };
        assert_eq!(pure.pooled_width(), 180);
        assert_eq!(ModelConfig::new(Variant::Flat9, 768).pooled_width(), 180);
        assert!(ModelConfig::new(Variant::Flat1, 768).gcn_dims().is_empty());
    }

    #[test]
    fn json_round_trip_and_names() {
        let c = ModelConfig::new(Variant::Flat9, 32);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains(r#""variant":"flat9""#));
        assert!(s.contains(r#""propagation":"children_mean""#));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("gcn".parse::<Variant>().is_err());
        let partial: ModelConfig = serde_json::from_str(r#"{"variant":"gcn_global","input_dim":8}"#).unwrap();
        assert_eq!(partial.hidden_dim, 200);
        assert!(serde_json::from_str::<ModelConfig>(r#"{"hiden_dim":3}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let mut c = ModelConfig::default();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.n_gcn_layers = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.mlp_block_order = "linear,relu,batchnorm,dropout".into();
        assert!(c.validate().is_err());
    }
}
