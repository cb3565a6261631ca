use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::partition::partition_count;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// Attention score products over the `m` feature tokens only.
    ScoreOnly,
    /// Scores and weighted sums over `m + 1` tokens plus Q/K/V/output projections.
    AttentionOnly,
    /// Attention plus the feed-forward block.
    Full,
}

impl CostMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostMode::ScoreOnly => "score_only",
            CostMode::AttentionOnly => "attention_only",
            CostMode::Full => "full",
        }
    }
}

/// Forward multiply counts of the encoder for a given sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mode: CostMode,
}

impl CostModel {
    pub fn new(mode: CostMode) -> Self {
        Self {
            model_dim: 128,
            ffn_dim: 2048,
            num_layers: 2,
            num_heads: 8,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.ffn_dim == 0 || self.num_layers == 0 || self.num_heads == 0 {
            return Err(Error::Config(
                "cost model dimensions must be positive".into(),
            ));
        }
        if self.model_dim % self.num_heads != 0 {
            return Err(Error::Config(
                "model_dim must be divisible by num_heads".into(),
            ));
        }
        Ok(())
    }

    /// Multiplies for one forward pass over `m` features.
    pub fn ops(&self, m: usize) -> u128 {
        let dm = self.model_dim as u128;
        let hd = (self.model_dim / self.num_heads) as u128;
        let heads = self.num_heads as u128;
        let m = m as u128;
        let l = m + 1;
        let per_layer = match self.mode {
            CostMode::ScoreOnly => heads * m * m * hd * 2,
            CostMode::AttentionOnly => heads * l * l * hd * 2 + 4 * l * dm * dm,
            CostMode::Full => {
                heads * l * l * hd * 2 + 4 * l * dm * dm + 2 * l * dm * self.ffn_dim as u128
            }
        };
        per_layer * self.num_layers as u128
    }
}

/// `P(k) * C(k) / C(d)`: forward cost of the windowed schedule relative to
/// one pass over all `d` features.
pub fn cost_ratio(d: usize, k: usize, cm: &CostModel) -> Result<f64> {
    cm.validate()?;
    if k < 2 || k > d {
        return Err(Error::Config(format!("window size {k} outside [2, {d}]")));
    }
    let p = partition_count(d, k) as u128;
    Ok((p * cm.ops(k)) as f64 / cm.ops(d) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub d: usize,
    pub k: usize,
    pub partitions: usize,
    pub ratio: f64,
}

/// `cost_ratio(d, k)` for every `k` in `kmin..=kmax`.
pub fn cost_curve(d: usize, kmin: usize, kmax: usize, cm: &CostModel) -> Result<Vec<CostPoint>> {
    (kmin..=kmax)
        .map(|k| {
            Ok(CostPoint {
                d,
                k,
                partitions: partition_count(d, k),
                ratio: cost_ratio(d, k, cm)?,
            })
        })
        .collect()
}
