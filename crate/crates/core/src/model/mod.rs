//! Feature-tokenized transformer classifier.
//!
//! Each feature becomes one token: a learned embedding of the feature name
//! plus either a projection of the numerical value or an embedding of the
//! category. Missing cells still produce a token (the name embedding), but
//! the attention masks keep it out of every observed token's context. A CLS
//! token is prepended to every sequence and its final representation feeds a
//! linear classification head.
//!
//! All tables are keyed by feature name, so the same feature seen in two
//! partition windows trains the same parameters.

mod encoder;
mod ops;
mod params;
mod tokenize;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::check_heads;
use crate::data::{FeatureKind, FeatureSchema};
use crate::{seed, Error, Result};

pub use encoder::{forward, loss_and_grad, ForwardPass};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tokenize::{tokenize, TokenBatch, TokenSource, UnseenFeature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
    #[serde(rename = "leakyrelu")]
    LeakyRelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub activation: Activation,
    /// Multiplies the feed-forward branch by a sigmoid gate of its input.
    pub gated_ffn: bool,
    pub class_count: usize,
    /// Start the classification head at zero (uniform initial predictions).
    #[serde(default)]
    pub zero_init_head: bool,
}

impl ModelConfig {
    /// Two encoder layers, 128-dim tokens, 8 heads, 2048-wide ReLU FFN, dropout 0.3.
    pub fn large(class_count: usize) -> Self {
        Self {
            model_dim: 128,
            num_layers: 2,
            num_heads: 8,
            ffn_dim: 2048,
            dropout: 0.3,
            activation: Activation::Relu,
            gated_ffn: false,
            class_count,
            zero_init_head: false,
        }
    }

    /// Smaller configuration that trains in seconds on a laptop CPU.
    pub fn desk(class_count: usize) -> Self {
        Self {
            model_dim: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_dim: 256,
            ..Self::large(class_count)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        check_heads(self.model_dim, self.num_heads)?;
        if self.num_layers == 0 || self.ffn_dim == 0 {
            return Err(Error::Config(
                "num_layers and ffn_dim must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.class_count < 2 {
            return Err(Error::Config("class_count must be at least 2".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::large(2)
    }
}

/// Parameters owned by one registered feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub kind: FeatureKind,
    pub name_embedding: ParamId,
    /// `1 x model_dim` projection for numerical features, `categories x
    /// model_dim` table for categorical ones.
    pub value: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub gate_w: Option<ParamId>,
    pub gate_b: Option<ParamId>,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamStore,
    features: Vec<FeatureEntry>,
    feature_ids: BTreeMap<String, usize>,
    pub cls: ParamId,
    pub layers: Vec<LayerParams>,
    pub head_w: ParamId,
    pub head_b: ParamId,
    init_seed: u64,
    registrations: u64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

fn filled(len: usize, value: f64) -> Vec<f64> {
    alloc::vec![value; len]
}

impl ModelState {
    /// Encoder and head parameters; feature tables are added on registration.
    pub fn new(config: ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(init_seed, seed::TAG_INIT);
        let (dm, ff) = (config.model_dim, config.ffn_dim);
        let mut params = ParamStore::default();
        // Lookup tables map a single active input: fan_in = 1.
        let cls = params.add("cls".into(), 1, dm, uniform(&mut rng, dm, 1));
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let mut add = |name: &str, rows: usize, cols: usize, data: Vec<f64>| {
                params.add(format!("layer{l}.{name}"), rows, cols, data)
            };
            let wq = add("attn.wq", dm, dm, uniform(&mut rng, dm * dm, dm));
            let wk = add("attn.wk", dm, dm, uniform(&mut rng, dm * dm, dm));
            let wv = add("attn.wv", dm, dm, uniform(&mut rng, dm * dm, dm));
            let wo = add("attn.wo", dm, dm, uniform(&mut rng, dm * dm, dm));
            let ln1_gain = add("ln1.gain", 1, dm, filled(dm, 1.0));
            let ln1_bias = add("ln1.bias", 1, dm, filled(dm, 0.0));
            let ffn_w1 = add("ffn.w1", dm, ff, uniform(&mut rng, dm * ff, dm));
            let ffn_b1 = add("ffn.b1", 1, ff, filled(ff, 0.0));
            let ffn_w2 = add("ffn.w2", ff, dm, uniform(&mut rng, ff * dm, ff));
            let ffn_b2 = add("ffn.b2", 1, dm, filled(dm, 0.0));
            let (gate_w, gate_b) = if config.gated_ffn {
                (
                    Some(add("ffn.gate_w", dm, dm, uniform(&mut rng, dm * dm, dm))),
                    Some(add("ffn.gate_b", 1, dm, filled(dm, 0.0))),
                )
            } else {
                (None, None)
            };
            let ln2_gain = add("ln2.gain", 1, dm, filled(dm, 1.0));
            let ln2_bias = add("ln2.bias", 1, dm, filled(dm, 0.0));
            layers.push(LayerParams {
                wq,
                wk,
                wv,
                wo,
                ln1_gain,
                ln1_bias,
                ffn_w1,
                ffn_b1,
                ffn_w2,
                ffn_b2,
                gate_w,
                gate_b,
                ln2_gain,
                ln2_bias,
            });
        }
        let c = config.class_count;
        let head = if config.zero_init_head {
            filled(dm * c, 0.0)
        } else {
            uniform(&mut rng, dm * c, dm)
        };
        let head_w = params.add("head.w".into(), dm, c, head);
        let head_b = params.add("head.b".into(), 1, c, filled(c, 0.0));
        Ok(Self {
            config,
            params,
            features: Vec::new(),
            feature_ids: BTreeMap::new(),
            cls,
            layers,
            head_w,
            head_b,
            init_seed,
            registrations: 0,
        })
    }

    pub fn features(&self) -> &[FeatureEntry] {
        &self.features
    }

    pub fn feature_id(&self, name: &str) -> Option<usize> {
        self.feature_ids.get(name).copied()
    }

    pub fn feature(&self, id: usize) -> &FeatureEntry {
        &self.features[id]
    }

    /// Registers `schema` if unseen and returns its id. Categorical tables
    /// grow when the schema lists more categories than were registered.
    pub fn register_feature(&mut self, schema: &FeatureSchema) -> Result<usize> {
        let dm = self.config.model_dim;
        if let Some(id) = self.feature_id(&schema.name) {
            let entry = &self.features[id];
            if entry.kind != schema.kind {
                return Err(Error::Config(format!(
                    "feature `{}` registered as {:?}, now {:?}",
                    schema.name, entry.kind, schema.kind
                )));
            }
            if schema.kind == FeatureKind::Categorical {
                let value = entry.value;
                let have = self.params.get(value).rows;
                let want = schema.categories.len();
                if want > have {
                    let mut rng = self.next_registration_rng();
                    let param = self.params.get_mut(value);
                    param.data.extend(uniform(&mut rng, (want - have) * dm, 1));
                    param.rows = want;
                }
            }
            return Ok(id);
        }
        let mut rng = self.next_registration_rng();
        let base = format!("feature.{}", schema.name);
        let name_embedding =
            self.params
                .add(format!("{base}.name"), 1, dm, uniform(&mut rng, dm, 1));
        let rows = match schema.kind {
            FeatureKind::Numerical => 1,
            FeatureKind::Categorical => schema.categories.len(),
        };
        let value = self.params.add(
            format!("{base}.value"),
            rows,
            dm,
            uniform(&mut rng, rows * dm, 1),
        );
        let id = self.features.len();
        self.features.push(FeatureEntry {
            name: schema.name.clone(),
            kind: schema.kind,
            name_embedding,
            value,
        });
        self.feature_ids.insert(schema.name.clone(), id);
        Ok(id)
    }

    fn next_registration_rng(&mut self) -> rand_chacha::ChaCha8Rng {
        self.registrations += 1;
        seed::rng(
            seed::derive(self.init_seed, self.registrations),
            seed::TAG_INIT,
        )
    }

    /// Parameter ids owned by a registered feature.
    pub fn feature_params(&self, name: &str) -> Option<[ParamId; 2]> {
        self.feature_id(name).map(|id| {
            let e = &self.features[id];
            [e.name_embedding, e.value]
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|(_, p)| p.data.len()).sum()
    }
}

#[cfg(test)]
mod tests;
