use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Cell, DatasetView};
use crate::{Error, Result};

use super::ModelState;

/// What to do with a view column whose feature the model has never seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnseenFeature {
    Error,
    /// Emit a missing token (also used for categories beyond the trained table).
    TreatAsMissing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TokenSource {
    Cls,
    Missing { feature: Option<usize> },
    Numerical { feature: usize, value: f64 },
    Categorical { feature: usize, category: u32 },
}

/// `batch` sequences of `len` tokens (CLS first), embedded into
/// `model_dim` and stacked row-major.
#[derive(Debug, Clone)]
pub struct TokenBatch {
    pub batch: usize,
    pub len: usize,
    pub model_dim: usize,
    pub embeddings: Vec<f64>,
    pub missing: Vec<bool>,
    pub sources: Vec<TokenSource>,
}

impl TokenBatch {
    pub fn sample_missing(&self, b: usize) -> &[bool] {
        &self.missing[b * self.len..(b + 1) * self.len]
    }
}

pub fn tokenize(
    view: &DatasetView<'_>,
    state: &ModelState,
    rows: &[usize],
    unseen: UnseenFeature,
) -> Result<TokenBatch> {
    let dm = state.config.model_dim;
    let len = view.d() + 1;
    let n = view.n();
    let mut ids = Vec::with_capacity(view.d());
    for j in 0..view.d() {
        let schema = view.feature(j);
        match state.feature_id(&schema.name) {
            Some(id) if state.feature(id).kind != schema.kind => {
                return Err(Error::Config(format!(
                    "feature `{}` changed kind since training",
                    schema.name
                )))
            }
            Some(id) => ids.push(Some(id)),
            None if unseen == UnseenFeature::TreatAsMissing => ids.push(None),
            None => return Err(Error::UnregisteredFeature(schema.name.clone())),
        }
    }

    let total = rows.len() * len;
    let mut embeddings = vec![0.0; total * dm];
    let mut missing = vec![false; total];
    let mut sources = Vec::with_capacity(total);
    let cls = state.params.data(state.cls);
    for (b, &r) in rows.iter().enumerate() {
        if r >= n {
            return Err(Error::RowOutOfRange { row: r, n });
        }
        let base = b * len;
        embeddings[base * dm..(base + 1) * dm].copy_from_slice(cls);
        sources.push(TokenSource::Cls);
        for (j, id) in ids.iter().enumerate() {
            let t = base + j + 1;
            let out = &mut embeddings[t * dm..(t + 1) * dm];
            let Some(id) = *id else {
                missing[t] = true;
                sources.push(TokenSource::Missing { feature: None });
                continue;
            };
            let entry = state.feature(id);
            let name = state.params.data(entry.name_embedding);
            out.copy_from_slice(name);
            let source = match view.cell(r, j) {
                Cell::Missing => TokenSource::Missing { feature: Some(id) },
                Cell::Num(v) => {
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "row {r}, feature `{}`",
                            entry.name
                        )));
                    }
                    for (o, w) in out.iter_mut().zip(state.params.data(entry.value)) {
                        *o += v * w;
                    }
                    TokenSource::Numerical {
                        feature: id,
                        value: v,
                    }
                }
                Cell::Cat(c) => {
                    let table = state.params.get(entry.value);
                    if (c as usize) < table.rows {
                        let e = &table.data[c as usize * dm..(c as usize + 1) * dm];
                        for (o, w) in out.iter_mut().zip(e) {
                            *o += w;
                        }
                        TokenSource::Categorical {
                            feature: id,
                            category: c,
                        }
                    } else if unseen == UnseenFeature::TreatAsMissing {
                        TokenSource::Missing { feature: Some(id) }
                    } else {
                        return Err(Error::Data(format!(
                            "category {c} of `{}` was not seen in training",
                            entry.name
                        )));
                    }
                }
            };
            if let TokenSource::Missing { .. } = source {
                missing[t] = true;
            }
            sources.push(source);
        }
    }
    Ok(TokenBatch {
        batch: rows.len(),
        len,
        model_dim: dm,
        embeddings,
        missing,
        sources,
    })
}
