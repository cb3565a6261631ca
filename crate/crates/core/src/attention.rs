//! Masked multi-head self-attention over feature tokens.
//!
//! A sample's missing tokens are flagged in a [`MaskVector`]. Two masks are
//! derived from it: an additive column mask that drives the softmax weight
//! of every missing column to exactly zero, and a multiplicative mask
//! `outer(!m, !m)` that zeroes the attention rows of missing tokens. The
//! combined effect is that observed tokens attend as if missing tokens did
//! not exist, and missing tokens produce a zero context vector.
//!
//! Heads are column blocks of width `model_dim / num_heads` of the shared
//! `model_dim x model_dim` projection matrices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{all_finite, gemm, matmul, softmax_in_place};
use crate::{Error, Result};

/// Additive mask value for missing columns. Finite so that backward passes
/// stay NaN-free; `exp` of anything this negative is exactly 0 in f64.
pub const MASK_NEG: f64 = -1e9;

/// Per-token missing flags; position 0 is the CLS token and is observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVector(Vec<bool>);

impl MaskVector {
    pub fn new(missing: Vec<bool>) -> Result<Self> {
        match missing.first() {
            Some(false) => Ok(Self(missing)),
            Some(true) => Err(Error::ClsMasked),
            None => Err(Error::Shape("empty mask vector".into())),
        }
    }

    pub fn all_observed(len: usize) -> Self {
        Self(vec![false; len.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// The additive column mask and multiplicative row/column mask of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    len: usize,
    additive: Vec<f64>,
    multiplicative: Vec<f64>,
}

impl MaskPair {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `L x L`, row-major; column `j` is [`MASK_NEG`] where token `j` is missing.
    pub fn additive(&self) -> &[f64] {
        &self.additive
    }

    /// `L x L`, row-major; `(1 - m_i)(1 - m_j)`.
    pub fn multiplicative(&self) -> &[f64] {
        &self.multiplicative
    }

    /// Elementwise `exp` of the additive mask: 0 for missing columns, 1 elsewhere.
    pub fn additive_exp(&self) -> Vec<f64> {
        self.additive.iter().map(|&v| libm::exp(v)).collect()
    }
}

pub fn build_masks(m: &MaskVector) -> MaskPair {
    let len = m.len();
    let mut additive = vec![0.0; len * len];
    let mut multiplicative = vec![0.0; len * len];
    for i in 0..len {
        for j in 0..len {
            if m.is_missing(j) {
                additive[i * len + j] = MASK_NEG;
            }
            if !m.is_missing(i) && !m.is_missing(j) {
                multiplicative[i * len + j] = 1.0;
            }
        }
    }
    MaskPair {
        len,
        additive,
        multiplicative,
    }
}

/// Borrowed projection weights, each `model_dim x model_dim` row-major
/// (`x @ w` convention).
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a [f64],
    pub wk: &'a [f64],
    pub wv: &'a [f64],
    pub wo: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub model_dim: usize,
    pub num_heads: usize,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
}

impl AttentionParams {
    pub fn new(model_dim: usize, num_heads: usize) -> Result<Self> {
        check_heads(model_dim, num_heads)?;
        let zeros = vec![0.0; model_dim * model_dim];
        Ok(Self {
            model_dim,
            num_heads,
            wq: zeros.clone(),
            wk: zeros.clone(),
            wv: zeros.clone(),
            wo: zeros,
        })
    }

    /// Uniform(-1/sqrt(model_dim), 1/sqrt(model_dim)) initialization.
    pub fn random<R: Rng + ?Sized>(
        model_dim: usize,
        num_heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::new(model_dim, num_heads)?;
        let bound = 1.0 / libm::sqrt(model_dim as f64);
        for w in [&mut p.wq, &mut p.wk, &mut p.wv, &mut p.wo] {
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn weights(&self) -> AttentionWeights<'_> {
        AttentionWeights {
            wq: &self.wq,
            wk: &self.wk,
            wv: &self.wv,
            wo: &self.wo,
        }
    }
}

pub(crate) fn check_heads(model_dim: usize, num_heads: usize) -> Result<()> {
    if num_heads == 0 || model_dim == 0 || model_dim % num_heads != 0 {
        return Err(Error::Config(format!(
            "model_dim {model_dim} is not divisible by {num_heads} heads"
        )));
    }
    Ok(())
}

/// Softmax attention of one sample given its projected `q`, `k`, `v`
/// (`L x model_dim` each). Writes per-head softmax weights (before the
/// multiplicative mask) to `probs` (`heads x L x L`) and the concatenated
/// head outputs to `context` (`L x model_dim`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_core(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    len: usize,
    model_dim: usize,
    num_heads: usize,
    masks: Option<&MaskPair>,
    probs: &mut [f64],
    context: &mut [f64],
) {
    let hd = model_dim / num_heads;
    let scale = 1.0 / libm::sqrt(hd as f64);
    context.iter_mut().for_each(|c| *c = 0.0);
    for h in 0..num_heads {
        let off = h * hd;
        let p = &mut probs[h * len * len..(h + 1) * len * len];
        for i in 0..len {
            let qi = &q[i * model_dim + off..i * model_dim + off + hd];
            let row = &mut p[i * len..(i + 1) * len];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k[j * model_dim + off..j * model_dim + off + hd];
                let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                *s = dot * scale;
            }
            if let Some(m) = masks {
                for (s, a) in row.iter_mut().zip(&m.additive[i * len..(i + 1) * len]) {
                    *s += a;
                }
            }
            softmax_in_place(row);
            let ctx = &mut context[i * model_dim + off..i * model_dim + off + hd];
            for j in 0..len {
                let w = match masks {
                    Some(m) => row[j] * m.multiplicative[i * len + j],
                    None => row[j],
                };
                let vj = &v[j * model_dim + off..j * model_dim + off + hd];
                for (c, x) in ctx.iter_mut().zip(vj) {
                    *c += w * x;
                }
            }
        }
    }
}

/// Reverse of [`attention_core`]; accumulates into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_core_backward(
    d_context: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    len: usize,
    model_dim: usize,
    num_heads: usize,
    masks: Option<&MaskPair>,
    dq: &mut [f64],
    dk: &mut [f64],
    dv: &mut [f64],
) {
    let hd = model_dim / num_heads;
    let scale = 1.0 / libm::sqrt(hd as f64);
    let mut d_weights = vec![0.0; len];
    for h in 0..num_heads {
        let off = h * hd;
        let p = &probs[h * len * len..(h + 1) * len * len];
        for i in 0..len {
            let dci = &d_context[i * model_dim + off..i * model_dim + off + hd];
            let row = &p[i * len..(i + 1) * len];
            // d(masked weights) and dV.
            for j in 0..len {
                let mult = masks.map_or(1.0, |m| m.multiplicative[i * len + j]);
                let vj = &v[j * model_dim + off..j * model_dim + off + hd];
                let da: f64 = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                d_weights[j] = da * mult;
                let w = row[j] * mult;
                if w != 0.0 {
                    let dvj = &mut dv[j * model_dim + off..j * model_dim + off + hd];
                    for (g, c) in dvj.iter_mut().zip(dci) {
                        *g += w * c;
                    }
                }
            }
            // Softmax Jacobian.
            let dot: f64 = row.iter().zip(&d_weights).map(|(a, b)| a * b).sum();
            for j in 0..len {
                let ds = row[j] * (d_weights[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..hd {
                    dq[i * model_dim + off + c] += ds * k[j * model_dim + off + c];
                    dk[j * model_dim + off + c] += ds * q[i * model_dim + off + c];
                }
            }
        }
    }
}

/// Values kept from [`masked_attention`] for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub len: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// Softmax weights per head, before the multiplicative mask.
    pub probs: Vec<f64>,
    pub masks: Option<MaskPair>,
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// Concatenated head outputs before the output projection (`L x model_dim`).
    pub context: Vec<f64>,
    /// `context @ wo`.
    pub output: Vec<f64>,
    pub cache: AttentionCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub x: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
}

/// Multi-head attention of one sample `x` (`L x model_dim`) with the mask pair applied.
pub fn masked_attention(
    x: &[f64],
    params: &AttentionParams,
    masks: &MaskPair,
) -> Result<AttentionOutput> {
    attention_impl(x, params, Some(masks))
}

/// Unmasked multi-head attention; the reference for the all-observed case.
pub fn attention(x: &[f64], params: &AttentionParams) -> Result<AttentionOutput> {
    attention_impl(x, params, None)
}

fn attention_impl(
    x: &[f64],
    params: &AttentionParams,
    masks: Option<&MaskPair>,
) -> Result<AttentionOutput> {
    let dm = params.model_dim;
    check_heads(dm, params.num_heads)?;
    if x.len() % dm != 0 || x.is_empty() {
        return Err(Error::Shape(format!(
            "{} inputs do not form rows of width {dm}",
            x.len()
        )));
    }
    let len = x.len() / dm;
    if let Some(m) = masks {
        if m.len() != len {
            return Err(Error::Shape(format!(
                "mask length {} for {len} tokens",
                m.len()
            )));
        }
    }
    if !all_finite(x) {
        return Err(Error::NonFinite("attention input".into()));
    }
    for w in [&params.wq, &params.wk, &params.wv, &params.wo] {
        if w.len() != dm * dm {
            return Err(Error::Shape("projection matrix size".into()));
        }
        if !all_finite(w) {
            return Err(Error::NonFinite("attention parameters".into()));
        }
    }
    let q = matmul(x, &params.wq, len, dm, dm);
    let k = matmul(x, &params.wk, len, dm, dm);
    let v = matmul(x, &params.wv, len, dm, dm);
    let mut probs = vec![0.0; params.num_heads * len * len];
    let mut context = vec![0.0; len * dm];
    attention_core(
        &q,
        &k,
        &v,
        len,
        dm,
        params.num_heads,
        masks,
        &mut probs,
        &mut context,
    );
    let output = matmul(&context, &params.wo, len, dm, dm);
    Ok(AttentionOutput {
        context,
        output,
        cache: AttentionCache {
            len,
            model_dim: dm,
            num_heads: params.num_heads,
            x: x.to_vec(),
            q,
            k,
            v,
            probs,
            masks: masks.cloned(),
        },
    })
}

/// Exact gradients of `sum(grad_out * output)` with respect to the input and
/// the projection weights. The masks are constants.
pub fn masked_attention_backward(
    grad_out: &[f64],
    params: &AttentionParams,
    cache: &AttentionCache,
) -> Result<AttentionGrads> {
    let (len, dm, heads) = (cache.len, cache.model_dim, cache.num_heads);
    if grad_out.len() != len * dm || params.model_dim != dm || params.num_heads != heads {
        return Err(Error::Shape(
            "gradient does not match the forward cache".into(),
        ));
    }
    let mut context = vec![0.0; len * dm];
    let mut probs = vec![0.0; heads * len * len];
    attention_core(
        &cache.q,
        &cache.k,
        &cache.v,
        len,
        dm,
        heads,
        cache.masks.as_ref(),
        &mut probs,
        &mut context,
    );
    let mut wo = vec![0.0; dm * dm];
    gemm(dm, len, dm, &context, true, grad_out, false, &mut wo, false);
    let mut d_context = vec![0.0; len * dm];
    gemm(
        len,
        dm,
        dm,
        grad_out,
        false,
        &params.wo,
        true,
        &mut d_context,
        false,
    );

    let mut dq = vec![0.0; len * dm];
    let mut dk = vec![0.0; len * dm];
    let mut dv = vec![0.0; len * dm];
    attention_core_backward(
        &d_context,
        &cache.q,
        &cache.k,
        &cache.v,
        &cache.probs,
        len,
        dm,
        heads,
        cache.masks.as_ref(),
        &mut dq,
        &mut dk,
        &mut dv,
    );
    let mut grads = AttentionGrads {
        x: vec![0.0; len * dm],
        wq: vec![0.0; dm * dm],
        wk: vec![0.0; dm * dm],
        wv: vec![0.0; dm * dm],
        wo,
    };
    for (d, w, dw) in [
        (&dq, &params.wq, &mut grads.wq),
        (&dk, &params.wk, &mut grads.wk),
        (&dv, &params.wv, &mut grads.wv),
    ] {
        gemm(dm, len, dm, &cache.x, true, d, false, dw, false);
        gemm(len, dm, dm, d, false, w, true, &mut grads.x, true);
    }
    Ok(grads)
}
