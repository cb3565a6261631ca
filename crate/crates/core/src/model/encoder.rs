use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::attention::{
    attention_core, attention_core_backward, build_masks, MaskPair, MaskVector,
};
use crate::linalg::{accumulate_column_sums, add_row_bias, all_finite, gemm, matmul};
use crate::{Error, Result};

use super::ops::{
    activate, activate_grad, dropout_mask, layer_norm, layer_norm_backward, sigmoid, softmax_rows,
    LayerNormCache,
};
use super::{Gradients, ModelState, TokenBatch, TokenSource};

struct LayerCache {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    context: Vec<f64>,
    ln1: LayerNormCache,
    h1: Vec<f64>,
    z1: Vec<f64>,
    hidden_drop: Option<Vec<f64>>,
    hidden: Vec<f64>,
    ffn_out: Vec<f64>,
    gate: Option<Vec<f64>>,
    ln2: LayerNormCache,
}

pub(crate) struct ForwardCache {
    masks: Vec<Option<MaskPair>>,
    embed_drop: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    cls_out: Vec<f64>,
}

pub struct ForwardPass {
    /// `batch x class_count`.
    pub logits: Vec<f64>,
    pub(crate) cache: ForwardCache,
}

impl ForwardPass {
    pub fn probabilities(&self, class_count: usize) -> Vec<f64> {
        softmax_rows(&self.logits, class_count)
    }
}

/// Runs the encoder and head. Dropout is active only when `train` is set.
pub fn forward<R: Rng + ?Sized>(
    batch: &TokenBatch,
    state: &ModelState,
    train: bool,
    rng: &mut R,
) -> Result<ForwardPass> {
    let cfg = &state.config;
    let (dm, len, nb) = (cfg.model_dim, batch.len, batch.batch);
    if batch.model_dim != dm || batch.embeddings.len() != nb * len * dm {
        return Err(Error::Shape("token batch does not match the model".into()));
    }
    let rows = nb * len;
    let p = &state.params;
    let dropping = train && cfg.dropout > 0.0;

    let mut masks = Vec::with_capacity(nb);
    for b in 0..nb {
        let m = batch.sample_missing(b);
        masks.push(if m.iter().any(|&x| x) {
            Some(build_masks(&MaskVector::new(m.to_vec())?))
        } else {
            None
        });
    }

    let mut x = batch.embeddings.clone();
    if !all_finite(&x) {
        return Err(Error::NonFinite("token embeddings".into()));
    }
    let embed_drop = if dropping {
        let mask = dropout_mask(rng, x.len(), cfg.dropout);
        x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        Some(mask)
    } else {
        None
    };

    let mut layers = Vec::with_capacity(state.layers.len());
    for (l, lp) in state.layers.iter().enumerate() {
        let q = matmul(&x, p.data(lp.wq), rows, dm, dm);
        let k = matmul(&x, p.data(lp.wk), rows, dm, dm);
        let v = matmul(&x, p.data(lp.wv), rows, dm, dm);
        let mut probs = vec![0.0; nb * cfg.num_heads * len * len];
        let mut context = vec![0.0; rows * dm];
        let seq = len * dm;
        let pl = cfg.num_heads * len * len;
        for b in 0..nb {
            attention_core(
                &q[b * seq..(b + 1) * seq],
                &k[b * seq..(b + 1) * seq],
                &v[b * seq..(b + 1) * seq],
                len,
                dm,
                cfg.num_heads,
                masks[b].as_ref(),
                &mut probs[b * pl..(b + 1) * pl],
                &mut context[b * seq..(b + 1) * seq],
            );
        }
        let mut s1 = x.clone();
        gemm(
            rows,
            dm,
            dm,
            &context,
            false,
            p.data(lp.wo),
            false,
            &mut s1,
            true,
        );
        let (h1, ln1) = layer_norm(&s1, dm, p.data(lp.ln1_gain), p.data(lp.ln1_bias));

        let ff = cfg.ffn_dim;
        let mut z1 = matmul(&h1, p.data(lp.ffn_w1), rows, dm, ff);
        add_row_bias(&mut z1, p.data(lp.ffn_b1));
        let mut hidden: Vec<f64> = z1.iter().map(|&z| activate(cfg.activation, z)).collect();
        let hidden_drop = if dropping {
            let mask = dropout_mask(rng, hidden.len(), cfg.dropout);
            hidden.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            Some(mask)
        } else {
            None
        };
        let mut ffn_out = matmul(&hidden, p.data(lp.ffn_w2), rows, ff, dm);
        add_row_bias(&mut ffn_out, p.data(lp.ffn_b2));
        let gate = match (lp.gate_w, lp.gate_b) {
            (Some(gw), Some(gb)) => {
                let mut g = matmul(&h1, p.data(gw), rows, dm, dm);
                add_row_bias(&mut g, p.data(gb));
                g.iter_mut().for_each(|v| *v = sigmoid(*v));
                Some(g)
            }
            _ => None,
        };
        let mut s2 = h1.clone();
        match &gate {
            Some(g) => s2
                .iter_mut()
                .zip(ffn_out.iter().zip(g))
                .for_each(|(s, (f, g))| *s += f * g),
            None => s2.iter_mut().zip(&ffn_out).for_each(|(s, f)| *s += f),
        }
        let (out, ln2) = layer_norm(&s2, dm, p.data(lp.ln2_gain), p.data(lp.ln2_bias));
        if !all_finite(&out) {
            return Err(Error::NonFiniteActivation { layer: l });
        }
        layers.push(LayerCache {
            x: core::mem::replace(&mut x, out),
            q,
            k,
            v,
            probs,
            context,
            ln1,
            h1,
            z1,
            hidden_drop,
            hidden,
            ffn_out,
            gate,
            ln2,
        });
    }

    let mut cls_out = vec![0.0; nb * dm];
    for b in 0..nb {
        cls_out[b * dm..(b + 1) * dm].copy_from_slice(&x[b * len * dm..(b * len + 1) * dm]);
    }
    let c = cfg.class_count;
    let mut logits = matmul(&cls_out, p.data(state.head_w), nb, dm, c);
    add_row_bias(&mut logits, p.data(state.head_b));
    if !all_finite(&logits) {
        return Err(Error::NonFiniteActivation {
            layer: state.layers.len(),
        });
    }
    Ok(ForwardPass {
        logits,
        cache: ForwardCache {
            masks,
            embed_drop,
            layers,
            cls_out,
        },
    })
}

/// Mean cross-entropy over the batch and its gradient. Parameters the batch
/// never reaches (features outside the view, or only ever missing) get no
/// gradient buffer.
pub fn loss_and_grad<R: Rng + ?Sized>(
    batch: &TokenBatch,
    labels: &[usize],
    state: &ModelState,
    train: bool,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    let cfg = &state.config;
    let (dm, len, nb, c) = (cfg.model_dim, batch.len, batch.batch, cfg.class_count);
    if labels.len() != nb {
        return Err(Error::Shape("one label per sample".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Data(alloc::format!("label {y} outside {c} classes")));
    }
    let pass = forward(batch, state, train, rng)?;
    let probs = pass.probabilities(c);
    let mut loss = 0.0;
    let mut dlogits = probs.clone();
    for (b, &y) in labels.iter().enumerate() {
        loss -= libm::log(probs[b * c + y].max(f64::MIN_POSITIVE));
        dlogits[b * c + y] -= 1.0;
    }
    let scale = 1.0 / nb as f64;
    loss *= scale;
    dlogits.iter_mut().for_each(|g| *g *= scale);

    let p = &state.params;
    let cache = pass.cache;
    let mut grads = Gradients::new(p.len());
    gemm(
        dm,
        nb,
        c,
        &cache.cls_out,
        true,
        &dlogits,
        false,
        grads.slot(state.head_w, dm * c),
        true,
    );
    accumulate_column_sums(&dlogits, c, grads.slot(state.head_b, c));
    let mut d_cls = vec![0.0; nb * dm];
    gemm(
        nb,
        c,
        dm,
        &dlogits,
        false,
        p.data(state.head_w),
        true,
        &mut d_cls,
        false,
    );

    let rows = nb * len;
    let mut dx = vec![0.0; rows * dm];
    for b in 0..nb {
        dx[b * len * dm..(b * len + 1) * dm].copy_from_slice(&d_cls[b * dm..(b + 1) * dm]);
    }

    for (lp, lc) in state.layers.iter().zip(&cache.layers).rev() {
        let ff = cfg.ffn_dim;
        // Second residual block.
        let mut dgain = vec![0.0; dm];
        let mut dbias = vec![0.0; dm];
        let ds2 = layer_norm_backward(
            &dx,
            dm,
            p.data(lp.ln2_gain),
            &lc.ln2,
            &mut dgain,
            &mut dbias,
        );
        add_into(grads.slot(lp.ln2_gain, dm), &dgain);
        add_into(grads.slot(lp.ln2_bias, dm), &dbias);
        let mut dh1 = ds2.clone();
        let dffn = match (&lc.gate, lp.gate_w, lp.gate_b) {
            (Some(g), Some(gw), Some(gb)) => {
                let mut dpre = vec![0.0; rows * dm];
                let mut dffn = vec![0.0; rows * dm];
                for i in 0..rows * dm {
                    dffn[i] = ds2[i] * g[i];
                    dpre[i] = ds2[i] * lc.ffn_out[i] * g[i] * (1.0 - g[i]);
                }
                gemm(
                    dm,
                    rows,
                    dm,
                    &lc.h1,
                    true,
                    &dpre,
                    false,
                    grads.slot(gw, dm * dm),
                    true,
                );
                accumulate_column_sums(&dpre, dm, grads.slot(gb, dm));
                gemm(rows, dm, dm, &dpre, false, p.data(gw), true, &mut dh1, true);
                dffn
            }
            _ => ds2,
        };
        gemm(
            ff,
            rows,
            dm,
            &lc.hidden,
            true,
            &dffn,
            false,
            grads.slot(lp.ffn_w2, ff * dm),
            true,
        );
        accumulate_column_sums(&dffn, dm, grads.slot(lp.ffn_b2, dm));
        let mut dz1 = vec![0.0; rows * ff];
        gemm(
            rows,
            dm,
            ff,
            &dffn,
            false,
            p.data(lp.ffn_w2),
            true,
            &mut dz1,
            false,
        );
        if let Some(mask) = &lc.hidden_drop {
            dz1.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        dz1.iter_mut()
            .zip(&lc.z1)
            .for_each(|(g, &z)| *g *= activate_grad(cfg.activation, z));
        gemm(
            dm,
            rows,
            ff,
            &lc.h1,
            true,
            &dz1,
            false,
            grads.slot(lp.ffn_w1, dm * ff),
            true,
        );
        accumulate_column_sums(&dz1, ff, grads.slot(lp.ffn_b1, ff));
        gemm(
            rows,
            ff,
            dm,
            &dz1,
            false,
            p.data(lp.ffn_w1),
            true,
            &mut dh1,
            true,
        );

        // Attention residual block.
        let mut dgain = vec![0.0; dm];
        let mut dbias = vec![0.0; dm];
        let ds1 = layer_norm_backward(
            &dh1,
            dm,
            p.data(lp.ln1_gain),
            &lc.ln1,
            &mut dgain,
            &mut dbias,
        );
        add_into(grads.slot(lp.ln1_gain, dm), &dgain);
        add_into(grads.slot(lp.ln1_bias, dm), &dbias);
        gemm(
            dm,
            rows,
            dm,
            &lc.context,
            true,
            &ds1,
            false,
            grads.slot(lp.wo, dm * dm),
            true,
        );
        let mut dctx = vec![0.0; rows * dm];
        gemm(
            rows,
            dm,
            dm,
            &ds1,
            false,
            p.data(lp.wo),
            true,
            &mut dctx,
            false,
        );
        let mut dq = vec![0.0; rows * dm];
        let mut dk = vec![0.0; rows * dm];
        let mut dv = vec![0.0; rows * dm];
        let seq = len * dm;
        let pl = cfg.num_heads * len * len;
        for b in 0..nb {
            let r = b * seq..(b + 1) * seq;
            attention_core_backward(
                &dctx[r.clone()],
                &lc.q[r.clone()],
                &lc.k[r.clone()],
                &lc.v[r.clone()],
                &lc.probs[b * pl..(b + 1) * pl],
                len,
                dm,
                cfg.num_heads,
                cache.masks[b].as_ref(),
                &mut dq[r.clone()],
                &mut dk[r.clone()],
                &mut dv[r],
            );
        }
        let mut dprev = ds1;
        for (w, d) in [(lp.wq, &dq), (lp.wk, &dk), (lp.wv, &dv)] {
            gemm(
                dm,
                rows,
                dm,
                &lc.x,
                true,
                d,
                false,
                grads.slot(w, dm * dm),
                true,
            );
            gemm(rows, dm, dm, d, false, p.data(w), true, &mut dprev, true);
        }
        dx = dprev;
    }

    if let Some(mask) = &cache.embed_drop {
        dx.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
    }
    for (t, source) in batch.sources.iter().enumerate() {
        let row = &dx[t * dm..(t + 1) * dm];
        match *source {
            TokenSource::Cls => add_into(grads.slot(state.cls, dm), row),
            TokenSource::Missing { .. } => {}
            TokenSource::Numerical { feature, value } => {
                let e = state.feature(feature);
                add_into(grads.slot(e.name_embedding, dm), row);
                let g = grads.slot(e.value, dm);
                g.iter_mut().zip(row).for_each(|(g, r)| *g += value * r);
            }
            TokenSource::Categorical { feature, category } => {
                let e = state.feature(feature);
                add_into(grads.slot(e.name_embedding, dm), row);
                let size = p.get(e.value).data.len();
                let g = grads.slot(e.value, size);
                let c = category as usize;
                add_into(&mut g[c * dm..(c + 1) * dm], row);
            }
        }
    }
    Ok((loss, grads))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
