use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::Activation;

pub(crate) const LN_EPS: f64 = 1e-5;
const LEAKY_SLOPE: f64 = 0.01;
const INV_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Normalized rows and their reciprocal standard deviations.
pub(crate) struct LayerNormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm(
    x: &[f64],
    dim: usize,
    gain: &[f64],
    bias: &[f64],
) -> (Vec<f64>, LayerNormCache) {
    let rows = x.len() / dim;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * dim..(r + 1) * dim];
        let mean = row.iter().sum::<f64>() / dim as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let rs = 1.0 / libm::sqrt(var + LN_EPS);
        rstd[r] = rs;
        for c in 0..dim {
            let h = (row[c] - mean) * rs;
            xhat[r * dim + c] = h;
            y[r * dim + c] = h * gain[c] + bias[c];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

/// Returns `dx`; accumulates into `dgain` and `dbias`.
pub(crate) fn layer_norm_backward(
    dy: &[f64],
    dim: usize,
    gain: &[f64],
    cache: &LayerNormCache,
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let rows = dy.len() / dim;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; dim];
    for r in 0..rows {
        let g = &dy[r * dim..(r + 1) * dim];
        let h = &cache.xhat[r * dim..(r + 1) * dim];
        let mut mean_d = 0.0;
        let mut mean_dh = 0.0;
        for c in 0..dim {
            dgain[c] += g[c] * h[c];
            dbias[c] += g[c];
            dxhat[c] = g[c] * gain[c];
            mean_d += dxhat[c];
            mean_dh += dxhat[c] * h[c];
        }
        mean_d /= dim as f64;
        mean_dh /= dim as f64;
        let rs = cache.rstd[r];
        for c in 0..dim {
            dx[r * dim + c] = rs * (dxhat[c] - mean_d - h[c] * mean_dh);
        }
    }
    dx
}

pub(crate) fn activate(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Relu => x.max(0.0),
        Activation::LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                LEAKY_SLOPE * x
            }
        }
        Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2)),
    }
}

pub(crate) fn activate_grad(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::LeakyRelu => {
            if x > 0.0 {
                1.0
            } else {
                LEAKY_SLOPE
            }
        }
        Activation::Gelu => {
            0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Inverted-dropout scale factors: 0 or `1 / (1 - p)`.
pub(crate) fn dropout_mask<R: Rng + ?Sized>(rng: &mut R, len: usize, p: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

pub(crate) fn softmax_rows(logits: &[f64], cols: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(cols) {
        crate::linalg::softmax_in_place(row);
    }
    out
}
