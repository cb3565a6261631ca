//! Adam with L2 weight decay and per-parameter step counts.

use alloc::vec::Vec;

use crate::model::{Gradients, ParamStore};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u32,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            moments: Vec::new(),
        }
    }

    /// Drops all moment estimates and step counts.
    pub fn reset(&mut self) {
        self.moments.clear();
    }

    /// Updates every parameter that has a gradient buffer. Parameters
    /// without one keep their values and moments, weight decay included.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        if self.moments.len() < params.len() {
            self.moments.resize_with(params.len(), Moments::default);
        }
        for (id, g) in grads.iter() {
            let theta = params.data_mut(id);
            let st = &mut self.moments[id.index()];
            if st.m.len() != theta.len() {
                // New or grown (categorical table) parameter.
                st.m.resize(theta.len(), 0.0);
                st.v.resize(theta.len(), 0.0);
            }
            st.steps += 1;
            let t = st.steps as i32;
            let c1 = 1.0 - libm::pow(BETA1, t as f64);
            let c2 = 1.0 - libm::pow(BETA2, t as f64);
            for i in 0..theta.len() {
                let gi = g[i] + self.weight_decay * theta[i];
                st.m[i] = BETA1 * st.m[i] + (1.0 - BETA1) * gi;
                st.v[i] = BETA2 * st.v[i] + (1.0 - BETA2) * gi * gi;
                let mhat = st.m[i] / c1;
                let vhat = st.v[i] / c2;
                theta[i] -= self.learning_rate * mhat / (libm::sqrt(vhat) + EPS);
            }
        }
    }

    pub fn steps(&self, index: usize) -> u32 {
        self.moments.get(index).map_or(0, |m| m.steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::default();
        let a = store.add("a".into(), 1, 2, vec![1.0, -1.0]);
        let b = store.add("b".into(), 1, 1, vec![5.0]);
        let mut grads = Gradients::new(2);
        grads.slot(a, 2).copy_from_slice(&[0.5, -3.0]);
        let mut adam = Adam::new(0.1, 0.0);
        adam.step(&mut store, &grads);
        // Bias-corrected first step is lr * sign(g).
        assert!((store.data(a)[0] - 0.9).abs() < 1e-6);
        assert!((store.data(a)[1] + 0.9).abs() < 1e-6);
        assert_eq!(store.data(b), &[5.0]);
        assert_eq!(adam.steps(b.index()), 0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::default();
        let x = store.add("x".into(), 1, 1, vec![3.0]);
        let mut adam = Adam::new(0.05, 0.0);
        for _ in 0..2000 {
            let mut grads = Gradients::new(1);
            grads.slot(x, 1)[0] = 2.0 * (store.data(x)[0] - 1.0);
            adam.step(&mut store, &grads);
        }
        assert!((store.data(x)[0] - 1.0).abs() < 1e-3);
    }
}
