use ndarray::Array2;

use crate::params::{ParamId, ParamSet};
use crate::tape::Gradients;
use crate::Mat;

/// Adaptive moment estimation with optional global-norm gradient clipping.
///
/// Moment buffers are allocated lazily per parameter, so one optimizer can be
/// scoped to any subset of a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Option<Mat>>,
    v: Vec<Option<Mat>>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// One update over `group`. Gradients are first clipped to `clip_norm`
    /// (global L2 over the group; pass `f64::INFINITY` to disable). Returns
    /// the post-clip global norm.
    pub fn step(
        &mut self,
        store: &mut ParamSet,
        group: &[ParamId],
        grads: &mut Gradients,
        clip_norm: f64,
    ) -> f64 {
        let norm = grads.clip_global_norm(group, clip_norm);
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in group {
            let dim = store.value(*id).dim();
            let g = grads.param_or_zeros(*id, dim.0, dim.1);
            self.ensure(id.index(), dim);
            let m = self.m[id.index()].as_mut().expect("just ensured");
            let v = self.v[id.index()].as_mut().expect("just ensured");
            m.zip_mut_with(&g, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            v.zip_mut_with(&g, |vi, &gi| *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi);
            let p = store.value_mut(*id);
            for ((pi, mi), vi) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        norm
    }

    fn ensure(&mut self, idx: usize, dim: (usize, usize)) {
        if self.m.len() <= idx {
            self.m.resize(idx + 1, None);
            self.v.resize(idx + 1, None);
        }
        if self.m[idx].is_none() {
            self.m[idx] = Some(Array2::zeros(dim));
            self.v[idx] = Some(Array2::zeros(dim));
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Moment buffers for one parameter, if any step touched it.
    pub fn moments(&self, id: ParamId) -> Option<(&Mat, &Mat)> {
        match (self.m.get(id.index()), self.v.get(id.index())) {
            (Some(Some(m)), Some(Some(v))) => Some((m, v)),
            _ => None,
        }
    }

    /// Restore optimizer state (used by checkpoint loading).
    pub fn restore(&mut self, id: ParamId, m: Mat, v: Mat, t: u64) {
        let idx = id.index();
        if self.m.len() <= idx {
            self.m.resize(idx + 1, None);
            self.v.resize(idx + 1, None);
        }
        self.m[idx] = Some(m);
        self.v[idx] = Some(v);
        self.t = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;
    use ndarray::array;

    #[test]
    fn first_step_matches_adam_formula() {
        let mut store = ParamSet::new();
        let w = store.add("w", array![[1.0, -2.0]]);
        let before = store.value(w).clone();

        let mut tape = Tape::new(&store);
        let wn = tape.param(w);
        let sq = tape.mul_elem(wn, wn).unwrap();
        let loss = tape.sum_all(sq);
        let mut grads = tape.backward(loss);
        let g = grads.param(w).unwrap().clone();

        let mut adam = Adam::new(0.01);
        adam.step(&mut store, &[w], &mut grads, f64::INFINITY);

        // t = 1: mhat = g, vhat = g^2, update = lr * g / (|g| + eps)
        for j in 0..2 {
            let expected = before[[0, j]] - 0.01 * g[[0, j]] / (g[[0, j]].abs() + 1e-8);
            assert!((store.value(w)[[0, j]] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn clip_reduces_global_norm() {
        let mut store = ParamSet::new();
        let w = store.add("w", array![[3.0, 4.0]]);
        let mut tape = Tape::new(&store);
        let wn = tape.param(w);
        let sq = tape.mul_elem(wn, wn).unwrap();
        let loss = tape.sum_all(sq); // grad = 2w = (6, 8), norm 10
        let mut grads = tape.backward(loss);
        assert!((grads.global_norm(&[w]) - 10.0).abs() < 1e-12);
        let post = grads.clip_global_norm(&[w], 5.0);
        assert!((post - 5.0).abs() < 1e-9);
        assert!((grads.global_norm(&[w]) - 5.0).abs() < 1e-9);
    }
}
