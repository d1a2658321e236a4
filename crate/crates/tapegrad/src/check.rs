use crate::params::{ParamId, ParamSet};

/// Central finite difference of `loss` w.r.t. one parameter coordinate.
///
/// The store is perturbed in place and restored before returning, so `loss`
/// always sees a consistent parameter set.
pub fn central_diff<F>(store: &mut ParamSet, id: ParamId, row: usize, col: usize, eps: f64, loss: F) -> f64
where
    F: Fn(&ParamSet) -> f64,
{
    let orig = store.value(id)[[row, col]];
    store.value_mut(id)[[row, col]] = orig + eps;
    let plus = loss(store);
    store.value_mut(id)[[row, col]] = orig - eps;
    let minus = loss(store);
    store.value_mut(id)[[row, col]] = orig;
    (plus - minus) / (2.0 * eps)
}

/// Relative error with an absolute floor so near-zero gradient pairs do not
/// blow up the ratio.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Worst probe seen by a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: usize,
    pub worst_param: String,
    pub worst_coord: (usize, usize),
}

impl GradCheckReport {
    pub fn new() -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            probes: 0,
            worst_param: String::new(),
            worst_coord: (0, 0),
        }
    }

    pub fn record(&mut self, name: &str, coord: (usize, usize), rel: f64) {
        self.probes += 1;
        if rel > self.max_rel_error {
            self.max_rel_error = rel;
            self.worst_param = name.to_string();
            self.worst_coord = coord;
        }
    }
}

impl Default for GradCheckReport {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Tape, ParamSet};
    use ndarray::array;

    #[test]
    fn central_diff_matches_backward_on_quadratic() {
        let mut store = ParamSet::new();
        let w = store.add("w", array![[0.3, -1.2], [2.0, 0.7]]);

        let loss_fn = |s: &ParamSet| {
            let mut tape = Tape::new(s);
            let wn = tape.param(s.id("w").unwrap());
            let sq = tape.mul_elem(wn, wn).unwrap();
            let loss = tape.sum_all(sq);
            tape.scalar(loss)
        };

        let mut tape = Tape::new(&store);
        let wn = tape.param(w);
        let sq = tape.mul_elem(wn, wn).unwrap();
        let loss = tape.sum_all(sq);
        let grads = tape.backward(loss);
        let g = grads.param(w).unwrap().clone();

        for r in 0..2 {
            for c in 0..2 {
                let fd = central_diff(&mut store, w, r, c, 1e-6, loss_fn);
                assert!(rel_error(g[[r, c]], fd) < 1e-8, "({r},{c}): {} vs {fd}", g[[r, c]]);
            }
        }
    }

    #[test]
    fn rel_error_floor_handles_near_zero() {
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert!(rel_error(1e-9, 2e-9) < 1e-4);
    }
}
