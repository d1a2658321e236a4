//! Finite-difference checks for every tape operation.
//!
//! Each case builds a scalar probe (random linear functional of the op
//! output) and compares analytic gradients against central differences at
//! several random coordinates of every input parameter.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapegrad::{central_diff, rel_error, Mat, NodeId, ParamSet, Tape};

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.5..1.5))
}

/// Build a probe: sum(coeffs ⊙ output). Coefficients are constants.
fn probe(tape: &mut Tape, out: NodeId, coeffs: &Mat) -> NodeId {
    let c = tape.constant(coeffs.clone());
    let weighted = tape.mul_elem(out, c).unwrap();
    tape.sum_all(weighted)
}

/// Check all parameters of `store` against finite differences for the scalar
/// graph built by `build`.
fn check_all<F>(store: &mut ParamSet, build: F)
where
    F: Fn(&ParamSet, &mut Tape) -> NodeId,
{
    let grads = {
        let mut tape = Tape::new(store);
        let loss = build(store, &mut tape);
        tape.backward(loss)
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let dim = store.value(id).dim();
        let analytic = grads.param_or_zeros(id, dim.0, dim.1);
        for r in 0..dim.0 {
            for c in 0..dim.1 {
                let fd = central_diff(store, id, r, c, EPS, |s| {
                    let mut tape = Tape::new(s);
                    let loss = build(s, &mut tape);
                    tape.scalar(loss)
                });
                let rel = rel_error(analytic[[r, c]], fd);
                assert!(
                    rel < TOL,
                    "param {} ({r},{c}): analytic {} vs fd {} rel {rel}",
                    store.name(id),
                    analytic[[r, c]],
                    fd
                );
            }
        }
    }
}

#[test]
fn matmul_add_sub_mul() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamSet::new();
    store.add("a", rand_mat(&mut rng, 3, 4));
    store.add("b", rand_mat(&mut rng, 4, 2));
    store.add("c", rand_mat(&mut rng, 3, 2));
    let coeffs = rand_mat(&mut rng, 3, 2);
    check_all(&mut store, |s, tape| {
        let a = tape.param(s.id("a").unwrap());
        let b = tape.param(s.id("b").unwrap());
        let c = tape.param(s.id("c").unwrap());
        let ab = tape.matmul(a, b).unwrap();
        let sum = tape.add(ab, c).unwrap();
        let diff = tape.sub(sum, c).unwrap();
        let prod = tape.mul_elem(diff, c).unwrap();
        probe(tape, prod, &coeffs)
    });
}

#[test]
fn activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamSet::new();
    store.add("x", rand_mat(&mut rng, 2, 5));
    let coeffs = rand_mat(&mut rng, 2, 5);
    for which in 0..3 {
        let coeffs = coeffs.clone();
        check_all(&mut store, move |s, tape| {
            let x = tape.param(s.id("x").unwrap());
            let y = match which {
                0 => tape.sigmoid(x),
                1 => tape.tanh(x),
                _ => tape.elu(x),
            };
            probe(tape, y, &coeffs)
        });
    }
}

#[test]
fn ln_and_clamp() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamSet::new();
    // strictly positive, away from the clamp edges so the subgradient is exact
    store.add(
        "x",
        Array2::from_shape_fn((2, 3), |_| rng.random_range(0.3..2.0)),
    );
    let coeffs = rand_mat(&mut rng, 2, 3);
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        let cl = tape.clamp(x, 0.1, 10.0);
        let y = tape.ln(cl);
        probe(tape, y, &coeffs)
    });
}

#[test]
fn softmax_rows_grad() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamSet::new();
    store.add("x", rand_mat(&mut rng, 3, 4));
    let coeffs = rand_mat(&mut rng, 3, 4);
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        let y = tape.softmax_rows(x);
        probe(tape, y, &coeffs)
    });
}

#[test]
fn reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamSet::new();
    store.add("x", rand_mat(&mut rng, 4, 3));
    let c1 = rand_mat(&mut rng, 1, 3);
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        let m = tape.mean_rows(x);
        probe(tape, m, &c1)
    });
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        tape.mean_all(x)
    });
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        tape.sum_all(x)
    });
}

#[test]
fn max_cols_routes_gradient_to_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamSet::new();
    store.add("x", rand_mat(&mut rng, 4, 3));
    let c1 = rand_mat(&mut rng, 1, 3);
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        let m = tape.max_cols(x);
        probe(tape, m, &c1)
    });
}

#[test]
fn structure_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamSet::new();
    store.add("a", rand_mat(&mut rng, 2, 3));
    store.add("b", rand_mat(&mut rng, 2, 2));
    store.add("r", rand_mat(&mut rng, 1, 4));
    let c_cat = rand_mat(&mut rng, 2, 5);
    let c_rep = rand_mat(&mut rng, 3, 4);
    let c_t = rand_mat(&mut rng, 3, 2);
    check_all(&mut store, |s, tape| {
        let a = tape.param(s.id("a").unwrap());
        let b = tape.param(s.id("b").unwrap());
        let cat = tape.concat_cols(a, b).unwrap();
        probe(tape, cat, &c_cat)
    });
    check_all(&mut store, |s, tape| {
        let r = tape.param(s.id("r").unwrap());
        let rep = tape.repeat_row(r, 3).unwrap();
        probe(tape, rep, &c_rep)
    });
    check_all(&mut store, |s, tape| {
        let a = tape.param(s.id("a").unwrap());
        let t = tape.transpose(a);
        probe(tape, t, &c_t)
    });
}

#[test]
fn stack_and_slice_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamSet::new();
    store.add("x", rand_mat(&mut rng, 3, 4));
    let c_row = rand_mat(&mut rng, 1, 4);
    let c_stack = rand_mat(&mut rng, 2, 4);
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        let r = tape.slice_row(x, 1).unwrap();
        probe(tape, r, &c_row)
    });
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        let r0 = tape.slice_row(x, 0).unwrap();
        let r2 = tape.slice_row(x, 2).unwrap();
        let st = tape.stack_rows(&[r2, r0]).unwrap();
        probe(tape, st, &c_stack)
    });
}

#[test]
fn gather_rows_accumulates_repeated_indices() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamSet::new();
    store.add("table", rand_mat(&mut rng, 5, 3));
    let c = rand_mat(&mut rng, 4, 3);
    check_all(&mut store, |s, tape| {
        let t = tape.param(s.id("table").unwrap());
        let g = tape.gather_rows(t, &[1, 3, 1, 0]).unwrap();
        probe(tape, g, &c)
    });
}

#[test]
fn unfold_rows_same_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamSet::new();
    store.add("x", rand_mat(&mut rng, 4, 2));
    store.add("k", rand_mat(&mut rng, 6, 3));
    let c = rand_mat(&mut rng, 4, 3);
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        let k = tape.param(s.id("k").unwrap());
        let u = tape.unfold_rows(x, 3).unwrap();
        let conv = tape.matmul(u, k).unwrap();
        probe(tape, conv, &c)
    });
}

#[test]
fn add_row_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamSet::new();
    store.add("x", rand_mat(&mut rng, 3, 4));
    store.add("b", rand_mat(&mut rng, 1, 4));
    let c = rand_mat(&mut rng, 3, 4);
    check_all(&mut store, |s, tape| {
        let x = tape.param(s.id("x").unwrap());
        let b = tape.param(s.id("b").unwrap());
        let y = tape.add_row(x, b).unwrap();
        probe(tape, y, &c)
    });
}

#[test]
fn detach_blocks_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut store = ParamSet::new();
    let w = store.add("w", rand_mat(&mut rng, 2, 2));
    let mut tape = Tape::new(&store);
    let wn = tape.param(w);
    let d = tape.detach(wn);
    let sq = tape.mul_elem(d, d).unwrap();
    let loss = tape.sum_all(sq);
    let grads = tape.backward(loss);
    assert!(grads.param(w).is_none(), "detach must stop gradient flow");
}

#[test]
fn frozen_params_pass_gradient_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamSet::new();
    let w = store.add("w", rand_mat(&mut rng, 2, 2));
    let frozen = store.add("frozen", rand_mat(&mut rng, 2, 2));
    let mut tape = Tape::with_trainable(&store, &[w]);
    let wn = tape.param(w);
    let fz = tape.param(frozen);
    let y = tape.matmul(wn, fz).unwrap();
    let loss = tape.sum_all(y);
    let grads = tape.backward(loss);
    assert!(grads.param(w).is_some(), "trainable receives gradient");
    assert!(grads.param(frozen).is_none(), "frozen collects nothing");
}

#[test]
fn unfold_even_window_rejected() {
    let store = ParamSet::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(Array2::zeros((3, 2)));
    assert!(tape.unfold_rows(x, 2).is_err());
}

#[test]
fn shape_errors_are_reported() {
    let store = ParamSet::new();
    let mut tape = Tape::new(&store);
    let a = tape.constant(Array2::zeros((2, 3)));
    let b = tape.constant(Array2::zeros((3, 2)));
    assert!(tape.add(a, b).is_err());
    assert!(tape.mul_elem(a, b).is_err());
    assert!(tape.matmul(a, a).is_err());
    assert!(tape.gather_rows(a, &[7]).is_err());
    assert!(tape.slice_row(a, 5).is_err());
}
