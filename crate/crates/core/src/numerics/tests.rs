use rand::Rng as _;

use super::*;
use crate::error::Error;
use crate::rng::{seeded, Rng};

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

/// Checks the tape gradient of `build` against central differences (h = 1e-5)
/// for every coordinate of every parameter. Probes that flip a relu are skipped.
fn check_gradients<F>(params: &[Tensor2], build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |ps: &[Tensor2]| -> (f64, Vec<bool>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, p))
            .collect();
        let loss = build(&mut tape, &vars);
        (tape.value(loss).item(), tape.relu_signature())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(i, p))
        .collect();
    let loss = build(&mut tape, &vars);
    let base_sig = tape.relu_signature();
    let grads = tape.backward(loss).unwrap();

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (slot, p) in params.iter().enumerate() {
        let g = grads.get(slot).unwrap();
        for k in 0..p.len() {
            let mut plus = params.to_vec();
            plus[slot].data_mut()[k] += h;
            let mut minus = params.to_vec();
            minus[slot].data_mut()[k] -= h;
            let (fp, sp) = eval(&plus);
            let (fm, sm) = eval(&minus);
            if sp != base_sig || sm != base_sig {
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = g.data()[k];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

fn probe_op<F>(shapes: &[(usize, usize)], build: F)
where
    F: Fn(&mut Tape, &[Var]) -> Var + Copy,
{
    let mut rng = seeded(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let params: Vec<Tensor2> = shapes
            .iter()
            .map(|&(r, c)| random(r, c, &mut rng))
            .collect();
        worst = worst.max(check_gradients(&params, build));
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn gradient_matmul() {
    probe_op(&[(3, 4), (4, 2)], |t, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        let w = t.input(Tensor2::from_vec(3, 2, (0..6).map(|i| i as f64 - 2.5).collect()).unwrap());
        let prod = t.add(y, w).unwrap();
        let r = t.relu(prod);
        t.sum(r)
    });
}

#[test]
fn gradient_propagate_with_constant_left_factor() {
    let adj = std::sync::Arc::new(
        Tensor2::from_vec(
            4,
            4,
            (0..16).map(|i| ((i * 7 % 5) as f64 - 1.5) * 0.3).collect(),
        )
        .unwrap(),
    );
    let target =
        Tensor2::from_vec(4, 3, (0..12).map(|i| (i as f64 * 0.4).sin()).collect()).unwrap();
    probe_op(&[(4, 3)], |t, v| {
        let y = t.propagate(&adj, v[0]).unwrap();
        let s = t.softmax_rows(y);
        t.mse(s, &target).unwrap()
    });
}

#[test]
fn t_matmul_matches_transpose() {
    let mut rng = seeded(6);
    let a = random(5, 3, &mut rng);
    let b = random(5, 4, &mut rng);
    assert!(
        a.t_matmul(&b)
            .unwrap()
            .max_abs_diff(&a.transpose().matmul(&b).unwrap())
            < 1e-12
    );
    assert!(a.t_matmul(&random(4, 2, &mut rng)).is_err());
}

#[test]
fn gradient_relu_and_add_row() {
    probe_op(&[(4, 3), (1, 3)], |t, v| {
        let y = t.add_row(v[0], v[1]).unwrap();
        let r = t.relu(y);
        let sq = t.layer_norm(r, v[1], v[1]).unwrap();
        t.sum(sq)
    });
}

#[test]
fn gradient_softmax_rows() {
    probe_op(&[(3, 4), (4, 1)], |t, v| {
        let s = t.softmax_rows(v[0]);
        let y = t.matmul(s, v[1]).unwrap();
        t.mse(y, &Tensor2::filled(3, 1, 0.3)).unwrap()
    });
}

#[test]
fn gradient_layer_norm() {
    probe_op(&[(4, 5), (1, 5), (1, 5), (5, 2)], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2]).unwrap();
        let z = t.matmul(y, v[3]).unwrap();
        t.cross_entropy(z, &[0, 1, 1, 0]).unwrap()
    });
}

#[test]
fn gradient_cross_entropy_with_gather() {
    probe_op(&[(5, 3)], |t, v| {
        let g = t.gather_rows(v[0], &[4, 0, 2, 0]).unwrap();
        t.cross_entropy(g, &[2, 1, 0, 0]).unwrap()
    });
}

#[test]
fn gradient_concat_slice_scale() {
    probe_op(&[(4, 1), (4, 1), (4, 3), (4, 3)], |t, v| {
        let s = t.concat_cols(&[v[0], v[1]]).unwrap();
        let w = t.softmax_rows(s);
        let w0 = t.slice_col(w, 0).unwrap();
        let w1 = t.slice_col(w, 1).unwrap();
        let a = t.scale_rows(v[2], w0).unwrap();
        let b = t.scale_rows(v[3], w1).unwrap();
        let f = t.add(a, b).unwrap();
        t.cross_entropy(f, &[0, 2, 1, 2]).unwrap()
    });
}

#[test]
fn gradient_dropout_mask_is_linear() {
    let mut rng = seeded(5);
    for _ in 0..100 {
        let x = random(3, 4, &mut rng);
        let mask_seed: u64 = rng.random();
        let worst = check_gradients(&[x], |t, v| {
            let mut mrng = seeded(mask_seed);
            let d = t.dropout(v[0], 0.4, true, &mut mrng).unwrap();
            let r = t.relu(d);
            t.mse(r, &Tensor2::filled(3, 4, 0.5)).unwrap()
        });
        assert!(worst < 1e-4, "{worst}");
    }
}

#[test]
fn relu_gradient_at_points() {
    for (x, expected) in [(3.0, 1.0), (-3.0, 0.0)] {
        let mut tape = Tape::new();
        let v = tape.param(0, &Tensor2::scalar(x));
        let r = tape.relu(v);
        let l = tape.sum(r);
        let g = tape.backward(l).unwrap();
        let h = 1e-5;
        let fd = ((x + h).max(0.0) - (x - h).max(0.0)) / (2.0 * h);
        assert!((g.get(0).unwrap().item() - expected).abs() < 1e-12);
        assert!((fd - expected).abs() < 1e-9);
    }
}

#[test]
fn sum_of_param_has_unit_gradient() {
    let mut tape = Tape::new();
    let p = tape.param(3, &Tensor2::filled(2, 3, 0.4));
    let l = tape.sum(p);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(3).unwrap(), &Tensor2::filled(2, 3, 1.0));
    assert!(tape.is_empty(), "tape is cleared after backward");
}

#[test]
fn backward_without_forward_is_state_error() {
    let mut tape = Tape::new();
    let v = {
        let mut other = Tape::new();
        let p = other.param(0, &Tensor2::scalar(1.0));
        other.sum(p)
    };
    assert!(matches!(tape.backward(v), Err(Error::State(_))));
}

#[test]
fn unused_param_gets_zero_slot_and_shared_slot_accumulates() {
    let mut tape = Tape::new();
    let a = tape.param(0, &Tensor2::filled(1, 2, 1.0));
    let a_again = tape.param(0, &Tensor2::filled(1, 2, 99.0));
    assert_eq!(a, a_again);
    let _unused = tape.param(1, &Tensor2::filled(2, 2, 1.0));
    let s = tape.add(a, a_again).unwrap();
    let l = tape.sum(s);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.len(), 2);
    assert_eq!(g.get(0).unwrap().data(), &[2.0, 2.0]);
    assert_eq!(g.get(1).unwrap(), &Tensor2::zeros(2, 2));
}

fn two_layer_loss(tape: &mut Tape, params: &[Tensor2], x: &Tensor2) -> Var {
    let vars: Vec<Var> = params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(i, p))
        .collect();
    let xi = tape.input(x.clone());
    let h = tape.matmul(xi, vars[0]).unwrap();
    let h = tape.add_row(h, vars[1]).unwrap();
    let h = tape.relu(h);
    let o = tape.matmul(h, vars[2]).unwrap();
    tape.cross_entropy(o, &[0, 2, 1, 1, 0]).unwrap()
}

#[test]
fn composite_two_layer_net_matches_finite_differences_and_is_deterministic() {
    let mut rng = seeded(77);
    let x = random(5, 4, &mut rng);
    let params = vec![
        random(4, 6, &mut rng),
        random(1, 6, &mut rng),
        random(6, 3, &mut rng),
    ];
    let grads_of = || {
        let mut tape = Tape::new();
        let l = two_layer_loss(&mut tape, &params, &x);
        tape.backward(l).unwrap()
    };
    let g1 = grads_of();
    let g2 = grads_of();
    for slot in 0..3 {
        assert_eq!(g1.get(slot), g2.get(slot));
    }
    let worst = check_gradients(&params, |t, v| {
        let xi = t.input(x.clone());
        let h = t.matmul(xi, v[0]).unwrap();
        let h = t.add_row(h, v[1]).unwrap();
        let h = t.relu(h);
        let o = t.matmul(h, v[2]).unwrap();
        t.cross_entropy(o, &[0, 2, 1, 1, 0]).unwrap()
    });
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn dropout_modes() {
    let mut rng = seeded(1);
    let x = random(4, 4, &mut rng);
    assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(dropout(&x, 0.7, false, &mut rng).unwrap(), x);
    assert!(dropout(&x, 1.0, true, &mut rng).is_err());
    assert!(dropout(&x, -0.1, true, &mut rng).is_err());
}

#[test]
fn dropout_monte_carlo() {
    let mut rng = seeded(42);
    let x = Tensor2::filled(1, 100_000, 1.0);
    let y = dropout(&x, 0.5, true, &mut rng).unwrap();
    let survivors = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
    assert!((survivors - 0.5).abs() < 0.01, "{survivors}");
    let mean = y.sum() / 1e5;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn seeded_ops_are_bit_reproducible() {
    let run = || {
        let mut rng = seeded(9);
        let x = random(6, 6, &mut rng);
        let d = dropout(&x, 0.3, true, &mut rng).unwrap();
        d.matmul(&x).unwrap().softmax_rows()
    };
    let (a, b) = (run(), run());
    assert!(a
        .data()
        .iter()
        .zip(b.data())
        .all(|(p, q)| p.to_bits() == q.to_bits()));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_rows_on_simplex(vals in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let x = Tensor2::from_vec(3, 4, vals).unwrap();
            let s = x.softmax_rows();
            for r in 0..3 {
                prop_assert!(s.row(r).iter().all(|&v| v >= 0.0));
                prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn cross_entropy_nonnegative(vals in proptest::collection::vec(-20.0f64..20.0, 8), labels in proptest::collection::vec(0usize..4, 2)) {
            let x = Tensor2::from_vec(2, 4, vals).unwrap();
            prop_assert!(cross_entropy(&x, &labels).unwrap() >= 0.0);
        }

        #[test]
        fn dct_round_trip(sig in proptest::collection::vec(-100.0f64..100.0, 1..120)) {
            let n = sig.len();
            let back = idct_1d(&dct_1d(&sig, n).unwrap(), n).unwrap();
            let err = sig.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-9);
        }
    }
}
