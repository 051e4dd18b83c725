//! Property tests: reverse-mode gradients against central finite differences,
//! and column-gate invariants.

use latentflow::{Tape, Tensor};
use proptest::prelude::*;

/// Loss used for the gradient checks: a small composite touching matmul,
/// add_col, relu, hadamard, scale, clamp_norm, and sum_squares.
fn composite_loss(a: &Tensor, b: &Tensor, x: &Tensor) -> Tensor {
    let h = a.matmul(x).unwrap().add_col(b).unwrap().relu();
    let g = h.hadamard(&h.scale(0.5)).unwrap();
    let y = g.clamp_norm(2.0);
    y.sum_squares()
}

fn central_fd(
    mut data: Vec<f64>,
    idx: usize,
    rebuild: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    let h = 1e-6;
    let orig = data[idx];
    data[idx] = orig + h;
    let up = rebuild(&data);
    data[idx] = orig - h;
    let down = rebuild(&data);
    (up - down) / (2.0 * h)
}

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-5 * want.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reverse_mode_matches_finite_differences(
        a_data in proptest::collection::vec(-2.0f64..2.0, 6),
        b_data in proptest::collection::vec(-2.0f64..2.0, 2),
        x_data in proptest::collection::vec(-2.0f64..2.0, 3),
    ) {
        let eval = |a: &[f64], b: &[f64], x: &[f64]| {
            let a = Tensor::matrix(2, 3, a.to_vec()).unwrap();
            let b = Tensor::col(b.to_vec()).unwrap();
            let x = Tensor::col(x.to_vec()).unwrap();
            composite_loss(&a, &b, &x).item()
        };

        let tape = Tape::new();
        let a = tape.watch(&Tensor::matrix(2, 3, a_data.clone()).unwrap());
        let b = tape.watch(&Tensor::col(b_data.clone()).unwrap());
        let x = tape.watch(&Tensor::col(x_data.clone()).unwrap());
        let loss = composite_loss(&a, &b, &x);
        let grads = tape.backward(&loss).unwrap();

        // relu and clamp kinks: skip points where a coordinate sits within
        // the finite-difference window of the kink
        let pre = Tensor::matrix(2, 3, a_data.clone()).unwrap()
            .matmul(&Tensor::col(x_data.clone()).unwrap()).unwrap()
            .add_col(&Tensor::col(b_data.clone()).unwrap()).unwrap();
        prop_assume!(pre.data().iter().all(|v| v.abs() > 1e-4));
        let g = pre.relu();
        let norm2: f64 = g.data().iter().map(|v| 0.5 * v * v * 0.5 * v * v).sum::<f64>();
        prop_assume!((norm2.sqrt() - 2.0).abs() > 1e-3);

        let ga = grads.get(&a);
        for i in 0..6 {
            let fd = central_fd(a_data.clone(), i, &|d| eval(d, &b_data, &x_data));
            prop_assert!(close(ga[i], fd), "dA[{i}]: ad {} fd {fd}", ga[i]);
        }
        let gb = grads.get(&b);
        for i in 0..2 {
            let fd = central_fd(b_data.clone(), i, &|d| eval(&a_data, d, &x_data));
            prop_assert!(close(gb[i], fd), "db[{i}]: ad {} fd {fd}", gb[i]);
        }
        let gx = grads.get(&x);
        for i in 0..3 {
            let fd = central_fd(x_data.clone(), i, &|d| eval(&a_data, &b_data, d));
            prop_assert!(close(gx[i], fd), "dx[{i}]: ad {} fd {fd}", gx[i]);
        }
    }

    #[test]
    fn hardmax_columns_are_stochastic(
        data in proptest::collection::vec(-5.0f64..5.0, 12),
    ) {
        let m = Tensor::matrix(3, 4, data).unwrap();
        let g = m.hardmax_cols();
        for j in 0..4 {
            let col: Vec<f64> = (0..3).map(|i| g.data()[i * 4 + j]).collect();
            let sum: f64 = col.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(col.iter().all(|&v| v >= 0.0));
            // mass sits exactly on the per-column maxima
            let maxv = (0..3).map(|i| m.data()[i * 4 + j]).fold(f64::MIN, f64::max);
            for i in 0..3 {
                let is_max = m.data()[i * 4 + j] == maxv;
                prop_assert_eq!(col[i] > 0.0, is_max);
            }
        }
    }

    #[test]
    fn hardmax_invariant_under_column_shift(
        data in proptest::collection::vec(-5.0f64..5.0, 12),
        shifts in proptest::collection::vec(-10.0f64..10.0, 4),
    ) {
        let m = Tensor::matrix(3, 4, data.clone()).unwrap();
        let shifted: Vec<f64> = data
            .iter()
            .enumerate()
            .map(|(idx, &v)| v + shifts[idx % 4])
            .collect();
        let ms = Tensor::matrix(3, 4, shifted).unwrap();
        let (g, gs) = (m.hardmax_cols(), ms.hardmax_cols());
        prop_assert_eq!(g.data(), gs.data());
    }
}

#[test]
fn hardmax_ties_share_mass_uniformly() {
    let m = Tensor::matrix(3, 1, vec![2.0, 2.0, 1.0]).unwrap();
    let g = m.hardmax_cols();
    assert_eq!(g.data(), &[0.5, 0.5, 0.0]);
}

#[test]
fn hardmax_gate_carries_no_gradient() {
    // the gate is treated as a constant: d/ds [s ⊙ hardmax(s)] = hardmax(s)
    let tape = Tape::new();
    let s = tape.watch(&Tensor::matrix(2, 1, vec![3.0, 1.0]).unwrap());
    let gated = s.hadamard(&s.detach().hardmax_cols()).unwrap();
    let grads = tape.backward(&gated.sum()).unwrap();
    assert_eq!(grads.get(&s), vec![1.0, 0.0]);
}
