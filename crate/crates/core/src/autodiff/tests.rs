use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;

fn scalar_leaf(tape: &mut Tape, x: f64) -> Var {
    tape.leaf(Tensor::scalar(x))
}

#[test]
fn record_primals() {
    let mut tape = Tape::new();
    let a = tape.scalar_constant(2.0);
    let b = tape.scalar_constant(3.0);
    let s = tape.record(OpKind::Add, &[a, b]).unwrap();
    assert_eq!(tape.scalar(s), 5.0);

    let one = tape.scalar_constant(1.0);
    let l = tape.record(OpKind::Ln, &[one]).unwrap();
    assert_eq!(tape.scalar(l), 0.0);

    let m = tape.constant(Tensor::zeros(Shape::new(2, 3)));
    let v = tape.constant(Tensor::zeros(Shape::new(3, 1)));
    let p = tape.record(OpKind::MatMul, &[m, v]).unwrap();
    assert_eq!(p.shape(), Shape::new(2, 1));
}

#[test]
fn shape_mismatch_names_op_and_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(Shape::new(2, 3)));
    let b = tape.constant(Tensor::zeros(Shape::new(2, 1)));
    let err = tape.matmul(a, b).unwrap_err();
    assert_eq!(
        err,
        AutodiffError::ShapeMismatch {
            op: "matmul",
            shapes: vec![Shape::new(2, 3), Shape::new(2, 1)]
        }
    );
    let msg = alloc::format!("{err}");
    assert!(
        msg.contains("matmul") && msg.contains("2x3") && msg.contains("2x1"),
        "{msg}"
    );
    assert!(tape.add(a, b).is_err());
    assert!(tape.expand(a, Shape::new(4, 3)).is_err());
}

#[test]
fn first_derivatives() {
    let mut tape = Tape::new();
    let x = scalar_leaf(&mut tape, 3.0);
    let sq = tape.mul(x, x).unwrap();
    assert_eq!(tape.backward(sq, &[x]).unwrap().values, vec![6.0]);

    let mut tape = Tape::new();
    let x = scalar_leaf(&mut tape, 2.0);
    let l = tape.ln(x).unwrap();
    assert_eq!(tape.backward(l, &[x]).unwrap().values, vec![0.5]);
}

#[test]
fn backward_leaves_tape_unchanged() {
    let mut tape = Tape::new();
    let x = scalar_leaf(&mut tape, 1.5);
    let y = tape.exp(x).unwrap();
    let before = tape.len();
    tape.backward(y, &[x]).unwrap();
    assert_eq!(tape.len(), before);
    assert!(!tape.has_gradient_graph());
}

#[test]
fn non_scalar_loss_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
    let err = tape.backward(x, &[x]).unwrap_err();
    assert_eq!(
        err,
        AutodiffError::NonScalarLoss {
            shape: Shape::new(1, 2)
        }
    );
}

#[test]
fn foreign_parameter_gets_zero_and_warning() {
    let mut other = Tape::new();
    for _ in 0..10 {
        other.scalar_constant(0.0);
    }
    let stranger = other.leaf(Tensor::row(vec![1.0, 2.0]));

    let mut tape = Tape::new();
    let x = scalar_leaf(&mut tape, 2.0);
    let y = tape.mul(x, x).unwrap();
    let g = tape.backward(y, &[x, stranger]).unwrap();
    assert_eq!(g.values, vec![4.0, 0.0, 0.0]);
    assert_eq!(g.untracked, vec![1]);
    assert!(g.has_warning());
}

#[test]
fn second_derivative_of_cube() {
    let mut tape = Tape::new();
    let x = scalar_leaf(&mut tape, 2.0);
    let cube = tape.powf(x, 3.0).unwrap();
    let g = tape.grad(cube, &[x], GradMode::Graph).unwrap()[0];
    assert_eq!(tape.scalar(g), 12.0);
    let h = tape.backward_through_gradient(g, &[x]).unwrap();
    assert!((h.values[0] - 12.0).abs() < 1e-12);
}

#[test]
fn backward_through_gradient_needs_graph() {
    let mut tape = Tape::new();
    let x = scalar_leaf(&mut tape, 2.0);
    let y = tape.mul(x, x).unwrap();
    let g = tape.grad(y, &[x], GradMode::Detached).unwrap()[0];
    let z = tape.mul(g, x).unwrap();
    assert_eq!(
        tape.backward_through_gradient(z, &[x]).unwrap_err(),
        AutodiffError::NoGradientGraph
    );
}

/// meta-loss `L(θ - α∇L(θ))` for `L(θ) = θ²`.
fn quadratic_meta_gradient(theta: f64, alpha: f64, mode: GradMode) -> f64 {
    let mut tape = Tape::new();
    let t = scalar_leaf(&mut tape, theta);
    let inner = tape.mul(t, t).unwrap();
    let g = tape.grad(inner, &[t], mode).unwrap()[0];
    let step = tape.scale(g, alpha).unwrap();
    let adapted = tape.sub(t, step).unwrap();
    let outer = tape.mul(adapted, adapted).unwrap();
    match mode {
        GradMode::Graph => tape.backward_through_gradient(outer, &[t]).unwrap().values[0],
        GradMode::Detached => tape.backward(outer, &[t]).unwrap().values[0],
    }
}

#[test]
fn quadratic_meta_gradient_values() {
    // (θ - 2αθ)² differentiates to 2θ(1 - 2α)²
    let full = quadratic_meta_gradient(1.0, 0.1, GradMode::Graph);
    assert!((full - 1.28).abs() < 1e-12, "{full}");
    // first order drops the (1 - 2α) Jacobian factor
    let first = quadratic_meta_gradient(1.0, 0.1, GradMode::Detached);
    assert!((first - 1.6).abs() < 1e-12, "{first}");

    let h = 1e-5;
    let meta = |th: f64| {
        let a = th - 0.1 * 2.0 * th;
        a * a
    };
    let fd = (meta(1.0 + h) - meta(1.0 - h)) / (2.0 * h);
    assert!(relative_error(fd, full) < 1e-8);
}

#[test]
fn finite_difference_check_examples() {
    let params = [Tensor::row(vec![0.3, -1.2, 2.5]), Tensor::scalar(0.7)];
    let report = finite_difference_check(
        |tape, vs| {
            let mut total = None;
            for &v in vs {
                let sq = tape.mul(v, v)?;
                let s = tape.sum(sq)?;
                total = Some(match total {
                    None => s,
                    Some(t) => tape.add(t, s)?,
                });
            }
            Ok::<_, AutodiffError>(total.unwrap())
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(report.max_relative_error < 1e-6, "{report:?}");

    let err = finite_difference_check(|tape, vs| tape.sum(vs[0]), &params, 0.0).unwrap_err();
    assert_eq!(err, AutodiffError::InvalidStep);
}

#[test]
fn finite_difference_check_reports_non_finite() {
    let params = [Tensor::scalar(1e-6)];
    let report = finite_difference_check(|tape, vs| tape.ln(vs[0]), &params, 1e-5).unwrap();
    assert_eq!(report.non_finite, vec![0]);
    assert!(!report.passed(1e-4));
}

#[test]
fn broadcast_and_slicing_gradients() {
    let params = [
        Tensor::from_vec(2, 3, vec![0.5, -0.4, 1.1, 0.2, 0.9, -1.3]).unwrap(),
        Tensor::row(vec![0.1, 0.2, 0.3]),
        Tensor::scalar(1.7),
    ];
    let report = finite_difference_check(
        |tape, v| {
            let a = tape.add_broadcast(v[0], v[1])?;
            let b = tape.mul_broadcast(a, v[2])?;
            let c = tape.abs(b)?;
            let t = tape.transpose(c)?;
            let s = tape.slice_cols(t, 1, 1)?;
            let p = tape.pad_cols(s, 1, 3)?;
            let q = tape.concat_cols(&[p, t])?;
            let e = tape.exp(q)?;
            let r = tape.sum_cols(e)?;
            let w = tape.sum_rows(r)?;
            let d = tape.div(w, v[2])?;
            let m = tape.powf(d, 1.5)?;
            tape.mean(m)
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(report.passed(1e-6), "{report:?}");
}

#[test]
fn tape_verifies_after_double_backward() {
    let mut tape = Tape::new();
    let w = tape.leaf(Tensor::from_vec(2, 2, vec![0.3, -0.2, 0.8, 0.5]).unwrap());
    let x = tape.constant(Tensor::from_vec(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.0, 1.0]).unwrap());
    let h = tape.matmul(x, w).unwrap();
    let a = tape.leaky_relu(h, 0.01).unwrap();
    let l = tape.mean(a).unwrap();
    let g = tape.grad(l, &[w], GradMode::Graph).unwrap()[0];
    let sq = tape.mul(g, g).unwrap();
    let o = tape.sum(sq).unwrap();
    tape.backward_through_gradient(o, &[w]).unwrap();
    assert!(tape.verify());
}

fn composite(tape: &mut Tape, v: &[Var]) -> Result<Var, AutodiffError> {
    let h = tape.matmul(v[0], v[1])?;
    let h = tape.add_broadcast(h, v[2])?;
    let t = tape.scale(h, 0.5)?;
    let e = tape.exp(t)?;
    let one = tape.add_scalar(e, 1.0)?;
    let l = tape.ln(one)?;
    tape.mean(l)
}

fn composite_inputs(seed: &[f64]) -> Vec<Tensor> {
    vec![
        Tensor::from_vec(2, 3, seed[0..6].to_vec()).unwrap(),
        Tensor::from_vec(3, 2, seed[6..12].to_vec()).unwrap(),
        Tensor::row(seed[12..14].to_vec()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn composite_matches_finite_differences(seed in prop::collection::vec(-2.0f64..2.0, 14)) {
        let report = finite_difference_check(composite, &composite_inputs(&seed), 1e-5).unwrap();
        prop_assert!(report.passed(1e-4), "{:?}", report);
    }

    #[test]
    fn quadratic_second_order_closed_form(theta in -5.0f64..5.0, alpha in 0.0f64..0.4) {
        let got = quadratic_meta_gradient(theta, alpha, GradMode::Graph);
        let want = 2.0 * theta * (1.0 - 2.0 * alpha) * (1.0 - 2.0 * alpha);
        prop_assert!(relative_error(got, want) < 1e-10, "{} vs {}", got, want);
    }

    #[test]
    fn general_quadratic_second_order(a in 0.1f64..3.0, b in -2.0f64..2.0, theta in -3.0f64..3.0, alpha in 0.0f64..0.3) {
        // L(θ) = aθ² + bθ; θ' = θ - α(2aθ + b); meta-gradient = L'(θ')·(1 - 2αa)
        let mut tape = Tape::new();
        let t = scalar_leaf(&mut tape, theta);
        let loss = |tape: &mut Tape, x: Var| -> Var {
            let sq = tape.mul(x, x).unwrap();
            let q = tape.scale(sq, a).unwrap();
            let lin = tape.scale(x, b).unwrap();
            tape.add(q, lin).unwrap()
        };
        let inner = loss(&mut tape, t);
        let g = tape.grad(inner, &[t], GradMode::Graph).unwrap()[0];
        let s = tape.scale(g, alpha).unwrap();
        let adapted = tape.sub(t, s).unwrap();
        let outer = loss(&mut tape, adapted);
        let got = tape.backward_through_gradient(outer, &[t]).unwrap().values[0];
        let tp = theta - alpha * (2.0 * a * theta + b);
        let want = (2.0 * a * tp + b) * (1.0 - 2.0 * alpha * a);
        prop_assert!(relative_error(got, want) < 1e-10 || (got - want).abs() < 1e-12, "{} vs {}", got, want);
    }

    #[test]
    fn backward_is_linear(seed in prop::collection::vec(-2.0f64..2.0, 14), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let inputs = composite_inputs(&seed);
        let grad_of = |f: &dyn Fn(&mut Tape, &[Var]) -> Var| {
            let mut tape = Tape::new();
            let vs: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = f(&mut tape, &vs);
            tape.backward(out, &vs).unwrap().values
        };
        let other = |tape: &mut Tape, v: &[Var]| -> Var {
            let sq = tape.mul(v[1], v[1]).unwrap();
            let s = tape.sum(sq).unwrap();
            let m = tape.mean(v[2]).unwrap();
            tape.mul(s, m).unwrap()
        };
        let gf = grad_of(&|t, v| composite(t, v).unwrap());
        let gg = grad_of(&|t, v| other(t, v));
        let gc = grad_of(&|t, v| {
            let f = composite(t, v).unwrap();
            let g = other(t, v);
            let fa = t.scale(f, a).unwrap();
            let gb = t.scale(g, b).unwrap();
            t.add(fa, gb).unwrap()
        });
        for i in 0..gc.len() {
            prop_assert!((gc[i] - (a * gf[i] + b * gg[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_is_bit_identical(seed in prop::collection::vec(-2.0f64..2.0, 14)) {
        let inputs = composite_inputs(&seed);
        let run = || {
            let mut tape = Tape::new();
            let vs: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
            composite(&mut tape, &vs).unwrap();
            tape
        };
        let (t1, t2) = (run(), run());
        prop_assert!(t1.verify());
        let (r1, r2) = (t1.replay().unwrap(), t2.replay().unwrap());
        for (x, y) in r1.iter().zip(&r2) {
            prop_assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
