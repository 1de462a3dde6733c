use diffmath::{finite_diff_check, Binding, Expr, Tape};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random_matrix(rng: &mut ChaCha8Rng, shape: (usize, usize), lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(lo..hi))
}

/// Reduces any expression to a scalar through a fixed random weighting so
/// every output entry contributes to the checked gradient.
fn weighted_sum(t: &mut Tape, e: Expr, rng: &mut ChaCha8Rng) -> Expr {
    let w = random_matrix(rng, t.shape(e), -1.0, 1.0);
    let w = t.constant(w);
    let p = t.mul(e, w).unwrap();
    t.sum(p)
}

/// Runs `build` at 10 random points and checks the gradient of each
/// primitive against central differences.
fn check_primitive(name: &str, shape: (usize, usize), range: (f64, f64), build: impl Fn(&mut Tape, Expr) -> Expr) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 7919);
    for trial in 0..10 {
        let mut t = Tape::new();
        let x = t.variable("x", shape);
        let y = build(&mut t, x);
        let f = weighted_sum(&mut t, y, &mut rng);
        let b = Binding::new().with(x, random_matrix(&mut rng, shape, range.0, range.1));
        let err = finite_diff_check(&mut t, f, x, &b, H).unwrap();
        assert!(err < 1e-5, "{name} trial {trial}: relative error {err}");
    }
}

#[test]
fn elementwise_primitives_match_finite_differences() {
    check_primitive("sigmoid", (3, 2), (-3.0, 3.0), |t, x| t.sigmoid(x));
    check_primitive("exp", (3, 2), (-2.0, 2.0), |t, x| t.exp(x));
    check_primitive("log", (3, 2), (0.5, 3.0), |t, x| t.log(x));
    check_primitive("pow", (3, 2), (0.5, 3.0), |t, x| t.pow(x, -0.5));
    check_primitive("pow3", (2, 2), (-2.0, 2.0), |t, x| t.pow(x, 3.0));
    check_primitive("scale", (2, 3), (-1.0, 1.0), |t, x| t.scale(x, -2.5));
    check_primitive("add_scalar", (2, 3), (-1.0, 1.0), |t, x| t.add_scalar(x, 4.0));
    check_primitive("mul", (2, 3), (-1.0, 1.0), |t, x| t.mul(x, x).unwrap());
    check_primitive("add", (2, 3), (-1.0, 1.0), |t, x| t.add(x, x).unwrap());
}

#[test]
fn relu_matches_finite_differences_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let mut t = Tape::new();
        let x = t.variable("x", (3, 3));
        let r = t.relu(x);
        let f = weighted_sum(&mut t, r, &mut rng);
        let point =
            random_matrix(&mut rng, (3, 3), -1.0, 1.0).mapv(|v| if v.abs() < 1e-2 { v.signum() * 1e-2 + v } else { v });
        let b = Binding::new().with(x, point);
        assert!(finite_diff_check(&mut t, f, x, &b, H).unwrap() < 1e-5);
    }
}

#[test]
fn structural_primitives_match_finite_differences() {
    check_primitive("transpose", (2, 3), (-1.0, 1.0), |t, x| t.transpose(x));
    check_primitive("row_sum", (3, 4), (-1.0, 1.0), |t, x| t.row_sum(x));
    check_primitive("row_mean", (3, 4), (-1.0, 1.0), |t, x| t.row_mean(x));
    check_primitive("col_sum", (3, 4), (-1.0, 1.0), |t, x| t.col_sum(x));
    check_primitive("softmax", (3, 4), (-2.0, 2.0), |t, x| t.softmax(x));
    check_primitive("frob_sq", (3, 2), (-1.0, 1.0), |t, x| t.frob_sq(x));
    check_primitive("sum", (3, 2), (-1.0, 1.0), |t, x| t.sum(x));
    check_primitive("reshape", (2, 3), (-1.0, 1.0), |t, x| t.reshape(x, (3, 2)).unwrap());
    check_primitive("matmul_left", (2, 3), (-1.0, 1.0), |t, x| {
        let w = t.constant(array![[1.0, -1.0], [0.5, 2.0], [-0.3, 0.7]]);
        t.matmul(x, w).unwrap()
    });
    check_primitive("matmul_right", (3, 2), (-1.0, 1.0), |t, x| {
        let w = t.constant(array![[1.0, -1.0, 0.2], [0.5, 2.0, -0.4]]);
        t.matmul(w, x).unwrap()
    });
    check_primitive("scalar_mul_scalar", (1, 1), (-1.0, 1.0), |t, s| {
        let m = t.constant(array![[1.0, -1.0], [0.5, 2.0]]);
        t.scalar_mul(s, m).unwrap()
    });
    check_primitive("scalar_mul_matrix", (2, 2), (-1.0, 1.0), |t, x| {
        let s = t.scalar(-1.7);
        t.scalar_mul(s, x).unwrap()
    });
}

#[test]
fn cross_entropy_matches_finite_differences_in_both_arguments() {
    check_primitive("sce_logits", (3, 4), (-2.0, 2.0), |t, z| {
        let y = t.constant(array![[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        t.softmax_cross_entropy(z, y).unwrap()
    });
    check_primitive("sce_targets", (2, 3), (0.0, 1.0), |t, y| {
        let z = t.constant(array![[0.3, -1.0, 2.0], [0.0, 0.5, -0.5]]);
        t.softmax_cross_entropy(z, y).unwrap()
    });
}

#[test]
fn sum_of_sigmoid_at_origin() {
    let mut t = Tape::new();
    let x = t.variable("x", (4, 1));
    let s = t.sigmoid(x);
    let f = t.sum(s);
    let b = Binding::new().with(x, Array2::zeros((4, 1)));
    assert!(finite_diff_check(&mut t, f, x, &b, 1e-5).unwrap() < 1e-8);
}

#[test]
fn linear_function_is_exact_for_any_step() {
    for h in [1e-3, 1e-1, 1.0] {
        let mut t = Tape::new();
        let x = t.variable("x", (2, 2));
        let w = t.constant(array![[0.5, -2.0], [3.0, 0.25]]);
        let p = t.mul(x, w).unwrap();
        let f = t.sum(p);
        let b = Binding::new().with(x, array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(finite_diff_check(&mut t, f, x, &b, h).unwrap() < 1e-12);
    }
}

/// ∇_W of mean cross-entropy of a linear classifier on two samples.
#[test]
fn linear_classifier_weight_gradient() {
    let mut t = Tape::new();
    let x = t.constant(array![[1.0, -0.5, 2.0], [0.3, 0.8, -1.2]]);
    let y = t.constant(array![[1.0, 0.0], [0.0, 1.0]]);
    let w = t.variable("W", (3, 2));
    let z = t.matmul(x, w).unwrap();
    let l = t.softmax_cross_entropy(z, y).unwrap();
    let b = Binding::new().with(w, array![[0.2, -0.1], [0.4, 0.3], [-0.6, 0.05]]);
    assert!(finite_diff_check(&mut t, l, w, &b, 1e-5).unwrap() < 1e-6);
}

/// Second-order case: a loss built from a gradient, differentiated with
/// respect to the data that produced it.
#[test]
fn gradient_of_gradient_norm_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut t = Tape::new();
    let x = t.variable("X", (3, 2));
    let w = t.variable("W", (2, 2));
    let y = t.constant(array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
    let h = t.matmul(x, w).unwrap();
    let h = t.relu(h);
    let z = t.sigmoid(h);
    let l = t.softmax_cross_entropy(z, y).unwrap();
    let gw = t.gradient(l, &[w]).unwrap()[0];
    let target = t.constant(random_matrix(&mut rng, (2, 2), -0.2, 0.2));
    let diff = t.sub(gw, target).unwrap();
    let d = t.frob_sq(diff);
    let b = Binding::new()
        .with(x, random_matrix(&mut rng, (3, 2), 0.1, 1.0))
        .with(w, random_matrix(&mut rng, (2, 2), 0.1, 1.0));
    let err = finite_diff_check(&mut t, d, x, &b, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn second_derivatives_of_polynomials_are_exact() {
    // f(x) = 3x⁴ − 2x² + x; f'' = 36x² − 4
    for xv in [-2.0, -0.5, 0.0, 1.0, 3.0] {
        let mut t = Tape::new();
        let x = t.variable("x", (1, 1));
        let x2 = t.mul(x, x).unwrap();
        let x4 = t.mul(x2, x2).unwrap();
        let a = t.scale(x4, 3.0);
        let b2 = t.scale(x2, -2.0);
        let s = t.add(a, b2).unwrap();
        let f = t.add(s, x).unwrap();
        let d1 = t.gradient(f, &[x]).unwrap()[0];
        let d2 = t.gradient(d1, &[x]).unwrap()[0];
        let b = Binding::new().with(x, array![[xv]]);
        assert_eq!(t.scalar_value(d2, &b).unwrap(), 36.0 * xv * xv - 4.0);
    }
}

proptest! {
    #[test]
    fn evaluation_is_pure(vals in proptest::collection::vec(-5.0f64..5.0, 6)) {
        let mut t = Tape::new();
        let x = t.variable("x", (2, 3));
        let s = t.softmax(x);
        let e = t.exp(s);
        let f = t.frob_sq(e);
        let g = t.gradient(f, &[x]).unwrap()[0];
        let b = Binding::new().with(x, Array2::from_shape_vec((2, 3), vals).unwrap());
        let first = t.evaluate(&[f, g], &b).unwrap();
        let second = t.evaluate(&[f, g], &b).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn quadratic_form_hessian_is_symmetric_part(a in proptest::collection::vec(-3.0f64..3.0, 4),
                                               v in proptest::collection::vec(-3.0f64..3.0, 2)) {
        // f(x) = xᵀ A x, ∇f = (A + Aᵀ) x, and ∇(uᵀ∇f) = (A + Aᵀ) u
        let am = Array2::from_shape_vec((2, 2), a).unwrap();
        let mut t = Tape::new();
        let x = t.variable("x", (2, 1));
        let ac = t.constant(am.clone());
        let ax = t.matmul(ac, x).unwrap();
        let xt = t.transpose(x);
        let f = t.matmul(xt, ax).unwrap();
        let g = t.gradient(f, &[x]).unwrap()[0];
        let u = t.constant(array![[1.0], [-2.0]]);
        let ug = t.mul(u, g).unwrap();
        let s = t.sum(ug);
        let hu = t.gradient(s, &[x]).unwrap()[0];
        let b = Binding::new().with(x, Array2::from_shape_vec((2, 1), v).unwrap());
        let got = t.value(hu, &b).unwrap();
        let expected = (&am + &am.t()).dot(&array![[1.0], [-2.0]]);
        for (p, q) in got.iter().zip(expected.iter()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
