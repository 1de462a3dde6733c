//! Dense-matrix reverse-mode differentiation whose gradients are themselves
//! expressions.
//!
//! Expressions are recorded on a [`Tape`] as nodes over `f64` matrices.
//! [`Tape::evaluate`] computes values against a [`Binding`] of the free
//! variables, and [`Tape::gradient`] appends the adjoint computation to the
//! same tape using only the primitive op set. A loss that depends on a
//! gradient (for example a distance between two gradients) can therefore be
//! differentiated again.
//!
//! ```
//! use diffmath::{Binding, Tape};
//! use ndarray::array;
//!
//! let mut tape = Tape::new();
//! let x = tape.variable("x", (1, 1));
//! let x2 = tape.mul(x, x).unwrap();
//! let x3 = tape.mul(x2, x).unwrap();
//! let d1 = tape.gradient(x3, &[x]).unwrap()[0];
//! let d2 = tape.gradient(d1, &[x]).unwrap()[0];
//!
//! let b = Binding::new().with(x, array![[2.0]]);
//! assert_eq!(tape.scalar_value(d1, &b).unwrap(), 12.0);
//! assert_eq!(tape.scalar_value(d2, &b).unwrap(), 12.0);
//! ```

mod check;
mod error;
mod eval;
mod grad;
mod tape;

pub use check::finite_diff_check;
pub use error::{DiffError, Result, Shape};
pub use eval::{all_finite, sigmoid};
pub use tape::{Binding, Expr, Tape};

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut t = Tape::new();
        let z = t.scalar(0.0);
        let s = t.sigmoid(z);
        assert_eq!(t.scalar_value(s, &Binding::new()).unwrap(), 0.5);
    }

    #[test]
    fn matmul_row_by_column() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, 2.0]]);
        let b = t.constant(array![[3.0], [4.0]]);
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c, &Binding::new()).unwrap(), array![[11.0]]);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln2() {
        let mut t = Tape::new();
        let z = t.constant(array![[0.0, 0.0]]);
        let y = t.constant(array![[1.0, 0.0]]);
        let l = t.softmax_cross_entropy(z, y).unwrap();
        let v = t.scalar_value(l, &Binding::new()).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn cube_derivatives_up_to_third_order() {
        let mut t = Tape::new();
        let x = t.variable("x", (1, 1));
        let x2 = t.mul(x, x).unwrap();
        let x3 = t.mul(x2, x).unwrap();
        let d1 = t.gradient(x3, &[x]).unwrap()[0];
        let d2 = t.gradient(d1, &[x]).unwrap()[0];
        let d3 = t.gradient(d2, &[x]).unwrap()[0];
        let b = Binding::new().with(x, array![[2.0]]);
        assert_eq!(t.scalar_value(d1, &b).unwrap(), 12.0);
        assert_eq!(t.scalar_value(d2, &b).unwrap(), 12.0);
        assert_eq!(t.scalar_value(d3, &b).unwrap(), 6.0);
    }

    #[test]
    fn frobenius_gradient_is_twice_input() {
        let mut t = Tape::new();
        let x = t.variable("X", (2, 2));
        let f = t.frob_sq(x);
        let g = t.gradient(f, &[x]).unwrap()[0];
        let xv = array![[1.0, -2.0], [0.5, 3.0]];
        let b = Binding::new().with(x, xv.clone());
        assert_eq!(t.value(g, &b).unwrap(), xv * 2.0);
    }

    #[test]
    fn absent_variable_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.variable("x", (2, 3));
        let y = t.variable("y", (1, 1));
        let f = t.frob_sq(y);
        let g = t.gradient(f, &[x]).unwrap()[0];
        assert_eq!(t.shape(g), (2, 3));
        let b = Binding::new().with(y, array![[1.0]]);
        assert_eq!(t.value(g, &b).unwrap(), ndarray::Array2::<f64>::zeros((2, 3)));
    }

    #[test]
    fn gradient_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.variable("x", (2, 1));
        assert_eq!(t.gradient(x, &[x]), Err(DiffError::NotScalar((2, 1))));
    }

    #[test]
    fn unbound_and_misshapen_bindings_fail() {
        let mut t = Tape::new();
        let x = t.variable("x", (2, 2));
        let s = t.sum(x);
        assert_eq!(t.value(s, &Binding::new()), Err(DiffError::Unbound("x".into())));
        let b = Binding::new().with(x, array![[1.0]]);
        assert!(matches!(t.value(s, &b), Err(DiffError::BindingShape { .. })));
    }

    #[test]
    fn shape_mismatch_is_reported_at_build_time() {
        let mut t = Tape::new();
        let a = t.variable("a", (2, 3));
        let b = t.variable("b", (2, 3));
        assert!(matches!(
            t.matmul(a, b),
            Err(DiffError::ShapeMismatch { op: "matmul", .. })
        ));
        let c = t.variable("c", (3, 2));
        assert!(t.add(a, c).is_err());
        assert!(t.reshape(a, (4, 2)).is_err());
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.variable("x", (1, 1));
        let r = t.relu(x);
        let g = t.gradient(r, &[x]).unwrap()[0];
        let b = Binding::new().with(x, array![[0.0]]);
        assert_eq!(t.scalar_value(g, &b).unwrap(), 0.0);
    }

    #[test]
    fn sqrt_has_zero_subgradient_at_origin() {
        let mut t = Tape::new();
        let x = t.variable("x", (1, 2));
        let sq = t.mul(x, x).unwrap();
        let n = t.sum(sq);
        let r = t.sqrt(n);
        let g = t.gradient(r, &[x]).unwrap()[0];
        let b = Binding::new().with(x, array![[0.0, 0.0]]);
        assert_eq!(t.value(g, &b).unwrap(), array![[0.0, 0.0]]);
    }

    #[test]
    fn finite_diff_rejects_bad_step() {
        let mut t = Tape::new();
        let x = t.variable("x", (1, 1));
        let f = t.frob_sq(x);
        let b = Binding::new().with(x, array![[1.0]]);
        assert!(finite_diff_check(&mut t, f, x, &b, 0.0).is_err());
    }

    #[test]
    fn finite_diff_reports_non_finite_objective() {
        let mut t = Tape::new();
        let x = t.variable("x", (1, 1));
        let f = t.log(x);
        let s = t.sum(f);
        let b = Binding::new().with(x, array![[1e-6]]);
        assert!(matches!(
            finite_diff_check(&mut t, s, x, &b, 1e-5),
            Err(DiffError::NonFinite(_))
        ));
    }
}
