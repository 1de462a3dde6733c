use crate::error::{DiffError, Result};
use crate::eval::all_finite;
use crate::tape::{Binding, Expr, Tape};

/// Largest entrywise error between the analytic gradient of `output` with
/// respect to `var` and its central difference quotient with step `h`:
///
/// `max_k |g_k − (f(x + h e_k) − f(x − h e_k)) / 2h| / max(1, |g_k|)`.
///
/// The gradient nodes are appended to `tape`.
pub fn finite_diff_check(tape: &mut Tape, output: Expr, var: Expr, binding: &Binding, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(DiffError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if !tape.is_variable(var) {
        return Err(DiffError::NotVariable);
    }
    let grad = tape.gradient(output, &[var])?[0];
    let analytic = tape.value(grad, binding)?;
    if !all_finite(&analytic) {
        return Err(DiffError::NonFinite("analytic gradient".into()));
    }

    let point = binding
        .get(var)
        .cloned()
        .ok_or_else(|| DiffError::Unbound(tape.variable_name(var).unwrap_or("?").to_string()))?;
    let mut probe = binding.clone();
    let mut worst = 0.0f64;
    for (idx, &g) in analytic.indexed_iter() {
        let mut plus = point.clone();
        plus[idx] += h;
        probe.bind(var, plus);
        let f_plus = tape.scalar_value(output, &probe)?;

        let mut minus = point.clone();
        minus[idx] -= h;
        probe.bind(var, minus);
        let f_minus = tape.scalar_value(output, &probe)?;

        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(DiffError::NonFinite(format!("objective at entry {idx:?}")));
        }
        let numeric = (f_plus - f_minus) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / g.abs().max(1.0));
    }
    Ok(worst)
}
