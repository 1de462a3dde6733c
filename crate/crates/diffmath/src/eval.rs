use ndarray::{Array2, Axis, Zip};

use crate::error::{DiffError, Result};
use crate::tape::{Binding, Expr, Op, Tape};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn pow_value(x: f64, p: f64) -> f64 {
    if x == 0.0 && p < 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

fn softmax_cross_entropy(z: &Array2<f64>, t: &Array2<f64>) -> f64 {
    let rows = z.nrows().max(1) as f64;
    let mut total = 0.0;
    for (zr, tr) in z.rows().into_iter().zip(t.rows()) {
        let max = zr.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + zr.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let mass: f64 = tr.sum();
        let dot: f64 = zr.iter().zip(tr.iter()).map(|(a, b)| a * b).sum();
        total += lse * mass - dot;
    }
    total / rows
}

impl Tape {
    /// Evaluates several expressions in one pass, sharing intermediate
    /// values. Only nodes reachable from `outputs` are computed.
    pub fn evaluate(&self, outputs: &[Expr], binding: &Binding) -> Result<Vec<Array2<f64>>> {
        let Some(max) = outputs.iter().map(|e| e.0).max() else {
            return Ok(Vec::new());
        };
        let mut needed = vec![false; max + 1];
        let mut stack: Vec<usize> = outputs.iter().map(|e| e.0).collect();
        while let Some(i) = stack.pop() {
            if needed[i] {
                continue;
            }
            needed[i] = true;
            stack.extend(self.nodes[i].op.operands().map(|e| e.0));
        }

        let mut values: Vec<Option<Array2<f64>>> = vec![None; max + 1];
        for i in 0..=max {
            if needed[i] {
                let v = self.compute(i, &values, binding)?;
                values[i] = Some(v);
            }
        }
        Ok(outputs
            .iter()
            .map(|e| values[e.0].clone().expect("output was evaluated"))
            .collect())
    }

    pub fn value(&self, e: Expr, binding: &Binding) -> Result<Array2<f64>> {
        Ok(self.evaluate(&[e], binding)?.remove(0))
    }

    /// Convenience for 1x1 expressions.
    pub fn scalar_value(&self, e: Expr, binding: &Binding) -> Result<f64> {
        let v = self.value(e, binding)?;
        if v.dim() != (1, 1) {
            return Err(DiffError::NotScalar(v.dim()));
        }
        Ok(v[[0, 0]])
    }

    fn compute(&self, i: usize, values: &[Option<Array2<f64>>], binding: &Binding) -> Result<Array2<f64>> {
        let node = &self.nodes[i];
        let val = |e: Expr| values[e.0].as_ref().expect("operand evaluated before use");
        let out = match &node.op {
            Op::Constant(c) => (**c).clone(),
            Op::Variable(name) => {
                let v = binding.get(Expr(i)).ok_or_else(|| DiffError::Unbound(name.clone()))?;
                if v.dim() != node.shape {
                    return Err(DiffError::BindingShape {
                        name: name.clone(),
                        expected: node.shape,
                        got: v.dim(),
                    });
                }
                v.clone()
            }
            Op::MatMul(a, b) => val(*a).dot(val(*b)),
            Op::Add(a, b) => val(*a) + val(*b),
            Op::Mul(a, b) => val(*a) * val(*b),
            Op::Scale(a, c) => val(*a) * *c,
            Op::AddScalar(a, c) => val(*a) + *c,
            Op::ScalarMul(s, a) => val(*a) * val(*s)[[0, 0]],
            Op::Sigmoid(a) => val(*a).mapv(sigmoid),
            Op::Relu(a) => val(*a).mapv(|x| if x > 0.0 { x } else { 0.0 }),
            Op::Step(a) => val(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Exp(a) => val(*a).mapv(f64::exp),
            Op::Log(a) => val(*a).mapv(f64::ln),
            Op::Pow(a, p) => {
                let p = *p;
                val(*a).mapv(|x| pow_value(x, p))
            }
            Op::Transpose(a) => val(*a).t().to_owned(),
            Op::RowSum(a) => val(*a).sum_axis(Axis(1)).insert_axis(Axis(1)),
            Op::RowMean(a) => {
                let v = val(*a);
                let cols = v.ncols().max(1) as f64;
                v.sum_axis(Axis(1)).insert_axis(Axis(1)) / cols
            }
            Op::ColSum(a) => val(*a).sum_axis(Axis(0)).insert_axis(Axis(0)),
            Op::Softmax(a) => softmax_rows(val(*a)),
            Op::SoftmaxCrossEntropy(z, t) => Array2::from_elem((1, 1), softmax_cross_entropy(val(*z), val(*t))),
            Op::FrobSq(a) => Array2::from_elem((1, 1), val(*a).iter().map(|x| x * x).sum()),
            Op::Sum(a) => Array2::from_elem((1, 1), val(*a).sum()),
            Op::Reshape(a, shape) => {
                let v = val(*a);
                let flat: Vec<f64> = v.iter().copied().collect();
                Array2::from_shape_vec(*shape, flat).expect("element count checked at build time")
            }
        };
        debug_assert_eq!(out.dim(), node.shape, "node {i} produced an unexpected shape");
        Ok(out)
    }
}

/// `true` when every entry is finite.
pub fn all_finite(a: &Array2<f64>) -> bool {
    let mut ok = true;
    Zip::from(a).for_each(|&x| ok &= x.is_finite());
    ok
}
