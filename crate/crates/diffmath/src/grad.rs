//! Reverse accumulation that emits new tape nodes instead of numbers.
//!
//! Every adjoint is itself an expression over the same primitive set, so the
//! result of [`Tape::gradient`] can feed any further scalar function whose
//! gradient is then taken again.

use ndarray::Array2;

use crate::error::{DiffError, Result};
use crate::tape::{Expr, Op, Tape};

impl Tape {
    /// Gradient expressions of the 1x1 expression `y` with respect to each
    /// expression in `wrt`. Entries that `y` does not depend on come back as
    /// zero constants of the matching shape.
    pub fn gradient(&mut self, y: Expr, wrt: &[Expr]) -> Result<Vec<Expr>> {
        let shape = self.shape(y);
        if shape != (1, 1) {
            return Err(DiffError::NotScalar(shape));
        }

        // Forward pass over y's prefix: which nodes depend on some target.
        let mut depends = vec![false; y.0 + 1];
        for w in wrt {
            if w.0 <= y.0 {
                depends[w.0] = true;
            }
        }
        for i in 0..=y.0 {
            if !depends[i] {
                depends[i] = self.nodes[i].op.operands().any(|e| depends[e.0]);
            }
        }

        let mut adjoint: Vec<Option<Expr>> = vec![None; y.0 + 1];
        if depends[y.0] {
            adjoint[y.0] = Some(self.unit());
        }

        for i in (0..=y.0).rev() {
            let Some(g) = adjoint[i] else { continue };
            if !depends[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let out = Expr(i);
            for (target, contribution) in self.backward(&op, out, g, &depends)? {
                adjoint[target.0] = Some(match adjoint[target.0] {
                    None => contribution,
                    Some(prev) => self.add(prev, contribution)?,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let s = self.shape(*w);
                    self.zeros(s)
                }
            })
            .collect())
    }

    /// `g * x` for a 1x1 adjoint `g`, skipping the product when `g` is the
    /// seed one.
    fn times_adjoint(&mut self, g: Expr, x: Expr) -> Result<Expr> {
        if Some(g) == self.unit {
            Ok(x)
        } else {
            self.scalar_mul(g, x)
        }
    }

    fn backward(&mut self, op: &Op, out: Expr, g: Expr, depends: &[bool]) -> Result<Vec<(Expr, Expr)>> {
        let needs = |e: Expr| depends[e.0];
        let mut grads = Vec::with_capacity(2);
        match *op {
            Op::Constant(_) | Op::Variable(_) | Op::Step(_) => {}
            Op::MatMul(a, b) => {
                if needs(a) {
                    let bt = self.transpose(b);
                    grads.push((a, self.matmul(g, bt)?));
                }
                if needs(b) {
                    let at = self.transpose(a);
                    grads.push((b, self.matmul(at, g)?));
                }
            }
            Op::Add(a, b) => {
                if needs(a) {
                    grads.push((a, g));
                }
                if needs(b) {
                    grads.push((b, g));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    grads.push((a, self.mul(g, b)?));
                }
                if needs(b) {
                    grads.push((b, self.mul(g, a)?));
                }
            }
            Op::Scale(a, c) => grads.push((a, self.scale(g, c))),
            Op::AddScalar(a, _) => grads.push((a, g)),
            Op::ScalarMul(s, a) => {
                if needs(s) {
                    let prod = self.mul(g, a)?;
                    grads.push((s, self.sum(prod)));
                }
                if needs(a) {
                    grads.push((a, self.scalar_mul(s, g)?));
                }
            }
            Op::Sigmoid(_) => {
                let a = first_operand(op);
                let neg = self.scale(out, -1.0);
                let one_minus = self.add_scalar(neg, 1.0);
                let local = self.mul(out, one_minus)?;
                grads.push((a, self.mul(g, local)?));
            }
            Op::Relu(a) => {
                let mask = self.step(a);
                grads.push((a, self.mul(g, mask)?));
            }
            Op::Exp(a) => grads.push((a, self.mul(g, out)?)),
            Op::Log(a) => {
                let inv = self.pow(a, -1.0);
                grads.push((a, self.mul(g, inv)?));
            }
            Op::Pow(a, p) => {
                if p == 0.0 {
                } else if p == 1.0 {
                    grads.push((a, g));
                } else {
                    let lower = self.pow(a, p - 1.0);
                    let local = self.scale(lower, p);
                    grads.push((a, self.mul(g, local)?));
                }
            }
            Op::Transpose(a) => grads.push((a, self.transpose(g))),
            Op::RowSum(a) | Op::RowMean(a) => {
                let cols = self.shape(a).1;
                let ones = self.ones((1, cols));
                let spread = self.matmul(g, ones)?;
                let spread = if matches!(op, Op::RowMean(_)) {
                    self.scale(spread, 1.0 / cols as f64)
                } else {
                    spread
                };
                grads.push((a, spread));
            }
            Op::ColSum(a) => {
                let rows = self.shape(a).0;
                let ones = self.ones((rows, 1));
                grads.push((a, self.matmul(ones, g)?));
            }
            Op::Softmax(a) => {
                let cols = self.shape(a).1;
                let gy = self.mul(g, out)?;
                let inner = self.row_sum(gy);
                let ones = self.ones((1, cols));
                let spread = self.matmul(inner, ones)?;
                let centered = self.sub(g, spread)?;
                grads.push((a, self.mul(out, centered)?));
            }
            Op::SoftmaxCrossEntropy(z, t) => {
                let rows = self.shape(z).0.max(1) as f64;
                let p = self.softmax(z);
                if needs(z) {
                    let diff = self.sub(p, t)?;
                    let diff = self.scale(diff, 1.0 / rows);
                    grads.push((z, self.times_adjoint(g, diff)?));
                }
                if needs(t) {
                    let logp = self.log(p);
                    let local = self.scale(logp, -1.0 / rows);
                    grads.push((t, self.times_adjoint(g, local)?));
                }
            }
            Op::FrobSq(a) => {
                let twice = self.scale(a, 2.0);
                grads.push((a, self.times_adjoint(g, twice)?));
            }
            Op::Sum(a) => {
                let s = self.shape(a);
                let ones = self.constant(Array2::ones(s));
                grads.push((a, self.times_adjoint(g, ones)?));
            }
            Op::Reshape(a, _) => {
                let s = self.shape(a);
                grads.push((a, self.reshape(g, s)?));
            }
        }
        Ok(grads)
    }
}

fn first_operand(op: &Op) -> Expr {
    op.operands().next().expect("unary op has an operand")
}
