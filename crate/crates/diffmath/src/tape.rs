use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{DiffError, Result, Shape};

/// Handle to a node on a [`Tape`].
///
/// Handles are plain indices; using one with a tape other than the one that
/// created it is a logic error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(pub(crate) usize);

impl Expr {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Constant(Arc<Array2<f64>>),
    Variable(String),
    MatMul(Expr, Expr),
    Add(Expr, Expr),
    Mul(Expr, Expr),
    /// `c * a` for a fixed real `c`.
    Scale(Expr, f64),
    /// `a + c` elementwise for a fixed real `c`.
    AddScalar(Expr, f64),
    /// `s * a` where `s` is a 1x1 expression.
    ScalarMul(Expr, Expr),
    Sigmoid(Expr),
    Relu(Expr),
    /// Heaviside step, 1 where `a > 0`. Has zero derivative everywhere.
    Step(Expr),
    Exp(Expr),
    Log(Expr),
    Pow(Expr, f64),
    Transpose(Expr),
    RowSum(Expr),
    RowMean(Expr),
    /// `1ᵀ a`: column sums as a 1 x cols row.
    ColSum(Expr),
    /// Row-wise softmax.
    Softmax(Expr),
    /// Mean over rows of `-Σ_j t_ij log softmax(z)_ij`.
    SoftmaxCrossEntropy(Expr, Expr),
    FrobSq(Expr),
    Sum(Expr),
    Reshape(Expr, Shape),
}

impl Op {
    pub(crate) fn operands(&self) -> OperandIter {
        use Op::*;
        match *self {
            Constant(_) | Variable(_) => OperandIter::new([None, None]),
            MatMul(a, b) | Add(a, b) | Mul(a, b) | ScalarMul(a, b) | SoftmaxCrossEntropy(a, b) => {
                OperandIter::new([Some(a), Some(b)])
            }
            Scale(a, _)
            | AddScalar(a, _)
            | Sigmoid(a)
            | Relu(a)
            | Step(a)
            | Exp(a)
            | Log(a)
            | Pow(a, _)
            | Transpose(a)
            | RowSum(a)
            | RowMean(a)
            | ColSum(a)
            | Softmax(a)
            | FrobSq(a)
            | Sum(a)
            | Reshape(a, _) => OperandIter::new([Some(a), None]),
        }
    }
}

pub(crate) struct OperandIter {
    items: [Option<Expr>; 2],
    pos: usize,
}

impl OperandIter {
    fn new(items: [Option<Expr>; 2]) -> Self {
        Self { items, pos: 0 }
    }
}

impl Iterator for OperandIter {
    type Item = Expr;

    fn next(&mut self) -> Option<Expr> {
        while self.pos < 2 {
            let item = self.items[self.pos];
            self.pos += 1;
            if item.is_some() {
                return item;
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) shape: Shape,
}

/// Concrete values for the free variables of an expression graph.
#[derive(Debug, Clone, Default)]
pub struct Binding {
    values: HashMap<Expr, Array2<f64>>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, var: Expr, value: Array2<f64>) -> &mut Self {
        self.values.insert(var, value);
        self
    }

    pub fn with(mut self, var: Expr, value: Array2<f64>) -> Self {
        self.values.insert(var, value);
        self
    }

    pub fn get(&self, var: Expr) -> Option<&Array2<f64>> {
        self.values.get(&var)
    }

    pub fn get_mut(&mut self, var: Expr) -> Option<&mut Array2<f64>> {
        self.values.get_mut(&var)
    }
}

/// An append-only arena of expression nodes.
///
/// Nodes only reference earlier nodes, so the graph is acyclic by
/// construction and node order is a valid topological order.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    pub(crate) unit: Option<Expr>,
}

fn same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(DiffError::ShapeMismatch { op, left: a, right: b })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, e: Expr) -> Shape {
        self.nodes[e.0].shape
    }

    pub(crate) fn push(&mut self, op: Op, shape: Shape) -> Expr {
        self.nodes.push(Node { op, shape });
        Expr(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Expr {
        let shape = value.dim();
        self.push(Op::Constant(Arc::new(value)), shape)
    }

    /// Shares an already reference-counted constant without copying it.
    pub fn constant_shared(&mut self, value: Arc<Array2<f64>>) -> Expr {
        let shape = value.dim();
        self.push(Op::Constant(value), shape)
    }

    pub fn scalar(&mut self, v: f64) -> Expr {
        self.constant(Array2::from_elem((1, 1), v))
    }

    pub fn ones(&mut self, shape: Shape) -> Expr {
        self.constant(Array2::ones(shape))
    }

    pub fn zeros(&mut self, shape: Shape) -> Expr {
        self.constant(Array2::zeros(shape))
    }

    pub(crate) fn unit(&mut self) -> Expr {
        match self.unit {
            Some(u) => u,
            None => {
                let u = self.scalar(1.0);
                self.unit = Some(u);
                u
            }
        }
    }

    pub fn variable(&mut self, name: impl Into<String>, shape: Shape) -> Expr {
        self.push(Op::Variable(name.into()), shape)
    }

    pub fn is_variable(&self, e: Expr) -> bool {
        matches!(self.nodes[e.0].op, Op::Variable(_))
    }

    pub fn variable_name(&self, e: Expr) -> Option<&str> {
        match &self.nodes[e.0].op {
            Op::Variable(name) => Some(name),
            _ => None,
        }
    }

    /// Value of a constant node, if `e` is one.
    pub fn constant_value(&self, e: Expr) -> Option<&Array2<f64>> {
        match &self.nodes[e.0].op {
            Op::Constant(v) => Some(v),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Expr, b: Expr) -> Result<Expr> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        Ok(self.push(Op::MatMul(a, b), (sa.0, sb.1)))
    }

    pub fn add(&mut self, a: Expr, b: Expr) -> Result<Expr> {
        let s = self.shape(a);
        same_shape("add", s, self.shape(b))?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: Expr, b: Expr) -> Result<Expr> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Expr, b: Expr) -> Result<Expr> {
        let s = self.shape(a);
        same_shape("mul", s, self.shape(b))?;
        Ok(self.push(Op::Mul(a, b), s))
    }

    /// Elementwise `a / b`, built as `a ⊙ b^-1`.
    pub fn div(&mut self, a: Expr, b: Expr) -> Result<Expr> {
        let inv = self.pow(b, -1.0);
        self.mul(a, inv)
    }

    pub fn scale(&mut self, a: Expr, c: f64) -> Expr {
        let s = self.shape(a);
        self.push(Op::Scale(a, c), s)
    }

    pub fn add_scalar(&mut self, a: Expr, c: f64) -> Expr {
        let s = self.shape(a);
        self.push(Op::AddScalar(a, c), s)
    }

    pub fn scalar_mul(&mut self, s: Expr, a: Expr) -> Result<Expr> {
        if self.shape(s) != (1, 1) {
            return Err(DiffError::ShapeMismatch {
                op: "scalar_mul",
                left: self.shape(s),
                right: (1, 1),
            });
        }
        let shape = self.shape(a);
        Ok(self.push(Op::ScalarMul(s, a), shape))
    }

    pub fn sigmoid(&mut self, a: Expr) -> Expr {
        let s = self.shape(a);
        self.push(Op::Sigmoid(a), s)
    }

    pub fn relu(&mut self, a: Expr) -> Expr {
        let s = self.shape(a);
        self.push(Op::Relu(a), s)
    }

    pub fn step(&mut self, a: Expr) -> Expr {
        let s = self.shape(a);
        self.push(Op::Step(a), s)
    }

    pub fn exp(&mut self, a: Expr) -> Expr {
        let s = self.shape(a);
        self.push(Op::Exp(a), s)
    }

    pub fn log(&mut self, a: Expr) -> Expr {
        let s = self.shape(a);
        self.push(Op::Log(a), s)
    }

    /// Elementwise power. Negative powers of an exact zero evaluate to 0,
    /// which makes `sqrt` have a zero subgradient at the origin.
    pub fn pow(&mut self, a: Expr, p: f64) -> Expr {
        let s = self.shape(a);
        self.push(Op::Pow(a, p), s)
    }

    pub fn sqrt(&mut self, a: Expr) -> Expr {
        self.pow(a, 0.5)
    }

    pub fn transpose(&mut self, a: Expr) -> Expr {
        let (r, c) = self.shape(a);
        self.push(Op::Transpose(a), (c, r))
    }

    pub fn row_sum(&mut self, a: Expr) -> Expr {
        let (r, _) = self.shape(a);
        self.push(Op::RowSum(a), (r, 1))
    }

    pub fn row_mean(&mut self, a: Expr) -> Expr {
        let (r, _) = self.shape(a);
        self.push(Op::RowMean(a), (r, 1))
    }

    /// `1ᵀ a`, the column-ones premultiply.
    pub fn col_sum(&mut self, a: Expr) -> Expr {
        let (_, c) = self.shape(a);
        self.push(Op::ColSum(a), (1, c))
    }

    pub fn col_mean(&mut self, a: Expr) -> Expr {
        let (r, _) = self.shape(a);
        let s = self.col_sum(a);
        self.scale(s, 1.0 / r as f64)
    }

    pub fn softmax(&mut self, a: Expr) -> Expr {
        let s = self.shape(a);
        self.push(Op::Softmax(a), s)
    }

    /// Mean softmax cross-entropy over the rows of `logits` against target
    /// distributions (usually one-hot rows).
    pub fn softmax_cross_entropy(&mut self, logits: Expr, targets: Expr) -> Result<Expr> {
        same_shape("softmax_cross_entropy", self.shape(logits), self.shape(targets))?;
        Ok(self.push(Op::SoftmaxCrossEntropy(logits, targets), (1, 1)))
    }

    pub fn frob_sq(&mut self, a: Expr) -> Expr {
        self.push(Op::FrobSq(a), (1, 1))
    }

    pub fn sum(&mut self, a: Expr) -> Expr {
        self.push(Op::Sum(a), (1, 1))
    }

    pub fn reshape(&mut self, a: Expr, shape: Shape) -> Result<Expr> {
        let from = self.shape(a);
        if from.0 * from.1 != shape.0 * shape.1 {
            return Err(DiffError::BadReshape { from, to: shape });
        }
        Ok(self.push(Op::Reshape(a, shape), shape))
    }

    /// Sum of a non-empty list of equally shaped expressions.
    pub fn add_all(&mut self, items: &[Expr]) -> Result<Expr> {
        let (&first, rest) = items
            .split_first()
            .ok_or_else(|| DiffError::InvalidArgument("add_all of an empty list".into()))?;
        rest.iter().try_fold(first, |acc, &x| self.add(acc, x))
    }
}
