//! First-order update rules over lists of matrices.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            _ => Err(Error::InvalidArgument(format!("unknown optimizer `{s}`"))),
        }
    }
}

/// Stateful optimizer for a fixed list of parameter shapes.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, shapes: &[(usize, usize)]) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr, shapes)),
        }
    }

    pub fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
        match self {
            Optimizer::Sgd { lr } => sgd_step(*lr, params, grads),
            Optimizer::Adam(a) => a.step(params, grads),
        }
    }

    /// Update a single parameter slot, leaving the others untouched.
    pub fn step_one(&mut self, slot: usize, param: &mut Array2<f64>, grad: &Array2<f64>) {
        match self {
            Optimizer::Sgd { lr } => param.scaled_add(-*lr, grad),
            Optimizer::Adam(a) => a.step_one(slot, param, grad),
        }
    }
}

pub fn sgd_step(lr: f64, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
    for (p, g) in params.iter_mut().zip(grads) {
        p.scaled_add(-lr, g);
    }
}

/// Adam with bias correction, one step counter per slot.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: Vec<i32>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            t: vec![0; shapes.len()],
        }
    }

    pub fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.step_one(i, p, g);
        }
    }

    pub fn step_one(&mut self, slot: usize, param: &mut Array2<f64>, grad: &Array2<f64>) {
        self.t[slot] += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t[slot]);
        let c2 = 1.0 - b2.powi(self.t[slot]);
        let (lr, eps) = (self.lr, self.eps);
        Zip::from(param)
            .and(&mut self.m[slot])
            .and(&mut self.v[slot])
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
    }
}
