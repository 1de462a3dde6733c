//! Learnable synthetic graphs and the one-step gradient matching loop.

use std::ops::Range;

use diffmath::{all_finite, sigmoid, Binding, Expr, Tape};
use ndarray::{Array2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{average_node_count, Graph, GraphDataset, PreparedGraph};
use crate::model::{
    bind_params, forward, loss_and_grad, one_hot, param_vars, sample_params, Architecture, InitDistribution,
    ModelConfig, ModelParams, Pooling,
};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{stream, Purpose};

/// Edge logit magnitude used when copying a real structure into Ω.
pub const OMEGA_INIT: f64 = 5.0;

/// Scale of the Gaussian filler for feature rows beyond the real graph.
const FILL_SCALE: f64 = 1e-2;

/// Denominator guard of the column cosine distance.
const COS_EPS: f64 = 1e-6;

/// Condensed graphs stored as edge logits and features.
///
/// Slots are laid out class by class: slot `c * graphs_per_class + j` holds
/// the `j`-th graph of class `c`. Only the strict upper triangle of each
/// logit matrix is meaningful; the rest stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    omega: Vec<Array2<f64>>,
    features: Vec<Array2<f64>>,
    labels: Vec<usize>,
    graphs_per_class: usize,
    num_classes: usize,
    sources: Vec<usize>,
    pub tau: f64,
    /// Sparsity target: the mean initial σ(Ω) unless configured.
    pub epsilon: f64,
}

impl SyntheticSet {
    pub fn from_parts(
        omega: Vec<Array2<f64>>,
        features: Vec<Array2<f64>>,
        graphs_per_class: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let len = graphs_per_class * num_classes;
        if len == 0 || omega.len() != len || features.len() != len {
            return Err(Error::InvalidArgument(format!(
                "expected {len} slots, got {} logit and {} feature matrices",
                omega.len(),
                features.len()
            )));
        }
        let n = omega[0].nrows();
        let d = features[0].ncols();
        let mut omega = omega;
        for (o, x) in omega.iter_mut().zip(&features) {
            if o.dim() != (n, n) || x.dim() != (n, d) {
                return Err(Error::InvalidArgument(
                    "synthetic slots must share node count and feature dim".into(),
                ));
            }
            *o = &*o * &upper_mask(n);
        }
        let labels = (0..len).map(|i| i / graphs_per_class).collect();
        let mut set = Self {
            omega,
            features,
            labels,
            graphs_per_class,
            num_classes,
            sources: vec![usize::MAX; len],
            tau: 1.0,
            epsilon: 0.0,
        };
        set.epsilon = set.mean_sigma_omega();
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.omega[0].nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].ncols()
    }

    pub fn graphs_per_class(&self) -> usize {
        self.graphs_per_class
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn omega(&self) -> &[Array2<f64>] {
        &self.omega
    }

    pub fn features(&self) -> &[Array2<f64>] {
        &self.features
    }

    /// Real training graph each slot was initialized from.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn class_slots(&self, c: usize) -> Range<usize> {
        c * self.graphs_per_class..(c + 1) * self.graphs_per_class
    }

    /// Mirrored edge probabilities σ(Ω) with a zero diagonal.
    pub fn edge_probabilities(&self, slot: usize) -> Array2<f64> {
        let n = self.node_count();
        let mut p = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v = sigmoid(self.omega[slot][[i, j]]);
                p[[i, j]] = v;
                p[[j, i]] = v;
            }
        }
        p
    }

    pub fn mean_sigma_omega(&self) -> f64 {
        mean_sigma(&self.omega)
    }

    pub fn class_mean_sigma_omega(&self, c: usize) -> f64 {
        mean_sigma(&self.omega[self.class_slots(c)])
    }
}

/// Mean of σ(Ω_ij) over the strict upper triangles of all given matrices.
pub fn mean_sigma(omega: &[Array2<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for o in omega {
        let n = o.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                total += sigmoid(o[[i, j]]);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// 1 on the strict upper triangle, 0 elsewhere.
pub fn upper_mask(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| if i < j { 1.0 } else { 0.0 })
}

/// Initialize each slot from a random training graph of its class.
///
/// Slots draw without replacement when the class is large enough. Each class
/// uses its own random stream.
pub fn init_synthetic(
    ds: &GraphDataset,
    graphs_per_class: usize,
    node_count: usize,
    seed: u64,
) -> Result<SyntheticSet> {
    if graphs_per_class == 0 || node_count == 0 {
        return Err(Error::InvalidArgument(
            "graphs per class and node count must be positive".into(),
        ));
    }
    let d = ds.feature_dim();
    let n = node_count;
    let mut omega = Vec::new();
    let mut features = Vec::new();
    let mut sources = Vec::new();
    for c in 0..ds.num_classes() {
        let pool = ds.train_of_class(c);
        if pool.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        let mut rng = stream(seed, Purpose::Init, c as u64);
        let picks: Vec<usize> = if pool.len() >= graphs_per_class {
            sample_indices(&mut rng, pool.len(), graphs_per_class)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        } else {
            (0..graphs_per_class)
                .map(|_| pool[rng.random_range(0..pool.len())])
                .collect()
        };
        for &gi in &picks {
            let g = ds.graph(gi);
            let m = g.node_count().min(n);
            let mut x = Array2::zeros((n, d));
            for i in 0..n {
                for k in 0..d {
                    x[[i, k]] = if i < m {
                        g.features()[[i, k]]
                    } else {
                        FILL_SCALE * rng.sample::<f64, _>(StandardNormal)
                    };
                }
            }
            let mut o = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    let edge = i < m && j < m && g.adjacency()[[i, j]] > 0.0;
                    o[[i, j]] = if edge { OMEGA_INIT } else { -OMEGA_INIT };
                }
            }
            omega.push(o);
            features.push(x);
            sources.push(gi);
        }
    }
    let mut set = SyntheticSet::from_parts(omega, features, graphs_per_class, ds.num_classes())?;
    set.sources = sources;
    Ok(set)
}

/// Exponential decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSchedule {
    pub tau0: f64,
    pub tau_final: f64,
    pub rate: f64,
}

impl TauSchedule {
    /// Rate chosen so the floor is reached after half of `steps`.
    pub fn halfway(tau0: f64, tau_final: f64, steps: usize) -> Self {
        let half = steps as f64 / 2.0;
        let rate = if half > 0.0 && tau0 > tau_final {
            (tau0 / tau_final).ln() / half
        } else {
            0.0
        };
        Self { tau0, tau_final, rate }
    }
}

pub fn anneal_tau(schedule: &TauSchedule, k: usize) -> f64 {
    (schedule.tau0 * (-schedule.rate * k as f64).exp()).max(schedule.tau_final)
}

/// `log α − log(1 − α)` for uniform α on the strict upper triangle.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let a: f64 = loop {
                let a: f64 = rng.random();
                if a > 0.0 {
                    break a;
                }
            };
            out[[i, j]] = a.ln() - (1.0 - a).ln();
        }
    }
    out
}

/// Relaxed adjacency from uniform draws `alpha` (read on the upper triangle).
pub fn sample_relaxed_adjacency(omega: &Array2<f64>, tau: f64, alpha: &Array2<f64>) -> Result<Array2<f64>> {
    let n = omega.nrows();
    if alpha.dim() != (n, n) {
        return Err(Error::InvalidArgument("alpha must match the logit shape".into()));
    }
    let mut noise = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let a = alpha[[i, j]];
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidArgument(format!("uniform draw {a} outside (0, 1)")));
            }
            noise[[i, j]] = a.ln() - (1.0 - a).ln();
        }
    }
    relaxed_from_noise(omega, &noise, tau)
}

/// Relaxed adjacency from pre-transformed logistic noise.
pub fn relaxed_from_noise(omega: &Array2<f64>, noise: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    let n = omega.nrows();
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sigmoid((noise[[i, j]] + omega[[i, j]]) / tau);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    Ok(a)
}

/// Differentiable relaxed adjacency `U + Uᵀ` with
/// `U = mask ⊙ σ((noise + Ω) / τ)`.
pub fn relaxed_adjacency_expr(tape: &mut Tape, omega: Expr, noise: &Array2<f64>, tau: f64) -> Result<Expr> {
    let n = tape.shape(omega).0;
    let noise = tape.constant(noise.clone());
    let z = tape.add(omega, noise)?;
    let z = tape.scale(z, 1.0 / tau);
    let s = tape.sigmoid(z);
    let mask = tape.constant(upper_mask(n));
    let u = tape.mul(s, mask)?;
    let ut = tape.transpose(u);
    Ok(tape.add(u, ut)?)
}

/// Differentiable `D̃^{-1/2}(A + I)D̃^{-1/2}`; degrees depend on `a`.
pub fn normalize_adjacency_expr(tape: &mut Tape, a: Expr) -> Result<Expr> {
    let n = tape.shape(a).0;
    let eye = tape.constant(Array2::eye(n));
    let b = tape.add(a, eye)?;
    let deg = tape.row_sum(b);
    let s = tape.pow(deg, -0.5);
    let st = tape.transpose(s);
    let outer = tape.matmul(s, st)?;
    Ok(tape.mul(b, outer)?)
}

/// Column-wise `Σ (1 − cos)` between symbolic gradients and constant targets.
pub fn match_distance(tape: &mut Tape, gs: &[Expr], gt: &[Array2<f64>]) -> Result<Expr> {
    if gs.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} synthetic and {} real gradient tensors",
            gs.len(),
            gt.len()
        )));
    }
    let mut terms = Vec::with_capacity(gs.len());
    for (&a, b) in gs.iter().zip(gt) {
        if tape.shape(a) != b.dim() {
            return Err(Error::InvalidArgument(format!(
                "gradient shapes {:?} and {:?} differ",
                tape.shape(a),
                b.dim()
            )));
        }
        let cols = b.ncols() as f64;
        let b_norm = b.map_axis(Axis(0), |c| c.dot(&c).sqrt()).insert_axis(Axis(0));
        let bc = tape.constant(b.clone());
        let ab = tape.mul(a, bc)?;
        let dot = tape.col_sum(ab);
        let aa = tape.mul(a, a)?;
        let a_sq = tape.col_sum(aa);
        let a_norm = tape.sqrt(a_sq);
        let bn = tape.constant(b_norm);
        let prod = tape.mul(a_norm, bn)?;
        let denom = tape.add_scalar(prod, COS_EPS);
        let cos = tape.div(dot, denom)?;
        let total = tape.sum(cos);
        let neg = tape.scale(total, -1.0);
        terms.push(tape.add_scalar(neg, cols));
    }
    Ok(tape.add_all(&terms)?)
}

/// Numeric counterpart of [`match_distance`].
pub fn match_distance_value(gs: &[Array2<f64>], gt: &[Array2<f64>]) -> Result<f64> {
    if gs.len() != gt.len() {
        return Err(Error::InvalidArgument("gradient lists differ in length".into()));
    }
    let mut d = 0.0;
    for (a, b) in gs.iter().zip(gt) {
        if a.dim() != b.dim() {
            return Err(Error::InvalidArgument("gradient shapes differ".into()));
        }
        for (ca, cb) in a.columns().into_iter().zip(b.columns()) {
            let cos = ca.dot(&cb) / (ca.dot(&ca).sqrt() * cb.dot(&cb).sqrt() + COS_EPS);
            d += 1.0 - cos;
        }
    }
    Ok(d)
}

/// `max(mean σ(Ω) − ε, 0)` over the strict upper triangles.
pub fn sparsity_reg(omega: &[Array2<f64>], epsilon: f64) -> f64 {
    (mean_sigma(omega) - epsilon).max(0.0)
}

pub fn sparsity_reg_expr(tape: &mut Tape, omega: &[Expr], epsilon: f64) -> Result<Expr> {
    let mut terms = Vec::with_capacity(omega.len());
    let mut count = 0usize;
    for &o in omega {
        let n = tape.shape(o).0;
        count += n * (n - 1) / 2;
        let s = tape.sigmoid(o);
        let mask = tape.constant(upper_mask(n));
        let m = tape.mul(s, mask)?;
        terms.push(tape.sum(m));
    }
    let total = tape.add_all(&terms)?;
    let mean = tape.scale(total, 1.0 / count.max(1) as f64);
    let gap = tape.add_scalar(mean, -epsilon);
    Ok(tape.relu(gap))
}

/// Constants of the norm regularizer and the second bound term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormScale {
    /// Training horizon T.
    pub horizon: usize,
    pub num_classes: usize,
    /// Total number of synthetic graphs N′.
    pub total_graphs: usize,
}

impl NormScale {
    /// `(C − 1) / (C N′)`.
    pub fn class_factor(&self) -> f64 {
        (self.num_classes as f64 - 1.0) / (self.num_classes as f64 * self.total_graphs as f64)
    }

    /// Prefactor `3 / (2√(2T)) · (C − 1)/(C N′)` of the regularizer.
    pub fn reg_coefficient(&self) -> f64 {
        3.0 / (2.0 * (2.0 * self.horizon as f64).sqrt()) * self.class_factor()
    }
}

/// `Σ_i γ_i ‖1ᵀ Â_i^K X_i‖²` for normalized adjacencies.
pub fn pooled_norm_sq(graphs: &[(Array2<f64>, Array2<f64>)], depth: usize, pooling: Pooling) -> f64 {
    graphs
        .iter()
        .map(|(a, x)| {
            let mut h = x.clone();
            for _ in 0..depth {
                h = a.dot(&h);
            }
            let s = h.sum_axis(Axis(0));
            pooling.gamma(a.nrows()) * s.dot(&s)
        })
        .sum()
}

pub fn pooled_norm_sq_expr(tape: &mut Tape, graphs: &[(Expr, Expr)], depth: usize, pooling: Pooling) -> Result<Expr> {
    let mut terms = Vec::with_capacity(graphs.len());
    for &(a, x) in graphs {
        let mut h = x;
        for _ in 0..depth {
            h = tape.matmul(a, h)?;
        }
        let s = tape.col_sum(h);
        let sq = tape.frob_sq(s);
        terms.push(tape.scale(sq, pooling.gamma(tape.shape(a).0)));
    }
    Ok(tape.add_all(&terms)?)
}

/// Norm regularizer on normalized relaxed adjacencies.
pub fn norm_reg(graphs: &[(Array2<f64>, Array2<f64>)], depth: usize, scale: &NormScale, pooling: Pooling) -> f64 {
    scale.reg_coefficient() * pooled_norm_sq(graphs, depth, pooling).sqrt()
}

/// Weights of the auxiliary terms added to the matching loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub beta: f64,
    pub epsilon: f64,
    /// Present only for sum pooling.
    pub norm: Option<NormScale>,
}

/// A per-class objective on its own tape, ready for evaluation and
/// differentiation with respect to the class's logits and features.
pub struct MatchingProblem {
    pub tape: Tape,
    pub binding: Binding,
    pub omega: Vec<Expr>,
    pub features: Vec<Expr>,
    pub match_loss: Expr,
    pub reg_loss: Expr,
    pub total: Expr,
}

pub struct MatchingValues {
    pub match_loss: f64,
    pub reg_loss: f64,
    pub omega_grad: Vec<Array2<f64>>,
    pub feature_grad: Vec<Array2<f64>>,
}

impl MatchingProblem {
    pub fn value(&self) -> Result<f64> {
        Ok(self.tape.scalar_value(self.total, &self.binding)?)
    }

    pub fn evaluate(&mut self) -> Result<MatchingValues> {
        let wrt: Vec<Expr> = self.omega.iter().chain(&self.features).copied().collect();
        let grads = self.tape.gradient(self.total, &wrt)?;
        let mut outputs = vec![self.match_loss, self.reg_loss];
        outputs.extend(&grads);
        let mut vals = self.tape.evaluate(&outputs, &self.binding)?.into_iter();
        let match_loss = vals.next().expect("match value")[[0, 0]];
        let reg_loss = vals.next().expect("reg value")[[0, 0]];
        let omega_grad: Vec<_> = vals.by_ref().take(self.omega.len()).collect();
        let feature_grad: Vec<_> = vals.collect();
        Ok(MatchingValues {
            match_loss,
            reg_loss,
            omega_grad,
            feature_grad,
        })
    }
}

/// Builds the one-step matching objective for one class.
///
/// `noise` holds one logistic-noise matrix per slot for each Monte Carlo
/// sample; the matching term is averaged over samples. `real_grad` is the
/// parameter gradient of the real batch at `theta0`, used as a constant.
#[allow(clippy::too_many_arguments)]
pub fn one_step_loss(
    model: &ModelConfig,
    theta0: &ModelParams,
    real_grad: &[Array2<f64>],
    class: usize,
    omega: &[Array2<f64>],
    features: &[Array2<f64>],
    noise: &[Vec<Array2<f64>>],
    tau: f64,
    reg: &Regularization,
) -> Result<MatchingProblem> {
    if omega.is_empty() || omega.len() != features.len() {
        return Err(Error::InvalidArgument(
            "class slice must be non-empty and aligned".into(),
        ));
    }
    if noise.is_empty() || noise.iter().any(|s| s.len() != omega.len()) {
        return Err(Error::InvalidArgument(
            "noise must hold one matrix per slot per sample".into(),
        ));
    }
    if class >= model.num_classes {
        return Err(Error::LabelOutOfRange {
            label: class,
            classes: model.num_classes,
        });
    }
    let mut tape = Tape::new();
    let params = param_vars(&mut tape, model);
    let omega_vars: Vec<Expr> = omega
        .iter()
        .enumerate()
        .map(|(i, o)| tape.variable(format!("omega{i}"), o.dim()))
        .collect();
    let feature_vars: Vec<Expr> = features
        .iter()
        .enumerate()
        .map(|(i, x)| tape.variable(format!("x{i}"), x.dim()))
        .collect();
    let y = tape.constant(one_hot(class, model.num_classes));

    let mut matches = Vec::with_capacity(noise.len());
    let mut norms = Vec::new();
    for sample in noise {
        let mut losses = Vec::with_capacity(omega.len());
        let mut normalized = Vec::with_capacity(omega.len());
        for ((&o, &x), eps) in omega_vars.iter().zip(&feature_vars).zip(sample) {
            let a = relaxed_adjacency_expr(&mut tape, o, eps, tau)?;
            let a_norm = normalize_adjacency_expr(&mut tape, a)?;
            let logits = forward(&mut tape, model, &params, a_norm, x)?;
            losses.push(tape.softmax_cross_entropy(logits, y)?);
            normalized.push((a_norm, x));
        }
        let total = tape.add_all(&losses)?;
        let loss = tape.scale(total, 1.0 / losses.len() as f64);
        let gs = tape.gradient(loss, &params)?;
        matches.push(match_distance(&mut tape, &gs, real_grad)?);
        if let Some(scale) = reg.norm {
            let sq = pooled_norm_sq_expr(&mut tape, &normalized, model.depth, model.pooling)?;
            let root = tape.sqrt(sq);
            norms.push(tape.scale(root, scale.reg_coefficient()));
        }
    }
    let inv = 1.0 / noise.len() as f64;
    let match_sum = tape.add_all(&matches)?;
    let match_loss = tape.scale(match_sum, inv);
    let sparsity = sparsity_reg_expr(&mut tape, &omega_vars, reg.epsilon)?;
    let mut reg_loss = tape.scale(sparsity, reg.beta);
    if !norms.is_empty() {
        let norm_sum = tape.add_all(&norms)?;
        let norm = tape.scale(norm_sum, inv);
        reg_loss = tape.add(reg_loss, norm)?;
    }
    let total = tape.add(match_loss, reg_loss)?;

    let mut binding = Binding::new();
    bind_params(&mut binding, &params, theta0);
    for (v, o) in omega_vars.iter().zip(omega) {
        binding.bind(*v, o.clone());
    }
    for (v, x) in feature_vars.iter().zip(features) {
        binding.bind(*v, x.clone());
    }
    Ok(MatchingProblem {
        tape,
        binding,
        omega: omega_vars,
        features: feature_vars,
        match_loss,
        reg_loss,
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscretizeMode {
    Threshold,
    Sample,
}

impl std::str::FromStr for DiscretizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Self::Threshold),
            "sample" => Ok(Self::Sample),
            _ => Err(Error::InvalidArgument(format!("unknown discretization `{s}`"))),
        }
    }
}

/// Binary adjacency per slot: `Ω_ij > 0` under threshold, a Bernoulli(σ(Ω_ij))
/// draw under sample.
pub fn discretize(set: &SyntheticSet, mode: DiscretizeMode, seed: u64) -> Vec<Array2<f64>> {
    let n = set.node_count();
    set.omega
        .iter()
        .enumerate()
        .map(|(slot, o)| {
            let mut rng = stream(seed, Purpose::Discretize, slot as u64);
            let mut a = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    let edge = match mode {
                        DiscretizeMode::Threshold => o[[i, j]] > 0.0,
                        DiscretizeMode::Sample => rng.random::<f64>() < sigmoid(o[[i, j]]),
                    };
                    if edge {
                        a[[i, j]] = 1.0;
                        a[[j, i]] = 1.0;
                    }
                }
            }
            a
        })
        .collect()
}

/// Discretized synthetic graphs with their learned features.
pub fn discrete_graphs(set: &SyntheticSet, mode: DiscretizeMode, seed: u64) -> Result<Vec<Graph>> {
    discretize(set, mode, seed)
        .into_iter()
        .zip(&set.features)
        .zip(&set.labels)
        .map(|((a, x), &y)| Graph::new(a, x.clone(), y))
        .collect()
}

/// Every knob of the condensation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondenseConfig {
    pub graphs_per_class: usize,
    /// Number of sampled initializations.
    pub k1: usize,
    /// Relaxed structure samples per initialization.
    pub k2: usize,
    pub lr_omega: f64,
    pub lr_features: f64,
    pub beta: f64,
    /// Sparsity target; defaults to the initial mean σ(Ω).
    pub epsilon: Option<f64>,
    pub tau0: f64,
    pub tau_final: f64,
    /// Decay rate; defaults to reaching `tau_final` halfway through.
    pub tau_rate: Option<f64>,
    /// Real graphs per class per step, capped at the class size.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Horizon T in the norm regularizer.
    pub horizon: usize,
    pub architecture: Architecture,
    pub depth: usize,
    pub hidden_dim: usize,
    pub pooling: Pooling,
    /// Synthetic graph size; defaults to the rounded training mean.
    pub node_count: Option<usize>,
    pub init_scale: f64,
    /// Keep Ω at its initialization and learn features only.
    pub freeze_structure: bool,
    pub seed: u64,
}

impl Default for CondenseConfig {
    fn default() -> Self {
        Self {
            graphs_per_class: 1,
            k1: 1000,
            k2: 1,
            lr_omega: 1.0,
            lr_features: 0.01,
            beta: 0.1,
            epsilon: None,
            tau0: 1.0,
            tau_final: 0.1,
            tau_rate: None,
            batch_size: 256,
            optimizer: OptimizerKind::Sgd,
            horizon: 500,
            architecture: Architecture::Gcn,
            depth: 3,
            hidden_dim: 128,
            pooling: Pooling::Mean,
            node_count: None,
            init_scale: 1.0,
            freeze_structure: false,
            seed: 0,
        }
    }
}

impl CondenseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.graphs_per_class == 0 {
            return bad("graphs_per_class must be at least 1");
        }
        if self.k2 == 0 {
            return bad("k2 must be at least 1");
        }
        if !(self.lr_omega > 0.0 && self.lr_features > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if let Some(e) = self.epsilon {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon must lie in [0, 1]");
            }
        }
        if !(self.tau0 > 0.0 && self.tau_final > 0.0) {
            return bad("temperatures must be positive");
        }
        if let Some(r) = self.tau_rate {
            if !(r >= 0.0) {
                return bad("tau_rate must be non-negative");
            }
        }
        if self.batch_size == 0 || self.horizon == 0 || self.depth == 0 || self.hidden_dim == 0 {
            return bad("batch_size, horizon, depth and hidden_dim must be positive");
        }
        if self.node_count == Some(0) {
            return bad("node_count must be positive");
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }

    pub fn model_config(&self, feature_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            architecture: self.architecture,
            depth: self.depth,
            hidden_dim: self.hidden_dim,
            num_classes,
            pooling: self.pooling,
            feature_dim,
        }
    }

    pub fn init_distribution(&self) -> InitDistribution {
        InitDistribution {
            scale: self.init_scale,
            ..InitDistribution::default()
        }
    }

    pub fn tau_schedule(&self, steps: usize) -> TauSchedule {
        let mut s = TauSchedule::halfway(self.tau0, self.tau_final, steps);
        if let Some(r) = self.tau_rate {
            s.rate = r;
        }
        s
    }
}

/// One row of the condensation log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub class: usize,
    pub match_loss: f64,
    pub reg_loss: f64,
    pub tau: f64,
    pub mean_sigma_omega: f64,
}

#[derive(Debug, Clone)]
pub struct CondenseRun {
    pub set: SyntheticSet,
    pub log: Vec<StepRecord>,
    /// Number of synthetic-set updates performed.
    pub updates: usize,
}

struct ClassWorker {
    class: usize,
    pool: Vec<usize>,
    rng: ChaCha8Rng,
    omega_opt: Optimizer,
    feature_opt: Optimizer,
}

struct Engine {
    cfg: CondenseConfig,
    model: ModelConfig,
    prepared: Vec<PreparedGraph>,
    workers: Vec<ClassWorker>,
    reg: Regularization,
}

impl Engine {
    fn new(ds: &GraphDataset, cfg: &CondenseConfig, set: &SyntheticSet) -> Self {
        let model = cfg.model_config(ds.feature_dim(), ds.num_classes());
        let n = set.node_count();
        let d = set.feature_dim();
        let gpc = set.graphs_per_class();
        let workers = (0..ds.num_classes())
            .map(|c| ClassWorker {
                class: c,
                pool: ds.train_of_class(c),
                rng: stream(cfg.seed, Purpose::Batch, c as u64),
                omega_opt: Optimizer::new(cfg.optimizer, cfg.lr_omega, &vec![(n, n); gpc]),
                feature_opt: Optimizer::new(cfg.optimizer, cfg.lr_features, &vec![(n, d); gpc]),
            })
            .collect();
        let norm = (cfg.pooling == Pooling::Sum).then_some(NormScale {
            horizon: cfg.horizon,
            num_classes: ds.num_classes(),
            total_graphs: set.len(),
        });
        Self {
            cfg: cfg.clone(),
            model,
            prepared: ds.graphs().iter().map(Graph::prepare).collect(),
            workers,
            reg: Regularization {
                beta: cfg.beta,
                epsilon: set.epsilon,
                norm,
            },
        }
    }

    fn noise(&self, set: &SyntheticSet, step: usize) -> Vec<Vec<Array2<f64>>> {
        let mut rng = stream(self.cfg.seed, Purpose::Noise, step as u64);
        let n = set.node_count();
        (0..self.cfg.k2)
            .map(|_| (0..set.len()).map(|_| sample_noise(&mut rng, n)).collect())
            .collect()
    }

    /// One synthetic-set update at parameters `theta`, classes in parallel.
    fn update(
        &mut self,
        set: &mut SyntheticSet,
        theta: &ModelParams,
        noise: &[Vec<Array2<f64>>],
        tau: f64,
        step: usize,
    ) -> Result<Vec<StepRecord>> {
        let gpc = set.graphs_per_class;
        let (cfg, model, prepared, reg) = (&self.cfg, &self.model, &self.prepared, self.reg);
        let records = set
            .omega
            .par_chunks_mut(gpc)
            .zip(set.features.par_chunks_mut(gpc))
            .zip(self.workers.par_iter_mut())
            .map(|((omega, features), w)| {
                let c = w.class;
                let take = cfg.batch_size.min(w.pool.len());
                let batch: Vec<&PreparedGraph> = sample_indices(&mut w.rng, w.pool.len(), take)
                    .into_iter()
                    .map(|i| &prepared[w.pool[i]])
                    .collect();
                let (_, real_grad) = loss_and_grad(model, theta, &batch)?;
                let class_noise: Vec<Vec<Array2<f64>>> =
                    noise.iter().map(|s| s[c * gpc..(c + 1) * gpc].to_vec()).collect();
                let mut problem = one_step_loss(model, theta, &real_grad, c, omega, features, &class_noise, tau, &reg)?;
                let v = problem.evaluate()?;
                let finite = v.match_loss.is_finite()
                    && v.reg_loss.is_finite()
                    && v.omega_grad.iter().chain(&v.feature_grad).all(all_finite);
                if !finite {
                    return Err(Error::NonFinite {
                        step,
                        detail: format!("class {c}: match {} reg {}", v.match_loss, v.reg_loss),
                    });
                }
                if !cfg.freeze_structure {
                    for (i, (o, g)) in omega.iter_mut().zip(&v.omega_grad).enumerate() {
                        w.omega_opt.step_one(i, o, g);
                    }
                }
                for (i, (x, g)) in features.iter_mut().zip(&v.feature_grad).enumerate() {
                    w.feature_opt.step_one(i, x, g);
                }
                Ok(StepRecord {
                    step,
                    class: c,
                    match_loss: v.match_loss,
                    reg_loss: v.reg_loss,
                    tau,
                    mean_sigma_omega: mean_sigma(omega),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        set.tau = tau;
        Ok(records)
    }
}

fn initial_set(ds: &GraphDataset, cfg: &CondenseConfig) -> Result<SyntheticSet> {
    cfg.validate()?;
    let n = match cfg.node_count {
        Some(n) => n,
        None => average_node_count(ds)?,
    };
    let mut set = init_synthetic(ds, cfg.graphs_per_class, n, cfg.seed)?;
    if let Some(e) = cfg.epsilon {
        set.epsilon = e;
    }
    set.tau = cfg.tau0;
    Ok(set)
}

/// Parameters and noise one step matches against, fixed by seed and step.
#[derive(Debug, Clone)]
pub struct StepInputs {
    pub theta: ModelParams,
    /// Logistic noise per Monte Carlo sample per slot.
    pub noise: Vec<Vec<Array2<f64>>>,
    pub tau: f64,
}

/// Step-by-step driver of the one-step matching loop.
pub struct Condenser {
    engine: Engine,
    set: SyntheticSet,
    schedule: TauSchedule,
    dist: InitDistribution,
    step: usize,
    log: Vec<StepRecord>,
}

impl Condenser {
    pub fn new(ds: &GraphDataset, cfg: &CondenseConfig) -> Result<Self> {
        let set = initial_set(ds, cfg)?;
        let engine = Engine::new(ds, cfg, &set);
        Ok(Self {
            engine,
            set,
            schedule: cfg.tau_schedule(cfg.k1),
            dist: cfg.init_distribution(),
            step: 0,
            log: Vec::new(),
        })
    }

    pub fn set(&self) -> &SyntheticSet {
        &self.set
    }

    pub fn model(&self) -> &ModelConfig {
        &self.engine.model
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn inputs(&self, k: usize) -> StepInputs {
        let cfg = &self.engine.cfg;
        StepInputs {
            theta: sample_params(
                &self.engine.model,
                &self.dist,
                &mut stream(cfg.seed, Purpose::Theta, k as u64),
            ),
            noise: self.engine.noise(&self.set, k),
            tau: anneal_tau(&self.schedule, k),
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let k = self.step;
        let inputs = self.inputs(k);
        let records = self
            .engine
            .update(&mut self.set, &inputs.theta, &inputs.noise, inputs.tau, k)?;
        self.log.extend(records);
        self.step += 1;
        Ok(())
    }

    pub fn finish(self) -> CondenseRun {
        CondenseRun {
            set: self.set,
            log: self.log,
            updates: self.step,
        }
    }
}

/// One-step gradient matching: each of `k1` steps samples fresh model
/// parameters and structure noise, then updates every class once.
pub fn condense(ds: &GraphDataset, cfg: &CondenseConfig) -> Result<CondenseRun> {
    let mut c = Condenser::new(ds, cfg)?;
    for _ in 0..cfg.k1 {
        c.step()?;
    }
    Ok(c.finish())
}

/// Settings of the nested matching variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilevelConfig {
    /// Model training steps on the synthetic set between matches.
    pub inner_steps: usize,
    /// Matching steps along each sampled trajectory.
    pub outer_steps: usize,
    /// Learning rate of the inner model updates.
    pub lr_model: f64,
}

impl Default for BilevelConfig {
    fn default() -> Self {
        Self {
            inner_steps: 5,
            outer_steps: 10,
            lr_model: 0.01,
        }
    }
}

/// Nested matching along training trajectories: for each of `k1` sampled
/// initializations, alternate `outer_steps` synthetic updates with
/// `inner_steps` model updates on the current relaxed synthetic graphs.
pub fn condense_bilevel(ds: &GraphDataset, cfg: &CondenseConfig, bilevel: &BilevelConfig) -> Result<CondenseRun> {
    if bilevel.inner_steps == 0 || bilevel.outer_steps == 0 {
        return Err(Error::InvalidArgument(
            "inner and outer steps must be at least 1".into(),
        ));
    }
    if !(bilevel.lr_model > 0.0) {
        return Err(Error::InvalidArgument("model learning rate must be positive".into()));
    }
    let mut set = initial_set(ds, cfg)?;
    let mut engine = Engine::new(ds, cfg, &set);
    let total = cfg.k1 * bilevel.outer_steps;
    let schedule = cfg.tau_schedule(total);
    let dist = cfg.init_distribution();
    let mut log = Vec::with_capacity(total * ds.num_classes());
    for k in 0..cfg.k1 {
        let mut theta = sample_params(&engine.model, &dist, &mut stream(cfg.seed, Purpose::Theta, k as u64));
        for t in 0..bilevel.outer_steps {
            let step = k * bilevel.outer_steps + t;
            let noise = engine.noise(&set, step);
            let tau = anneal_tau(&schedule, step);
            log.extend(engine.update(&mut set, &theta, &noise, tau, step)?);
            if t + 1 == bilevel.outer_steps {
                break;
            }
            let graphs = relaxed_graphs(&set, &noise[0], tau)?;
            let refs: Vec<&PreparedGraph> = graphs.iter().collect();
            for _ in 0..bilevel.inner_steps {
                let (loss, grads) = loss_and_grad(&engine.model, &theta, &refs)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        step,
                        detail: "inner model loss".into(),
                    });
                }
                crate::optim::sgd_step(bilevel.lr_model, &mut theta.layers, &grads);
            }
        }
    }
    Ok(CondenseRun {
        set,
        log,
        updates: total,
    })
}

/// Synthetic graphs under one relaxed structure sample, normalized.
pub fn relaxed_graphs(set: &SyntheticSet, noise: &[Array2<f64>], tau: f64) -> Result<Vec<PreparedGraph>> {
    set.omega
        .iter()
        .zip(&set.features)
        .zip(noise)
        .zip(&set.labels)
        .map(|(((o, x), e), &y)| {
            let a = relaxed_from_noise(o, e, tau)?;
            Ok(Graph::new(a, x.clone(), y)?.prepare())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;
    use ndarray::array;

    fn path3_dataset() -> GraphDataset {
        let a = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let g = Graph::new(a, Array2::ones((3, 1)), 0).unwrap();
        GraphDataset::new("p", vec![g], 1).unwrap()
    }

    #[test]
    fn init_copies_structure_with_plus_minus_five() {
        let set = init_synthetic(&path3_dataset(), 1, 3, 0).unwrap();
        let o = &set.omega()[0];
        assert_eq!(o[[0, 1]], 5.0);
        assert_eq!(o[[1, 2]], 5.0);
        assert_eq!(o[[0, 2]], -5.0);
        assert_eq!(o[[1, 0]], 0.0);
        assert_eq!(set.features()[0], Array2::<f64>::ones((3, 1)));
    }

    #[test]
    fn default_epsilon_on_path_init() {
        let set = init_synthetic(&path3_dataset(), 1, 3, 0).unwrap();
        // σ(5) = 0.9933071490757153, σ(−5) = 0.0066928509242848554
        let expected = (2.0 * 0.9933071490757153 + 0.0066928509242848554) / 3.0;
        assert!((set.epsilon - expected).abs() < 1e-15);
        assert!((set.epsilon - 0.6645).abs() < 1e-4);
    }

    #[test]
    fn larger_synthetic_graph_pads_with_small_noise() {
        let set = init_synthetic(&path3_dataset(), 2, 5, 9).unwrap();
        let x = &set.features()[1];
        assert!(x.slice(ndarray::s![3.., ..]).iter().all(|v| v.abs() < 0.1 && *v != 0.0));
        assert!(set.omega()[0].slice(ndarray::s![.., 3..]).iter().all(|&v| v <= 0.0));
        assert_eq!(set.sources(), &[0, 0]);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let ds = crate::toy::toy_dataset(10, 1).unwrap();
        assert_eq!(
            init_synthetic(&ds, 3, 4, 5).unwrap(),
            init_synthetic(&ds, 3, 4, 5).unwrap()
        );
    }

    #[test]
    fn empty_class_is_rejected() {
        let ds = crate::toy::toy_dataset(10, 1).unwrap();
        let train: Vec<usize> = ds.class_index()[0].clone();
        let rest: Vec<usize> = ds.class_index()[1].clone();
        let ds = ds
            .with_split(Split {
                train,
                val: vec![],
                test: rest,
            })
            .unwrap();
        assert!(matches!(init_synthetic(&ds, 1, 3, 0), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn relaxed_adjacency_examples() {
        let half = Array2::from_elem((2, 2), 0.5);
        let a = sample_relaxed_adjacency(&array![[0.0, 0.0], [0.0, 0.0]], 0.7, &half).unwrap();
        assert_eq!(a, array![[0.0, 0.5], [0.5, 0.0]]);
        let a = sample_relaxed_adjacency(&array![[0.0, 3.0], [0.0, 0.0]], 0.01, &half).unwrap();
        // 1 − 1e-100 rounds to 1.0, so saturation shows up as exact equality.
        assert!(a[[0, 1]] >= 1.0 - 1e-100);
        let zero = array![[0.0, 0.0], [0.0, 0.0]];
        assert!(sample_relaxed_adjacency(&zero, 1.0, &array![[0.5, 0.0], [0.5, 0.5]]).is_err());
        assert!(sample_relaxed_adjacency(&zero, 1.0, &array![[0.5, 1.0], [0.5, 0.5]]).is_err());
        assert!(sample_relaxed_adjacency(&zero, 0.0, &half).is_err());
    }

    #[test]
    fn relaxed_expression_matches_numeric() {
        let omega = array![[0.0, 1.5, -2.0], [0.0, 0.0, 0.3], [0.0, 0.0, 0.0]];
        let noise = sample_noise(&mut stream(0, Purpose::Noise, 0), 3);
        let mut tape = Tape::new();
        let o = tape.variable("o", (3, 3));
        let a = relaxed_adjacency_expr(&mut tape, o, &noise, 0.4).unwrap();
        let an = normalize_adjacency_expr(&mut tape, a).unwrap();
        let b = Binding::new().with(o, omega.clone());
        let got = tape.value(a, &b).unwrap();
        let want = relaxed_from_noise(&omega, &noise, 0.4).unwrap();
        assert!((&got - &want).iter().all(|v| v.abs() < 1e-15));
        for i in 0..3 {
            assert_eq!(got[[i, i]], 0.0);
        }
        assert_eq!(got, got.t());
        let gotn = tape.value(an, &b).unwrap();
        let wantn = crate::graph::normalize_adjacency(&want);
        assert!((gotn - wantn).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn anneal_examples() {
        let s = TauSchedule::halfway(1.0, 0.1, 1000);
        assert!((s.rate - 0.004605170185988091).abs() < 1e-15);
        assert_eq!(anneal_tau(&s, 0), 1.0);
        assert_eq!(anneal_tau(&s, 500), 0.1);
        assert_eq!(anneal_tau(&s, 999), 0.1);
        assert!(anneal_tau(&s, 250) > 0.1);
    }

    #[test]
    fn match_distance_examples() {
        let g = vec![array![[1.0, 2.0], [3.0, -1.0]], array![[0.5], [0.25]]];
        let mut tape = Tape::new();
        let same: Vec<Expr> = g.iter().map(|m| tape.constant(m.clone())).collect();
        let d = match_distance(&mut tape, &same, &g).unwrap();
        let slack: f64 = g
            .iter()
            .flat_map(|m| m.columns().into_iter().map(|c| 1e-6 / c.dot(&c)).collect::<Vec<_>>())
            .sum();
        let v = tape.scalar_value(d, &Binding::new()).unwrap();
        assert!(v >= 0.0 && v <= slack, "{v} {slack}");

        let neg: Vec<Expr> = g.iter().map(|m| tape.constant(-m)).collect();
        let d = match_distance(&mut tape, &neg, &g).unwrap();
        assert!((tape.scalar_value(d, &Binding::new()).unwrap() - 6.0).abs() < 1e-5);

        let orth_t = vec![array![[1.0], [0.0]]];
        let orth_s = [tape.constant(array![[0.0], [2.0]])];
        let d = match_distance(&mut tape, &orth_s, &orth_t).unwrap();
        assert_eq!(tape.scalar_value(d, &Binding::new()).unwrap(), 1.0);
        assert_eq!(match_distance_value(&[array![[0.0], [2.0]]], &orth_t).unwrap(), 1.0);

        let bad = [tape.constant(array![[1.0]])];
        assert!(match_distance(&mut tape, &bad, &orth_t).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let zeros = vec![Array2::zeros((3, 3))];
        assert!((sparsity_reg(&zeros, 0.3) - 0.2).abs() < 1e-15);
        let neg = vec![&upper_mask(3) * -5.0];
        assert_eq!(sparsity_reg(&neg, 0.3), 0.0);
        let eps = mean_sigma(&neg);
        assert_eq!(sparsity_reg(&neg, eps), 0.0);

        let mut tape = Tape::new();
        let o = tape.variable("o", (3, 3));
        let r = sparsity_reg_expr(&mut tape, &[o], 0.3).unwrap();
        let v = tape.scalar_value(r, &Binding::new().with(o, zeros[0].clone())).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
    }

    #[test]
    fn norm_reg_examples() {
        let scale = NormScale {
            horizon: 2,
            num_classes: 2,
            total_graphs: 1,
        };
        let one = vec![(array![[1.0]], array![[2.0]])];
        assert!((norm_reg(&one, 1, &scale, Pooling::Sum) - 0.75).abs() < 1e-15);
        let zero = vec![(array![[1.0]], array![[0.0]])];
        assert_eq!(norm_reg(&zero, 1, &scale, Pooling::Sum), 0.0);

        let g = (
            crate::graph::normalize_adjacency(&array![[0.0, 1.0], [1.0, 0.0]]),
            array![[1.0, -2.0], [0.5, 3.0]],
        );
        let single = norm_reg(std::slice::from_ref(&g), 2, &scale, Pooling::Sum);
        let doubled = norm_reg(
            &[g.clone(), g],
            2,
            &NormScale {
                total_graphs: 2,
                ..scale
            },
            Pooling::Sum,
        );
        assert!((doubled - single / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn discretize_examples() {
        let mut o = upper_mask(3) * 5.0;
        let x = vec![Array2::zeros((3, 1))];
        let set = SyntheticSet::from_parts(vec![o.clone()], x.clone(), 1, 1).unwrap();
        let a = &discretize(&set, DiscretizeMode::Threshold, 0)[0];
        assert_eq!(a, &(Array2::<f64>::ones((3, 3)) - Array2::<f64>::eye(3)));

        o.fill(0.0);
        let set = SyntheticSet::from_parts(vec![o], x, 1, 1).unwrap();
        assert_eq!(discretize(&set, DiscretizeMode::Threshold, 0)[0].sum(), 0.0);

        let ds = crate::toy::toy_dataset(10, 2).unwrap();
        let set = init_synthetic(&ds, 2, 5, 1).unwrap();
        for (slot, a) in discretize(&set, DiscretizeMode::Threshold, 0).iter().enumerate() {
            let g = ds.graph(set.sources()[slot]);
            let m = g.node_count();
            assert_eq!(a.slice(ndarray::s![..m, ..m]), g.adjacency().view());
        }
    }

    #[test]
    fn zero_steps_return_initialization() {
        let ds = crate::toy::toy_dataset(10, 0).unwrap();
        let cfg = CondenseConfig {
            k1: 0,
            hidden_dim: 8,
            ..CondenseConfig::default()
        };
        let run = condense(&ds, &cfg).unwrap();
        let init = init_synthetic(&ds, 1, average_node_count(&ds).unwrap(), 0).unwrap();
        assert_eq!(run.set.omega(), init.omega());
        assert_eq!(run.set.features(), init.features());
        assert!(run.log.is_empty());
    }

    #[test]
    fn bilevel_rejects_zero_inner_steps() {
        let ds = crate::toy::toy_dataset(10, 0).unwrap();
        let b = BilevelConfig {
            inner_steps: 0,
            ..BilevelConfig::default()
        };
        assert!(condense_bilevel(&ds, &CondenseConfig::default(), &b).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<CondenseConfig>(r#"{"k1": 3, "bogus": 1}"#);
        assert!(err.is_err());
        let ok: CondenseConfig = serde_json::from_str(r#"{"k1": 3}"#).unwrap();
        assert_eq!(ok.k1, 3);
        assert_eq!(ok.lr_omega, 1.0);
    }
}
