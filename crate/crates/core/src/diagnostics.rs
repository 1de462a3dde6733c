//! Numerical checks of the gradient-gap bound and the quantities it is made of.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::condense::{
    condense, discrete_graphs, pooled_norm_sq, relaxed_graphs, CondenseConfig, Condenser, NormScale,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_sets, EvalConfig};
use crate::graph::{normalize_adjacency, Graph, GraphDataset, PreparedGraph};
use crate::model::{loss_and_grad, stacked_norm, Architecture, InitDistribution, ModelConfig, ModelParams, Pooling};
use crate::rng::{stream, Purpose};

/// Constants of the bound and of the optimum oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundCheckConfig {
    /// Trajectory length T.
    pub horizon: usize,
    /// Lower bound on the parameter-norm bound M.
    pub norm_bound: f64,
    /// Gradient-descent steps allowed to the optimum oracle.
    pub oracle_steps: usize,
    pub oracle_lr: f64,
    /// Gradient norm at which the oracle counts as converged.
    pub oracle_tol: f64,
    /// Propagation steps K.
    pub depth: usize,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        Self {
            horizon: 500,
            norm_bound: 1.0,
            oracle_steps: 100_000,
            oracle_lr: 0.01,
            oracle_tol: 1e-8,
            depth: 2,
        }
    }
}

impl BoundCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.depth == 0 {
            return Err(Error::InvalidArgument("horizon and depth must be at least 1".into()));
        }
        if !(self.norm_bound > 0.0) || !(self.oracle_lr > 0.0) || !(self.oracle_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "norm bound, oracle lr and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn class_factor(num_classes: usize, total: usize) -> f64 {
    NormScale {
        horizon: 1,
        num_classes,
        total_graphs: total,
    }
    .class_factor()
}

fn adj_feature_pairs(graphs: &[PreparedGraph]) -> Vec<(Array2<f64>, Array2<f64>)> {
    graphs
        .iter()
        .map(|g| ((*g.adj_norm).clone(), (*g.features).clone()))
        .collect()
}

/// `√(Σ_i γ_i ‖1ᵀ Â_i^K X_i‖²)` for a set of graphs.
pub fn input_norm(graphs: &[PreparedGraph], depth: usize, pooling: Pooling) -> f64 {
    pooled_norm_sq(&adj_feature_pairs(graphs), depth, pooling).sqrt()
}

/// The two terms of the bound without the common factor M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    /// `√2 ‖∇ℓ_T(θ0) − ∇ℓ_S(θ0)‖`.
    pub l1: f64,
    /// `3/(2√T) · (C − 1)/(C N′) · √(Σ γ_i ‖1ᵀ Â′^K X′‖²)`.
    pub l2: f64,
}

fn require_sgc(model: &ModelConfig) -> Result<()> {
    if model.architecture != Architecture::Sgc {
        return Err(Error::InvalidArgument(
            "bound terms are defined for the SGC model".into(),
        ));
    }
    Ok(())
}

/// Bound terms at `theta0` for the real graphs `real` and synthetic graphs
/// `synthetic`, both with normalized adjacency.
pub fn bound_terms(
    model: &ModelConfig,
    real: &[PreparedGraph],
    synthetic: &[PreparedGraph],
    theta0: &ModelParams,
    horizon: usize,
) -> Result<BoundTerms> {
    require_sgc(model)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let real_refs: Vec<&PreparedGraph> = real.iter().collect();
    let syn_refs: Vec<&PreparedGraph> = synthetic.iter().collect();
    let (_, gt) = loss_and_grad(model, theta0, &real_refs)?;
    let (_, gs) = loss_and_grad(model, theta0, &syn_refs)?;
    let diff: Vec<Array2<f64>> = gt.iter().zip(&gs).map(|(a, b)| a - b).collect();
    let l1 = 2f64.sqrt() * stacked_norm(&diff);
    let l2 = 3.0 / (2.0 * (horizon as f64).sqrt())
        * class_factor(model.num_classes, synthetic.len())
        * input_norm(synthetic, model.depth, model.pooling);
    Ok(BoundTerms { l1, l2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermRow {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
}

/// Runs `epochs` condensation steps with an SGC matching model and records
/// the bound terms before each step, at that step's sampled parameters and
/// relaxed structure.
pub fn term_trajectory(ds: &GraphDataset, cfg: &CondenseConfig, horizon: usize, epochs: usize) -> Result<Vec<TermRow>> {
    if cfg.architecture != Architecture::Sgc {
        return Err(Error::InvalidArgument(
            "term trajectories need architecture = sgc".into(),
        ));
    }
    let cfg = CondenseConfig {
        k1: cfg.k1.max(epochs),
        ..cfg.clone()
    };
    let real: Vec<PreparedGraph> = ds.split().train.iter().map(|&i| ds.graph(i).prepare()).collect();
    let mut condenser = Condenser::new(ds, &cfg)?;
    let model = *condenser.model();
    let mut rows = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let inputs = condenser.inputs(epoch);
        let synthetic = relaxed_graphs(condenser.set(), &inputs.noise[0], inputs.tau)?;
        let t = bound_terms(&model, &real, &synthetic, &inputs.theta, horizon)?;
        rows.push(TermRow {
            epoch,
            l1: t.l1,
            l2: t.l2,
        });
        condenser.step()?;
    }
    Ok(rows)
}

/// Graph-level inputs of the merged linear model `Pool(Â^K X) W`.
#[derive(Debug, Clone)]
pub struct BoundInstance {
    pub real: Vec<PreparedGraph>,
    pub synthetic: Vec<PreparedGraph>,
    pub num_classes: usize,
    pub pooling: Pooling,
    /// Starting weights W of shape d×C.
    pub theta0: Array2<f64>,
}

/// Pooled propagated features, one row per graph.
pub fn pooled_inputs(graphs: &[PreparedGraph], depth: usize, pooling: Pooling) -> Array2<f64> {
    let d = graphs.first().map_or(0, |g| g.features.ncols());
    let mut z = Array2::zeros((graphs.len(), d));
    for (i, g) in graphs.iter().enumerate() {
        let mut h = (*g.features).clone();
        for _ in 0..depth {
            h = g.adj_norm.dot(&h);
        }
        let mut s = h.sum_axis(Axis(0));
        if pooling == Pooling::Mean {
            s /= g.node_count() as f64;
        }
        z.row_mut(i).assign(&s);
    }
    z
}

/// Mean softmax cross-entropy of logits `z w` and its gradient in `w`.
pub fn softmax_regression(z: &Array2<f64>, labels: &[usize], w: &Array2<f64>) -> (f64, Array2<f64>) {
    let logits = z.dot(w);
    let m = z.nrows() as f64;
    let mut delta = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Array1<f64> = row.mapv(|v| (v - max).exp());
        let total = exps.sum();
        loss += total.ln() + max - row[labels[i]];
        let mut d = exps / total;
        d[labels[i]] -= 1.0;
        delta.row_mut(i).assign(&(d / m));
    }
    (loss / m, z.t().dot(&delta))
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The minimizer of the real loss over W by plain gradient descent from zero.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub weights: Array2<f64>,
    pub loss: f64,
    pub steps: usize,
}

pub fn optimum_oracle(
    z: &Array2<f64>,
    labels: &[usize],
    num_classes: usize,
    cfg: &BoundCheckConfig,
) -> Result<Optimum> {
    let mut w = Array2::zeros((z.ncols(), num_classes));
    for step in 0..=cfg.oracle_steps {
        let (loss, g) = softmax_regression(z, labels, &w);
        let gnorm = frob(&g);
        if !gnorm.is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: "optimum oracle".into(),
            });
        }
        if gnorm < cfg.oracle_tol {
            return Ok(Optimum {
                weights: w,
                loss,
                steps: step,
            });
        }
        w.scaled_add(-cfg.oracle_lr, &g);
    }
    Err(Error::NotConverged(format!(
        "optimum oracle gradient above {} after {} steps",
        cfg.oracle_tol, cfg.oracle_steps
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Gradient-gap sum of the right-hand side.
    pub gap_term: f64,
    /// Input-norm term of the right-hand side.
    pub norm_term: f64,
    pub norm_bound: f64,
    pub step_size: f64,
    pub optimum_loss: f64,
    pub oracle_steps: usize,
}

/// Rounds of raising M until it bounds every iterate it produces.
const NORM_ROUNDS: usize = 200;

struct Trajectory {
    real_losses: Vec<f64>,
    gaps: Vec<f64>,
    max_norm: f64,
}

fn trajectory(
    zt: &Array2<f64>,
    yt: &[usize],
    zs: &Array2<f64>,
    ys: &[usize],
    theta0: &Array2<f64>,
    eta: f64,
    horizon: usize,
) -> Trajectory {
    let mut w = theta0.clone();
    let mut out = Trajectory {
        real_losses: Vec::with_capacity(horizon),
        gaps: Vec::with_capacity(horizon),
        max_norm: 0.0,
    };
    for _ in 0..horizon {
        let (lt, gt) = softmax_regression(zt, yt, &w);
        let (_, gs) = softmax_regression(zs, ys, &w);
        out.real_losses.push(lt);
        out.gaps.push(frob(&(&gt - &gs)));
        out.max_norm = out.max_norm.max(frob(&w));
        w.scaled_add(-eta, &gs);
    }
    out
}

/// Trains W on the synthetic graphs by gradient descent for T steps with step
/// `η = M / (√T √(Σ γ_i ‖1ᵀ Â′^K X′‖²))` and compares the best real-loss gap
/// against the bound. M is raised until it covers the optimum and every
/// iterate, so the norm assumption holds by construction.
pub fn theorem1_check(instance: &BoundInstance, cfg: &BoundCheckConfig) -> Result<Theorem1Report> {
    cfg.validate()?;
    let c = instance.num_classes;
    if instance.real.is_empty() || instance.synthetic.is_empty() {
        return Err(Error::InvalidArgument(
            "bound instance needs real and synthetic graphs".into(),
        ));
    }
    let yt: Vec<usize> = instance.real.iter().map(|g| g.label).collect();
    let ys: Vec<usize> = instance.synthetic.iter().map(|g| g.label).collect();
    if let Some(&y) = yt.iter().chain(&ys).find(|&&y| y >= c) {
        return Err(Error::LabelOutOfRange { label: y, classes: c });
    }
    let zt = pooled_inputs(&instance.real, cfg.depth, instance.pooling);
    let zs = pooled_inputs(&instance.synthetic, cfg.depth, instance.pooling);
    if instance.theta0.dim() != (zt.ncols(), c) {
        return Err(Error::InvalidArgument("theta0 must be feature_dim x classes".into()));
    }
    let radicand = input_norm(&instance.synthetic, cfg.depth, instance.pooling);
    if !(radicand > 0.0) {
        return Err(Error::InvalidArgument(
            "synthetic inputs are zero; the step size is undefined".into(),
        ));
    }
    let opt = optimum_oracle(&zt, &yt, c, cfg)?;
    let t = cfg.horizon as f64;
    let star = frob(&opt.weights);
    let mut m = cfg.norm_bound.max(star).max(frob(&instance.theta0));
    for _ in 0..NORM_ROUNDS {
        let eta = m / (t.sqrt() * radicand);
        let traj = trajectory(&zt, &yt, &zs, &ys, &instance.theta0, eta, cfg.horizon);
        if traj.max_norm <= m {
            let lhs = traj.real_losses.iter().fold(f64::INFINITY, |a, &b| a.min(b)) - opt.loss;
            let gap_term = 2f64.sqrt() * m / t * traj.gaps.iter().sum::<f64>();
            let norm_term = 3.0 * m / (2.0 * t.sqrt()) * class_factor(c, instance.synthetic.len()) * radicand;
            let rhs = gap_term + norm_term;
            return Ok(Theorem1Report {
                lhs,
                rhs,
                holds: lhs <= rhs + 1e-9,
                gap_term,
                norm_term,
                norm_bound: m,
                step_size: eta,
                optimum_loss: opt.loss,
                oracle_steps: opt.steps,
            });
        }
        m = traj.max_norm;
    }
    Err(Error::NotConverged(format!(
        "norm bound did not settle within {NORM_ROUNDS} rounds"
    )))
}

fn random_graph<R: Rng>(rng: &mut R, n: usize, d: usize, label: usize) -> Result<PreparedGraph> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < 0.5 {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    Ok(Graph::new(a, x, label)?.prepare())
}

/// Random two-class instance: 24 real graphs with random labels (so the real
/// loss has a finite minimizer), one synthetic graph per class, 3 to 5 nodes,
/// 3 Gaussian features per node, Glorot starting weights.
pub fn random_bound_instance(seed: u64, pooling: Pooling) -> Result<BoundInstance> {
    const REAL: usize = 24;
    const DIM: usize = 3;
    let mut rng = stream(seed, Purpose::Diagnostic, 0);
    let mut real = Vec::with_capacity(REAL);
    for i in 0..REAL {
        let n = rng.random_range(3..=5);
        let label = if i < 2 { i } else { rng.random_range(0..2) };
        real.push(random_graph(&mut rng, n, DIM, label)?);
    }
    let mut synthetic = Vec::with_capacity(2);
    for label in 0..2 {
        let n = rng.random_range(3..=5);
        synthetic.push(random_graph(&mut rng, n, DIM, label)?);
    }
    let bound = InitDistribution::default().bound(DIM, 2);
    let theta0 = Array2::from_shape_fn((DIM, 2), |_| rng.random_range(-bound..=bound));
    Ok(BoundInstance {
        real,
        synthetic,
        num_classes: 2,
        pooling,
        theta0,
    })
}

/// One graph for node classification.
#[derive(Debug, Clone)]
pub struct NodeInstance {
    /// Adjacency without self-loops; normalized internally.
    pub adjacency: Array2<f64>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

fn propagated(inst: &NodeInstance, depth: usize) -> Array2<f64> {
    let a = normalize_adjacency(&inst.adjacency);
    let mut h = inst.features.clone();
    for _ in 0..depth {
        h = a.dot(&h);
    }
    h
}

/// Node-level analogue of the bound terms for `f = Â^K X W`: the scaled
/// gradient gap `√2 ‖∇ℓ_T(W) − ∇ℓ_S(W)‖` and
/// `3M/(2√T) · (C − 1)/(C N′) · ‖Â′^K X′‖` with N′ synthetic nodes.
pub fn theorem2_terms(
    real: &NodeInstance,
    synthetic: &NodeInstance,
    theta0: &Array2<f64>,
    cfg: &BoundCheckConfig,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let c = theta0.ncols();
    for inst in [real, synthetic] {
        if inst.labels.len() != inst.features.nrows() || inst.adjacency.dim() != (inst.labels.len(), inst.labels.len())
        {
            return Err(Error::InvalidArgument("node instance shapes disagree".into()));
        }
        if let Some(&y) = inst.labels.iter().find(|&&y| y >= c) {
            return Err(Error::LabelOutOfRange { label: y, classes: c });
        }
    }
    let ht = propagated(real, cfg.depth);
    let hs = propagated(synthetic, cfg.depth);
    let (_, gt) = softmax_regression(&ht, &real.labels, theta0);
    let (_, gs) = softmax_regression(&hs, &synthetic.labels, theta0);
    let gap = 2f64.sqrt() * frob(&(&gt - &gs));
    let n_syn = synthetic.labels.len();
    let second = 3.0 * cfg.norm_bound / (2.0 * (cfg.horizon as f64).sqrt()) * class_factor(c, n_syn) * frob(&hs);
    Ok((gap, second))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub accuracy: f64,
    /// Final mean edge probability σ(Ω).
    pub sparsity: f64,
}

/// Condenses once per β and scores the thresholded set with `eval_cfg`.
pub fn beta_sweep(
    ds: &GraphDataset,
    cfg: &CondenseConfig,
    eval_cfg: &EvalConfig,
    betas: &[f64],
) -> Result<Vec<SweepRow>> {
    betas
        .iter()
        .map(|&beta| {
            let cfg = CondenseConfig { beta, ..cfg.clone() };
            let run = condense(ds, &cfg)?;
            let graphs = discrete_graphs(&run.set, eval_cfg.discretization, cfg.seed)?;
            let single = EvalConfig {
                cseeds: 1,
                ..eval_cfg.clone()
            };
            let report = evaluate_sets(ds, "doscond", cfg.graphs_per_class, cfg.seed, &[(graphs, 0.0)], &single)?;
            Ok(SweepRow {
                beta,
                accuracy: report.mean,
                sparsity: run.set.mean_sigma_omega(),
            })
        })
        .collect()
}
