//! GCN and SGC graph classifiers expressed on a differentiation tape.
//!
//! Both models are bias-free and read out with a pooling step followed by a
//! linear classifier:
//!
//! * GCN: `H₀ = X`, `H_{l+1} = relu(Â H_l W_l)` for all but the last
//!   propagation layer, which stays linear; logits are `Pool(H_K) W_cls`.
//! * SGC: logits are `Pool(Â^K X W₁) W₂`.

use diffmath::{Binding, Expr, Tape};
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PreparedGraph;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gcn,
    Sgc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Sum,
}

impl Pooling {
    /// Readout scale γ for a graph with `n` nodes: 1 for sum, 1/n for mean.
    pub fn gamma(self, n: usize) -> f64 {
        match self {
            Pooling::Sum => 1.0,
            Pooling::Mean => 1.0 / n as f64,
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "sgc" => Ok(Self::Sgc),
            _ => Err(Error::InvalidArgument(format!("unknown architecture `{s}`"))),
        }
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            _ => Err(Error::InvalidArgument(format!("unknown pooling `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// GCN layers or SGC propagation steps.
    pub depth: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub pooling: Pooling,
    pub feature_dim: usize,
}

impl ModelConfig {
    pub fn gcn(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            architecture: Architecture::Gcn,
            depth: 3,
            hidden_dim: 128,
            num_classes,
            pooling: Pooling::Mean,
            feature_dim,
        }
    }

    pub fn sgc(feature_dim: usize, num_classes: usize, depth: usize, hidden_dim: usize) -> Self {
        Self {
            architecture: Architecture::Sgc,
            depth,
            hidden_dim,
            num_classes,
            pooling: Pooling::Mean,
            feature_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.hidden_dim == 0 || self.num_classes == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument(format!("invalid model config {self:?}")));
        }
        Ok(())
    }

    /// Shapes of the weight matrices, in parameter order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        match self.architecture {
            Architecture::Gcn => {
                let mut shapes = vec![(self.feature_dim, self.hidden_dim)];
                shapes.extend((1..self.depth).map(|_| (self.hidden_dim, self.hidden_dim)));
                shapes.push((self.hidden_dim, self.num_classes));
                shapes
            }
            Architecture::Sgc => vec![(self.feature_dim, self.hidden_dim), (self.hidden_dim, self.num_classes)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Array2<f64>>,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            layers: cfg.param_shapes().into_iter().map(Array2::zeros).collect(),
        }
    }

    /// Frobenius norm of all layers stacked together.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(diffmath::all_finite)
    }
}

/// Frobenius norm over a list of matrices treated as one vector.
pub fn stacked_norm(mats: &[Array2<f64>]) -> f64 {
    mats.iter()
        .map(|m| m.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    GlorotUniform,
}

/// Sampling law for model initializations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitDistribution {
    pub scheme: InitScheme,
    /// Multiplier on the per-layer Glorot bound.
    pub scale: f64,
}

impl Default for InitDistribution {
    fn default() -> Self {
        Self {
            scheme: InitScheme::GlorotUniform,
            scale: 1.0,
        }
    }
}

impl InitDistribution {
    pub fn bound(&self, fan_in: usize, fan_out: usize) -> f64 {
        self.scale * (6.0 / (fan_in + fan_out) as f64).sqrt()
    }
}

pub fn sample_params<R: Rng + ?Sized>(cfg: &ModelConfig, dist: &InitDistribution, rng: &mut R) -> ModelParams {
    let layers = cfg
        .param_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let b = dist.bound(fan_in, fan_out);
            Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-b..=b))
        })
        .collect();
    ModelParams { layers }
}

/// Glorot-uniform initialization, deterministic in `seed`.
pub fn init_params(cfg: &ModelConfig, dist: &InitDistribution, seed: u64) -> ModelParams {
    sample_params(cfg, dist, &mut stream(seed, Purpose::Init, u64::MAX))
}

/// Declares one tape variable per weight matrix.
pub fn param_vars(tape: &mut Tape, cfg: &ModelConfig) -> Vec<Expr> {
    cfg.param_shapes()
        .into_iter()
        .enumerate()
        .map(|(i, s)| tape.variable(format!("W{i}"), s))
        .collect()
}

pub fn bind_params(binding: &mut Binding, vars: &[Expr], params: &ModelParams) {
    for (v, w) in vars.iter().zip(&params.layers) {
        binding.bind(*v, w.clone());
    }
}

fn pool(tape: &mut Tape, pooling: Pooling, h: Expr) -> Expr {
    match pooling {
        Pooling::Mean => tape.col_mean(h),
        Pooling::Sum => tape.col_sum(h),
    }
}

/// Pooled representation fed to the classifier weight (1 x hidden).
pub fn pooled_embedding(tape: &mut Tape, cfg: &ModelConfig, params: &[Expr], adj: Expr, x: Expr) -> Result<Expr> {
    let h = match cfg.architecture {
        Architecture::Gcn => {
            let mut h = x;
            for l in 0..cfg.depth {
                let hw = tape.matmul(h, params[l])?;
                let z = tape.matmul(adj, hw)?;
                h = if l + 1 < cfg.depth { tape.relu(z) } else { z };
            }
            h
        }
        Architecture::Sgc => {
            let mut h = x;
            for _ in 0..cfg.depth {
                h = tape.matmul(adj, h)?;
            }
            tape.matmul(h, params[0])?
        }
    };
    Ok(pool(tape, cfg.pooling, h))
}

/// Graph logits (1 x C) for normalized adjacency `adj` and features `x`.
pub fn forward(tape: &mut Tape, cfg: &ModelConfig, params: &[Expr], adj: Expr, x: Expr) -> Result<Expr> {
    let pooled = pooled_embedding(tape, cfg, params, adj, x)?;
    let classifier = *params.last().expect("model has parameters");
    Ok(tape.matmul(pooled, classifier)?)
}

pub fn gcn_forward(tape: &mut Tape, cfg: &ModelConfig, params: &[Expr], adj: Expr, x: Expr) -> Result<Expr> {
    debug_assert_eq!(cfg.architecture, Architecture::Gcn);
    forward(tape, cfg, params, adj, x)
}

pub fn sgc_forward(tape: &mut Tape, cfg: &ModelConfig, params: &[Expr], adj: Expr, x: Expr) -> Result<Expr> {
    debug_assert_eq!(cfg.architecture, Architecture::Sgc);
    forward(tape, cfg, params, adj, x)
}

pub fn one_hot(label: usize, classes: usize) -> Array2<f64> {
    let mut y = Array2::zeros((1, classes));
    y[[0, label]] = 1.0;
    y
}

/// Sum of per-graph cross-entropies. Divide by the batch size for the mean.
pub fn summed_loss(
    tape: &mut Tape,
    cfg: &ModelConfig,
    params: &[Expr],
    graphs: &[(Expr, Expr)],
    labels: &[usize],
) -> Result<Expr> {
    if graphs.is_empty() || graphs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "batch has {} graphs and {} labels",
            graphs.len(),
            labels.len()
        )));
    }
    let mut terms = Vec::with_capacity(graphs.len());
    for (&(adj, x), &label) in graphs.iter().zip(labels) {
        if label >= cfg.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: cfg.num_classes,
            });
        }
        let logits = forward(tape, cfg, params, adj, x)?;
        let y = tape.constant(one_hot(label, cfg.num_classes));
        terms.push(tape.softmax_cross_entropy(logits, y)?);
    }
    Ok(tape.add_all(&terms)?)
}

/// Mean cross-entropy over a batch, each graph forwarded on its own.
pub fn batch_loss(
    tape: &mut Tape,
    cfg: &ModelConfig,
    params: &[Expr],
    graphs: &[(Expr, Expr)],
    labels: &[usize],
) -> Result<Expr> {
    let total = summed_loss(tape, cfg, params, graphs, labels)?;
    Ok(tape.scale(total, 1.0 / graphs.len() as f64))
}

/// Adjacency and feature constants of a prepared graph, shared without copy.
pub fn graph_inputs(tape: &mut Tape, g: &PreparedGraph) -> (Expr, Expr) {
    let adj = tape.constant_shared(std::sync::Arc::clone(&g.adj_norm));
    let x = tape.constant_shared(std::sync::Arc::clone(&g.features));
    (adj, x)
}

/// Graphs stacked row-wise for the numeric path.
struct Stack<'a> {
    graphs: &'a [&'a PreparedGraph],
    offsets: Vec<usize>,
    rows: usize,
}

impl<'a> Stack<'a> {
    fn new(graphs: &'a [&'a PreparedGraph]) -> Self {
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut rows = 0;
        for g in graphs {
            offsets.push(rows);
            rows += g.node_count();
        }
        Self { graphs, offsets, rows }
    }

    fn features(&self) -> Array2<f64> {
        let d = self.graphs[0].features.ncols();
        let mut x = Array2::zeros((self.rows, d));
        for (g, &o) in self.graphs.iter().zip(&self.offsets) {
            x.slice_mut(s![o..o + g.node_count(), ..]).assign(&*g.features);
        }
        x
    }

    /// Applies each graph's adjacency (or its transpose) to its row block.
    fn propagate(&self, z: &Array2<f64>, transpose: bool) -> Array2<f64> {
        let mut out = Array2::zeros(z.dim());
        for (g, &o) in self.graphs.iter().zip(&self.offsets) {
            let n = g.node_count();
            let a = if transpose { g.adj_norm.t() } else { g.adj_norm.view() };
            general_mat_mul(
                1.0,
                &a,
                &z.slice(s![o..o + n, ..]),
                0.0,
                &mut out.slice_mut(s![o..o + n, ..]),
            );
        }
        out
    }

    fn pool(&self, pooling: Pooling, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.graphs.len(), h.ncols()));
        for (i, (g, &o)) in self.graphs.iter().zip(&self.offsets).enumerate() {
            let n = g.node_count();
            let col = h.slice(s![o..o + n, ..]).sum_axis(Axis(0)) * pooling.gamma(n);
            out.row_mut(i).assign(&col);
        }
        out
    }

    /// Adjoint of [`Stack::pool`]: spreads each pooled gradient over its rows.
    fn unpool(&self, pooling: Pooling, d: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, d.ncols()));
        for (i, (g, &o)) in self.graphs.iter().zip(&self.offsets).enumerate() {
            let n = g.node_count();
            let row = &d.row(i) * pooling.gamma(n);
            out.slice_mut(s![o..o + n, ..])
                .assign(&row.broadcast((n, d.ncols())).expect("row broadcast"));
        }
        out
    }
}

/// Intermediate values of a numeric forward pass.
struct Trace {
    /// Layer inputs (GCN) or the propagated features (SGC).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation propagated values, GCN only.
    pre: Vec<Array2<f64>>,
    pooled: Array2<f64>,
    logits: Array2<f64>,
}

fn numeric_forward(cfg: &ModelConfig, params: &ModelParams, stack: &Stack) -> Trace {
    let x = stack.features();
    let mut inputs = Vec::new();
    let mut pre = Vec::new();
    let top = match cfg.architecture {
        Architecture::Gcn => {
            let mut h = x;
            for l in 0..cfg.depth {
                let p = stack.propagate(&h.dot(&params.layers[l]), false);
                inputs.push(h);
                h = if l + 1 < cfg.depth {
                    p.mapv(|v| v.max(0.0))
                } else {
                    p.clone()
                };
                pre.push(p);
            }
            h
        }
        Architecture::Sgc => {
            let mut h = x;
            for _ in 0..cfg.depth {
                h = stack.propagate(&h, false);
            }
            let z = h.dot(&params.layers[0]);
            inputs.push(h);
            z
        }
    };
    let pooled = stack.pool(cfg.pooling, &top);
    let logits = pooled.dot(params.layers.last().expect("model has parameters"));
    Trace {
        inputs,
        pre,
        pooled,
        logits,
    }
}

fn check_labels(cfg: &ModelConfig, graphs: &[&PreparedGraph]) -> Result<()> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for g in graphs {
        if g.label >= cfg.num_classes {
            return Err(Error::LabelOutOfRange {
                label: g.label,
                classes: cfg.num_classes,
            });
        }
    }
    Ok(())
}

/// Logits of each graph under fixed parameters, one row per graph.
pub fn predict_logits(cfg: &ModelConfig, params: &ModelParams, graphs: &[PreparedGraph]) -> Result<Array2<f64>> {
    if graphs.is_empty() {
        return Ok(Array2::zeros((0, cfg.num_classes)));
    }
    let refs: Vec<&PreparedGraph> = graphs.iter().collect();
    Ok(numeric_forward(cfg, params, &Stack::new(&refs)).logits)
}

/// Pooled penultimate representations, one row per graph.
pub fn embed(cfg: &ModelConfig, params: &ModelParams, graphs: &[PreparedGraph]) -> Result<Array2<f64>> {
    if graphs.is_empty() {
        return Ok(Array2::zeros((0, cfg.hidden_dim)));
    }
    let refs: Vec<&PreparedGraph> = graphs.iter().collect();
    Ok(numeric_forward(cfg, params, &Stack::new(&refs)).pooled)
}

/// Mean cross-entropy and its parameter gradient over `graphs`.
///
/// Numeric counterpart of [`batch_loss`] differentiated by hand: node rows
/// of all graphs are stacked so each weight multiplication is one matrix
/// product, and adjacencies are applied block by block.
pub fn loss_and_grad(
    cfg: &ModelConfig,
    params: &ModelParams,
    graphs: &[&PreparedGraph],
) -> Result<(f64, Vec<Array2<f64>>)> {
    check_labels(cfg, graphs)?;
    let stack = Stack::new(graphs);
    let t = numeric_forward(cfg, params, &stack);
    let b = graphs.len() as f64;

    let mut loss = 0.0;
    let mut dlogits = t.logits.clone();
    for (mut row, g) in dlogits.axis_iter_mut(Axis(0)).zip(graphs) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[g.label];
        row.mapv_inplace(|v| (v - lse).exp() / b);
        row[g.label] -= 1.0 / b;
    }
    loss /= b;

    let last = params.layers.len() - 1;
    let mut grads: Vec<Array2<f64>> = params.layers.iter().map(|w| Array2::zeros(w.dim())).collect();
    grads[last] = t.pooled.t().dot(&dlogits);
    let dtop = stack.unpool(cfg.pooling, &dlogits.dot(&params.layers[last].t()));
    match cfg.architecture {
        Architecture::Gcn => {
            let mut dh = dtop;
            for l in (0..cfg.depth).rev() {
                let dp = if l + 1 < cfg.depth {
                    let mut dp = dh;
                    Zip::from(&mut dp).and(&t.pre[l]).for_each(|d, &p| {
                        if p <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    dp
                } else {
                    dh
                };
                let dz = stack.propagate(&dp, true);
                grads[l] = t.inputs[l].t().dot(&dz);
                dh = if l > 0 {
                    dz.dot(&params.layers[l].t())
                } else {
                    Array2::zeros((0, 0))
                };
            }
        }
        Architecture::Sgc => {
            grads[0] = t.inputs[0].t().dot(&dtop);
        }
    }
    Ok((loss, grads))
}
