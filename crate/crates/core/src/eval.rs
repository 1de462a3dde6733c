//! Train-on-condensed, test-on-real protocol and its metrics.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{dcg_condense, herding_select, kcenter_select, pretrain_embeddings, random_select};
use crate::condense::{condense, discrete_graphs, CondenseConfig, DiscretizeMode};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset, PreparedGraph};
use crate::model::{
    loss_and_grad, predict_logits, sample_params, Architecture, InitDistribution, ModelConfig, ModelParams, Pooling,
};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    RocAuc,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Self::Accuracy),
            "roc_auc" => Ok(Self::RocAuc),
            _ => Err(Error::InvalidArgument(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Doscond,
    Random,
    Herding,
    Kcenter,
    Dcg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Doscond => "doscond",
            Method::Random => "random",
            Method::Herding => "herding",
            Method::Kcenter => "kcenter",
            Method::Dcg => "dcg",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doscond" => Ok(Self::Doscond),
            "random" => Ok(Self::Random),
            "herding" => Ok(Self::Herding),
            "kcenter" => Ok(Self::Kcenter),
            "dcg" => Ok(Self::Dcg),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub metric: Metric,
    pub cseeds: usize,
    pub tseeds: usize,
    pub architecture: Architecture,
    pub depth: usize,
    pub hidden_dim: usize,
    pub pooling: Pooling,
    /// Epochs of the embedding model used by herding and k-center.
    pub pretrain_epochs: usize,
    pub discretization: DiscretizeMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.001,
            optimizer: OptimizerKind::Adam,
            metric: Metric::Accuracy,
            cseeds: 5,
            tseeds: 10,
            architecture: Architecture::Gcn,
            depth: 3,
            hidden_dim: 128,
            pooling: Pooling::Mean,
            pretrain_epochs: 500,
            discretization: DiscretizeMode::Threshold,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.cseeds == 0 || self.tseeds == 0 {
            return Err(Error::InvalidArgument(
                "epochs and seed counts must be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.depth == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidArgument("depth and hidden_dim must be positive".into()));
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
}

/// Full-batch training from a seeded Glorot initialization.
pub fn train_model(
    graphs: &[PreparedGraph],
    model: &ModelConfig,
    epochs: usize,
    lr: f64,
    optimizer: OptimizerKind,
    seed: u64,
) -> Result<ModelParams> {
    if epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("no training graphs".into()));
    }
    model.validate()?;
    let mut params = sample_params(
        model,
        &InitDistribution::default(),
        &mut stream(seed, Purpose::Train, 0),
    );
    let mut opt = Optimizer::new(optimizer, lr, &model.param_shapes());
    let refs: Vec<&PreparedGraph> = graphs.iter().collect();
    for epoch in 0..epochs {
        let (loss, grads) = loss_and_grad(model, &params, &refs)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step: epoch,
                detail: "training loss".into(),
            });
        }
        opt.step(&mut params.layers, &grads);
    }
    Ok(params)
}

/// Trains a fresh model on condensed graphs with the evaluation settings.
pub fn train_on_condensed(graphs: &[Graph], cfg: &EvalConfig, seed: u64) -> Result<ModelParams> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no condensed graphs".into()))?;
    let classes = graphs.iter().map(Graph::label).max().unwrap_or(0) + 1;
    let model = cfg.model_config(first.feature_dim(), classes);
    let prepared: Vec<PreparedGraph> = graphs.iter().map(Graph::prepare).collect();
    train_model(&prepared, &model, cfg.epochs, cfg.lr, cfg.optimizer, seed)
}

pub fn accuracy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let correct = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .filter(|(row, &y)| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best == y
        })
        .count();
    correct as f64 / labels.len() as f64
}

/// Area under the ROC curve from average ranks; `labels` are 0/1.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("roc_auc needs binary labels".into()));
    }
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("roc_auc needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Score of trained parameters on real graphs.
pub fn test_metric(model: &ModelConfig, params: &ModelParams, test: &[PreparedGraph], metric: Metric) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test split".into()));
    }
    let logits = predict_logits(model, params, test)?;
    let labels: Vec<usize> = test.iter().map(|g| g.label).collect();
    match metric {
        Metric::Accuracy => Ok(accuracy(&logits, &labels)),
        Metric::RocAuc => {
            if model.num_classes != 2 {
                return Err(Error::InvalidArgument(format!(
                    "roc_auc needs 2 classes, model has {}",
                    model.num_classes
                )));
            }
            let scores: Vec<f64> = logits
                .axis_iter(Axis(0))
                .map(|r| 1.0 / (1.0 + (r[0] - r[1]).exp()))
                .collect();
            roc_auc(&scores, &labels)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub dataset: String,
    pub gpc: usize,
    pub cseed: u64,
    pub tseed: u64,
    pub score: f64,
    pub cond_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub gpc: usize,
    pub metric: Metric,
    pub runs: Vec<RunRecord>,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub cond_seconds: f64,
    pub eval_seconds: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_runs(method: &str, dataset: &str, gpc: usize, metric: Metric, runs: Vec<RunRecord>) -> Self {
        let scores: Vec<f64> = runs.iter().map(|r| r.score).collect();
        let (mean, std) = mean_std(&scores);
        Self {
            method: method.into(),
            dataset: dataset.into(),
            gpc,
            metric,
            cond_seconds: runs.iter().map(|r| r.cond_seconds).sum::<f64>() / runs.len().max(1) as f64,
            eval_seconds: runs.iter().map(|r| r.eval_seconds).sum(),
            runs,
            mean,
            std,
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.score).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "method,dataset,gpc,cseed,tseed,score,cond_seconds,eval_seconds")?;
        for r in &self.runs {
            writeln!(
                w,
                "{},{},{},{},{},{:?},{:.6},{:.6}",
                r.method, r.dataset, r.gpc, r.cseed, r.tseed, r.score, r.cond_seconds, r.eval_seconds
            )?;
        }
        Ok(())
    }
}

/// Produces the condensed or selected training graphs of one method.
pub fn build_condensed(
    ds: &GraphDataset,
    method: Method,
    condense_cfg: &CondenseConfig,
    eval_cfg: &EvalConfig,
) -> Result<Vec<Graph>> {
    let gpc = condense_cfg.graphs_per_class;
    let seed = condense_cfg.seed;
    let pick = |idx: Vec<usize>| -> Vec<Graph> { idx.into_iter().map(|i| ds.graph(i).clone()).collect() };
    match method {
        Method::Doscond => {
            let run = condense(ds, condense_cfg)?;
            discrete_graphs(&run.set, eval_cfg.discretization, seed)
        }
        Method::Dcg => {
            let run = dcg_condense(ds, condense_cfg)?;
            discrete_graphs(&run.set, eval_cfg.discretization, seed)
        }
        Method::Random => Ok(pick(random_select(ds, gpc, seed)?)),
        Method::Herding | Method::Kcenter => {
            let model = eval_cfg.model_config(ds.feature_dim(), ds.num_classes());
            let emb = pretrain_embeddings(ds, &model, eval_cfg.pretrain_epochs, eval_cfg.lr, seed)?;
            let idx = if method == Method::Herding {
                herding_select(&emb, gpc)?
            } else {
                kcenter_select(&emb, gpc)?
            };
            Ok(pick(idx))
        }
    }
}

/// Condense under `cseeds` seeds and train `tseeds` models on each, scoring
/// every model on the test split. Runs execute on the rayon pool; the report
/// lists them in seed order.
pub fn run_protocol(
    ds: &GraphDataset,
    method: Method,
    condense_cfg: &CondenseConfig,
    eval_cfg: &EvalConfig,
) -> Result<EvalReport> {
    eval_cfg.validate()?;
    let base = condense_cfg.seed;
    let sets: Vec<(Vec<Graph>, f64)> = (0..eval_cfg.cseeds as u64)
        .into_par_iter()
        .map(|cs| {
            let start = Instant::now();
            let cfg = CondenseConfig {
                seed: base + cs,
                ..condense_cfg.clone()
            };
            let graphs = build_condensed(ds, method, &cfg, eval_cfg)?;
            Ok((graphs, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    evaluate_sets(ds, method.name(), condense_cfg.graphs_per_class, base, &sets, eval_cfg)
}

/// Trains and scores `tseeds` models on each condensed set. `sets[i]` is the
/// set built with seed `base + i` and the seconds it took.
pub fn evaluate_sets(
    ds: &GraphDataset,
    method: &str,
    gpc: usize,
    base: u64,
    sets: &[(Vec<Graph>, f64)],
    eval_cfg: &EvalConfig,
) -> Result<EvalReport> {
    eval_cfg.validate()?;
    let test: Vec<PreparedGraph> = ds.split().test.iter().map(|&i| ds.graph(i).prepare()).collect();
    let model = eval_cfg.model_config(ds.feature_dim(), ds.num_classes());
    let jobs: Vec<(usize, u64)> = (0..sets.len())
        .flat_map(|c| (0..eval_cfg.tseeds as u64).map(move |t| (c, t)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(c, t)| {
            let start = Instant::now();
            let (graphs, cond_seconds) = &sets[c];
            let prepared: Vec<PreparedGraph> = graphs.iter().map(Graph::prepare).collect();
            let params = train_model(&prepared, &model, eval_cfg.epochs, eval_cfg.lr, eval_cfg.optimizer, t)?;
            let score = test_metric(&model, &params, &test, eval_cfg.metric)?;
            Ok(RunRecord {
                method: method.into(),
                dataset: ds.name().into(),
                gpc,
                cseed: base + c as u64,
                tseed: t,
                score,
                cond_seconds: *cond_seconds,
                eval_seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_runs(method, ds.name(), gpc, eval_cfg.metric, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.7], &[1, 1, 0]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert!(roc_auc(&[0.5, 0.5], &[1, 1]).is_err());
    }

    #[test]
    fn accuracy_counts_argmax() {
        let logits = array![[1.0, 0.0], [0.0, 2.0], [3.0, 1.0]];
        assert_eq!(accuracy(&logits, &[0, 1, 1]), 2.0 / 3.0);
    }

    #[test]
    fn mean_std_formulas() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn zero_epochs_rejected() {
        let g = crate::toy::toy_graph(0, 3);
        let cfg = EvalConfig {
            epochs: 0,
            ..EvalConfig::default()
        };
        assert!(train_on_condensed(&[g], &cfg, 0).is_err());
    }

    #[test]
    fn roc_auc_rejects_multiclass_model() {
        let model = ModelConfig::gcn(2, 3);
        let params = ModelParams::zeros(&model);
        let g = crate::toy::toy_graph(0, 3).prepare();
        assert!(test_metric(&model, &params, &[g], Metric::RocAuc).is_err());
    }

    #[test]
    fn separable_pair_trains_to_low_loss_deterministically() {
        let graphs = vec![crate::toy::toy_graph(0, 4), crate::toy::toy_graph(1, 4)];
        let cfg = EvalConfig::default();
        let a = train_on_condensed(&graphs, &cfg, 3).unwrap();
        let b = train_on_condensed(&graphs, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let prepared: Vec<PreparedGraph> = graphs.iter().map(Graph::prepare).collect();
        let refs: Vec<&PreparedGraph> = prepared.iter().collect();
        let (loss, _) = loss_and_grad(&cfg.model_config(2, 2), &a, &refs).unwrap();
        assert!(loss < 0.1, "{loss}");
    }
}
