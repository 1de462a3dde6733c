//! Coreset selectors and the structure-frozen feature learner.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::condense::{condense, CondenseConfig, CondenseRun};
use crate::error::{Error, Result};
use crate::eval::train_model;
use crate::graph::{Graph, GraphDataset, PreparedGraph};
use crate::model::{embed, ModelConfig};
use crate::optim::OptimizerKind;
use crate::rng::{stream, Purpose};

/// Pooled penultimate representation of every training graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    /// Dataset index of each row.
    pub indices: Vec<usize>,
    pub embeddings: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl EmbeddingTable {
    pub fn rows_of_class(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&r| self.labels[r] == c).collect()
    }
}

/// Trains a model on the training split with Adam and embeds every
/// training graph with it.
pub fn pretrain_embeddings(
    ds: &GraphDataset,
    model: &ModelConfig,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<EmbeddingTable> {
    let indices = ds.split().train.clone();
    if indices.is_empty() {
        return Err(Error::InvalidDataset("empty training split".into()));
    }
    let prepared: Vec<PreparedGraph> = indices.iter().map(|&i| ds.graph(i).prepare()).collect();
    let params = train_model(&prepared, model, epochs, lr, OptimizerKind::Adam, seed)?;
    let embeddings = embed(model, &params, &prepared)?;
    if !diffmath::all_finite(&embeddings) {
        return Err(Error::NonFinite {
            step: epochs,
            detail: "embeddings".into(),
        });
    }
    Ok(EmbeddingTable {
        labels: indices.iter().map(|&i| ds.graph(i).label()).collect(),
        indices,
        embeddings,
        num_classes: ds.num_classes(),
    })
}

/// `m` training graphs per class, uniformly; with replacement only when the
/// class has fewer than `m` graphs.
pub fn random_select(ds: &GraphDataset, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(m * ds.num_classes());
    for c in 0..ds.num_classes() {
        let pool = ds.train_of_class(c);
        if pool.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        let mut rng = stream(seed, Purpose::Select, c as u64);
        if pool.len() >= m {
            out.extend(sample_indices(&mut rng, pool.len(), m).into_iter().map(|i| pool[i]));
        } else {
            out.extend((0..m).map(|_| pool[rng.random_range(0..pool.len())]));
        }
    }
    Ok(out)
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn class_points(emb: &EmbeddingTable, c: usize, m: usize) -> Result<(Vec<usize>, Array2<f64>)> {
    let rows = emb.rows_of_class(c);
    if rows.is_empty() {
        return Err(Error::EmptyClass(c));
    }
    if m == 0 || m > rows.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {m} of {} graphs in class {c}",
            rows.len()
        )));
    }
    let points = emb.embeddings.select(Axis(0), &rows);
    Ok((rows, points))
}

/// Positions (within `points`) chosen by greedy herding.
pub fn herding_order(points: &Array2<f64>, m: usize) -> Vec<usize> {
    let n = points.nrows();
    let mu = points.mean_axis(Axis(0)).expect("non-empty class");
    let mut sum = Array1::<f64>::zeros(points.ncols());
    let mut chosen = vec![false; n];
    let mut order = Vec::with_capacity(m);
    for k in 0..m {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            let cand = (&sum + &points.row(i)) / (k + 1) as f64;
            let d = sq_dist(mu.view(), cand.view());
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("m within class size");
        chosen[i] = true;
        sum += &points.row(i);
        order.push(i);
    }
    order
}

/// Positions (within `points`) chosen by farthest-first traversal seeded at
/// the point closest to the mean.
pub fn kcenter_order(points: &Array2<f64>, m: usize) -> Vec<usize> {
    let n = points.nrows();
    let mu = points.mean_axis(Axis(0)).expect("non-empty class");
    let mut first = 0;
    let mut first_d = f64::INFINITY;
    for i in 0..n {
        let d = sq_dist(points.row(i), mu.view());
        if d < first_d {
            first = i;
            first_d = d;
        }
    }
    let mut order = vec![first];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    let mut chosen = vec![false; n];
    chosen[first] = true;
    while order.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            if best.is_none_or(|(_, bd)| nearest[i] > bd) {
                best = Some((i, nearest[i]));
            }
        }
        let (i, _) = best.expect("m within class size");
        chosen[i] = true;
        order.push(i);
        for j in 0..n {
            nearest[j] = nearest[j].min(sq_dist(points.row(j), points.row(i)));
        }
    }
    order
}

fn select_with(emb: &EmbeddingTable, m: usize, order: fn(&Array2<f64>, usize) -> Vec<usize>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(m * emb.num_classes);
    for c in 0..emb.num_classes {
        let (rows, points) = class_points(emb, c, m)?;
        out.extend(order(&points, m).into_iter().map(|p| emb.indices[rows[p]]));
    }
    Ok(out)
}

/// Herding per class; returns dataset indices.
pub fn herding_select(emb: &EmbeddingTable, m: usize) -> Result<Vec<usize>> {
    select_with(emb, m, herding_order)
}

/// Greedy k-center per class; returns dataset indices.
pub fn kcenter_select(emb: &EmbeddingTable, m: usize) -> Result<Vec<usize>> {
    select_with(emb, m, kcenter_order)
}

/// Learns features on randomly chosen real structures that stay fixed.
pub fn dcg_condense(ds: &GraphDataset, cfg: &CondenseConfig) -> Result<CondenseRun> {
    let cfg = CondenseConfig {
        freeze_structure: true,
        ..cfg.clone()
    };
    condense(ds, &cfg)
}

/// Copies of the selected real graphs.
pub fn selected_graphs(ds: &GraphDataset, indices: &[usize]) -> Vec<Graph> {
    indices.iter().map(|&i| ds.graph(i).clone()).collect()
}
