//! Graph and dataset data model.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// One labeled graph with a dense adjacency matrix.
///
/// Adjacency is symmetric with a zero diagonal; entries are `{0, 1}` for real
/// graphs and may be fractional for relaxed synthetic graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Array2<f64>,
    features: Array2<f64>,
    label: usize,
}

impl Graph {
    pub fn new(adjacency: Array2<f64>, features: Array2<f64>, label: usize) -> Result<Self> {
        let (r, c) = adjacency.dim();
        if r == 0 || r != c {
            return Err(Error::InvalidDataset(format!(
                "adjacency must be square and non-empty, got {r}x{c}"
            )));
        }
        if features.nrows() != r {
            return Err(Error::InvalidDataset(format!(
                "feature rows {} do not match node count {r}",
                features.nrows()
            )));
        }
        for i in 0..r {
            if adjacency[[i, i]] != 0.0 {
                return Err(Error::InvalidDataset(format!("self-loop on node {i}")));
            }
            for j in (i + 1)..r {
                let a = adjacency[[i, j]];
                if a != adjacency[[j, i]] {
                    return Err(Error::InvalidDataset(format!("adjacency not symmetric at ({i}, {j})")));
                }
                if !(a >= 0.0) {
                    return Err(Error::InvalidDataset(format!(
                        "negative or NaN edge weight at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            adjacency,
            features,
            label,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// Number of undirected edges (counting weights for relaxed graphs).
    pub fn edge_count(&self) -> f64 {
        self.adjacency.sum() / 2.0
    }

    pub fn prepare(&self) -> PreparedGraph {
        PreparedGraph {
            adj_norm: Arc::new(normalize_adjacency(&self.adjacency)),
            features: Arc::new(self.features.clone()),
            label: self.label,
        }
    }
}

/// A graph with its normalized adjacency precomputed, shared cheaply across
/// expression tapes.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub adj_norm: Arc<Array2<f64>>,
    pub features: Arc<Array2<f64>>,
    pub label: usize,
}

impl PreparedGraph {
    pub fn node_count(&self) -> usize {
        self.adj_norm.nrows()
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the row sums of `A + I`.
pub fn normalize_adjacency(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let with_loops = a + &Array2::<f64>::eye(n);
    let inv_sqrt: Array1<f64> = with_loops.sum_axis(Axis(1)).mapv(|d| 1.0 / d.sqrt());
    let mut out = with_loops;
    for ((i, j), v) in out.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    out
}

/// Disjoint train/validation/test index lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    feature_dim: usize,
    class_index: Vec<Vec<usize>>,
    split: Split,
}

impl GraphDataset {
    /// Builds a dataset with every graph in the training split.
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        let feature_dim = graphs
            .first()
            .map(Graph::feature_dim)
            .ok_or_else(|| Error::InvalidDataset("dataset has no graphs".into()))?;
        if num_classes == 0 {
            return Err(Error::InvalidDataset("dataset needs at least one class".into()));
        }
        let mut class_index = vec![Vec::new(); num_classes];
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::InvalidDataset(format!(
                    "graph {i} has feature dim {}, expected {feature_dim}",
                    g.feature_dim()
                )));
            }
            if g.label() >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: g.label(),
                    classes: num_classes,
                });
            }
            class_index[g.label()].push(i);
        }
        let split = Split {
            train: (0..graphs.len()).collect(),
            ..Split::default()
        };
        Ok(Self {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
            class_index,
            split,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, i: usize) -> &Graph {
        &self.graphs[i]
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.class_index
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        let mut seen = vec![0u8; self.graphs.len()];
        for &i in split.train.iter().chain(&split.val).chain(&split.test) {
            if i >= self.graphs.len() {
                return Err(Error::InvalidDataset(format!("split index {i} out of range")));
            }
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::InvalidDataset(
                "split must cover every graph exactly once".into(),
            ));
        }
        self.split = split;
        Ok(self)
    }

    /// Training-split indices of class `c`, in split order.
    pub fn train_of_class(&self, c: usize) -> Vec<usize> {
        self.split
            .train
            .iter()
            .copied()
            .filter(|&i| self.graphs[i].label() == c)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Graph> {
        indices.iter().map(|&i| &self.graphs[i]).collect()
    }

    pub fn mean_node_count(&self) -> f64 {
        self.graphs.iter().map(|g| g.node_count() as f64).sum::<f64>() / self.graphs.len() as f64
    }
}

/// Random train/validation/test split with sizes `⌊r₀N⌋`, `⌊r₁N⌋` and the
/// remainder.
pub fn split_dataset(ds: GraphDataset, ratios: (f64, f64, f64), seed: u64) -> Result<GraphDataset> {
    let (a, b, c) = ratios;
    for r in [a, b, c] {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidArgument(format!("split ratio {r} outside (0, 1)")));
        }
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios sum to {}", a + b + c)));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Purpose::Split, 0));
    let n_train = (a * n as f64).floor() as usize;
    let n_val = (b * n as f64).floor() as usize;
    let split = Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    ds.with_split(split)
}

/// Mean node count over the training split, rounded half up.
pub fn average_node_count(ds: &GraphDataset) -> Result<usize> {
    let train = &ds.split().train;
    if train.is_empty() {
        return Err(Error::InvalidDataset("empty training split".into()));
    }
    let mean = train.iter().map(|&i| ds.graph(i).node_count() as f64).sum::<f64>() / train.len() as f64;
    Ok((mean + 0.5).floor() as usize)
}
