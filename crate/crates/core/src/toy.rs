//! Built-in toy dataset: triangles against paths.

use ndarray::Array2;
use rand::Rng;

use crate::error::Result;
use crate::graph::{split_dataset, Graph, GraphDataset};
use crate::rng::{stream, Purpose};

/// Class 0 holds a triangle plus an optional pendant path, class 1 a simple
/// path. Graphs have 3 to 5 nodes and two features: a constant 1 and the
/// node degree.
pub fn toy_graph(class: usize, nodes: usize) -> Graph {
    assert!((3..=5).contains(&nodes), "toy graphs have 3 to 5 nodes");
    let mut a = Array2::zeros((nodes, nodes));
    let mut link = |i: usize, j: usize| {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    };
    if class == 0 {
        link(0, 1);
        link(1, 2);
        link(0, 2);
        for i in 3..nodes {
            link(i - 1, i);
        }
    } else {
        for i in 1..nodes {
            link(i - 1, i);
        }
    }
    let mut x = Array2::ones((nodes, 2));
    for i in 0..nodes {
        x[[i, 1]] = a.row(i).sum();
    }
    Graph::new(a, x, class).expect("toy graph is valid")
}

/// `per_class` graphs of each class with node counts drawn from {3, 4, 5},
/// split 80/10/10.
pub fn toy_dataset(per_class: usize, seed: u64) -> Result<GraphDataset> {
    let mut rng = stream(seed, Purpose::Split, 1);
    let mut graphs = Vec::with_capacity(2 * per_class);
    for _ in 0..per_class {
        for class in 0..2 {
            graphs.push(toy_graph(class, rng.random_range(3..=5)));
        }
    }
    split_dataset(GraphDataset::new("toy", graphs, 2)?, (0.8, 0.1, 0.1), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_and_path_degrees() {
        let t = toy_graph(0, 3);
        assert_eq!(t.edge_count(), 3.0);
        assert!(t.features().column(1).iter().all(|&d| d == 2.0));
        let p = toy_graph(1, 3);
        assert_eq!(p.edge_count(), 2.0);
        assert_eq!(p.features().column(1).to_vec(), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn toy_dataset_is_deterministic_and_balanced() {
        let a = toy_dataset(20, 3).unwrap();
        let b = toy_dataset(20, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        assert_eq!(a.class_index()[0].len(), 20);
        assert_eq!(a.split().train.len(), 32);
    }
}
