//! TU bulk-format reading and writing.
//!
//! A dataset `DS` lives in a directory as comma-separated text files with
//! 1-indexed node ids:
//!
//! * `DS_A.txt`: one `i, j` edge per line, block diagonal over graphs
//! * `DS_graph_indicator.txt`: graph id of node `i` on line `i`
//! * `DS_graph_labels.txt`: class label of graph `g` on line `g`
//! * `DS_node_labels.txt` (optional): integer label per node
//! * `DS_node_attributes.txt` (optional): comma-separated reals per node

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_lines(path: &Path, required: bool) -> Result<Option<Vec<(usize, String)>>> {
    if !path.exists() {
        return if required {
            Err(Error::MissingFile(path.to_path_buf()))
        } else {
            Ok(None)
        };
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Some(
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .collect(),
    ))
}

fn parse_int(path: &Path, line: usize, field: &str) -> Result<i64> {
    field.trim().parse::<i64>().map_err(|_| Error::Parse {
        file: path.to_path_buf(),
        line,
        message: format!("expected an integer, got `{}`", field.trim()),
    })
}

fn parse_real(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        file: path.to_path_buf(),
        line,
        message: format!("expected a real number, got `{}`", field.trim()),
    })
}

/// Reads a TU-format dataset. Graph labels are remapped to `0..C` in sorted
/// order of the original values, node labels become one-hot columns, node
/// attributes are appended after them, and graphs without any node
/// information get a single constant feature.
pub fn parse_tu_dataset(dir: &Path, name: &str) -> Result<GraphDataset> {
    let indicator_path = file_path(dir, name, "graph_indicator");
    let labels_path = file_path(dir, name, "graph_labels");
    let edges_path = file_path(dir, name, "A");
    let node_labels_path = file_path(dir, name, "node_labels");
    let attrs_path = file_path(dir, name, "node_attributes");

    let indicator_lines = read_lines(&indicator_path, true)?.unwrap_or_default();
    let label_lines = read_lines(&labels_path, true)?.unwrap_or_default();
    let edge_lines = read_lines(&edges_path, true)?.unwrap_or_default();
    let node_label_lines = read_lines(&node_labels_path, false)?;
    let attr_lines = read_lines(&attrs_path, false)?;

    let num_graphs = label_lines.len();
    if num_graphs == 0 {
        return Err(Error::InvalidDataset(format!(
            "{} lists no graphs",
            labels_path.display()
        )));
    }
    let mut raw_labels = Vec::with_capacity(num_graphs);
    for (line, text) in &label_lines {
        raw_labels.push(parse_int(&labels_path, *line, text)?);
    }
    let label_values: BTreeSet<i64> = raw_labels.iter().copied().collect();
    let label_map: BTreeMap<i64, usize> = label_values.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    // node (0-based) -> (graph, local index)
    let num_nodes = indicator_lines.len();
    let mut node_graph = Vec::with_capacity(num_nodes);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    for (node, (line, text)) in indicator_lines.iter().enumerate() {
        let g = parse_int(&indicator_path, *line, text)?;
        if g < 1 || g as usize > num_graphs {
            return Err(Error::Parse {
                file: indicator_path.clone(),
                line: *line,
                message: format!("graph id {g} outside 1..={num_graphs}"),
            });
        }
        let g = g as usize - 1;
        node_graph.push((g, members[g].len()));
        members[g].push(node);
    }
    if let Some(g) = members.iter().position(Vec::is_empty) {
        return Err(Error::InvalidDataset(format!("graph {} has no nodes", g + 1)));
    }

    let mut adjacency: Vec<Array2<f64>> = members.iter().map(|m| Array2::zeros((m.len(), m.len()))).collect();
    for (line, text) in &edge_lines {
        let mut parts = text.split(',');
        let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
            return Err(Error::Parse {
                file: edges_path.clone(),
                line: *line,
                message: "expected `i, j`".into(),
            });
        };
        let a = parse_int(&edges_path, *line, a)?;
        let b = parse_int(&edges_path, *line, b)?;
        for v in [a, b] {
            if v < 1 || v as usize > num_nodes {
                return Err(Error::Parse {
                    file: edges_path.clone(),
                    line: *line,
                    message: format!("node id {v} outside 1..={num_nodes}"),
                });
            }
        }
        let (ga, ia) = node_graph[a as usize - 1];
        let (gb, ib) = node_graph[b as usize - 1];
        if ga != gb {
            return Err(Error::Parse {
                file: edges_path.clone(),
                line: *line,
                message: format!("edge joins graphs {} and {}", ga + 1, gb + 1),
            });
        }
        if ia != ib {
            adjacency[ga][[ia, ib]] = 1.0;
            adjacency[ga][[ib, ia]] = 1.0;
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); num_nodes];
    if let Some(lines) = &node_label_lines {
        if lines.len() != num_nodes {
            return Err(Error::InvalidDataset(format!(
                "{} has {} lines for {num_nodes} nodes",
                node_labels_path.display(),
                lines.len()
            )));
        }
        let mut raw = Vec::with_capacity(num_nodes);
        for (line, text) in lines {
            let first = text.split(',').next().unwrap_or_default();
            raw.push(parse_int(&node_labels_path, *line, first)?);
        }
        let values: BTreeSet<i64> = raw.iter().copied().collect();
        let index: BTreeMap<i64, usize> = values.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        for (node, v) in raw.iter().enumerate() {
            let mut onehot = vec![0.0; values.len()];
            onehot[index[v]] = 1.0;
            columns[node].extend(onehot);
        }
    }
    if let Some(lines) = &attr_lines {
        if lines.len() != num_nodes {
            return Err(Error::InvalidDataset(format!(
                "{} has {} lines for {num_nodes} nodes",
                attrs_path.display(),
                lines.len()
            )));
        }
        let mut width = None;
        for (node, (line, text)) in lines.iter().enumerate() {
            let vals = text
                .split(',')
                .map(|f| parse_real(&attrs_path, *line, f))
                .collect::<Result<Vec<_>>>()?;
            if *width.get_or_insert(vals.len()) != vals.len() {
                return Err(Error::Parse {
                    file: attrs_path.clone(),
                    line: *line,
                    message: "inconsistent attribute count".into(),
                });
            }
            columns[node].extend(vals);
        }
    }
    if node_label_lines.is_none() && attr_lines.is_none() {
        for c in &mut columns {
            c.push(1.0);
        }
    }
    let dim = columns[0].len();

    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, nodes) in members.iter().enumerate() {
        let mut feats = Array2::zeros((nodes.len(), dim));
        for (local, &node) in nodes.iter().enumerate() {
            for (k, &v) in columns[node].iter().enumerate() {
                feats[[local, k]] = v;
            }
        }
        let adj = std::mem::take(&mut adjacency[g]);
        graphs.push(Graph::new(adj, feats, label_map[&raw_labels[g]])?);
    }
    GraphDataset::new(name, graphs, label_values.len())
}

/// Writes graphs in TU format with features as node attributes and labels
/// written verbatim. Edges are emitted in both directions, like the public
/// datasets. Adjacency entries must be binary.
pub fn write_tu(dir: &Path, name: &str, graphs: &[&Graph]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::new();
    let mut indicator = String::new();
    let mut labels = String::new();
    let mut attrs = String::new();
    let mut offset = 0usize;
    for (g, graph) in graphs.iter().enumerate() {
        let n = graph.node_count();
        let adj = graph.adjacency();
        for i in 0..n {
            for j in 0..n {
                match adj[[i, j]] {
                    0.0 => {}
                    1.0 => writeln!(edges, "{}, {}", offset + i + 1, offset + j + 1).unwrap(),
                    w => {
                        return Err(Error::InvalidArgument(format!(
                            "graph {g} has non-binary edge weight {w}; discretize before writing"
                        )))
                    }
                }
            }
            writeln!(indicator, "{}", g + 1).unwrap();
            let row: Vec<String> = graph.features().row(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(attrs, "{}", row.join(", ")).unwrap();
        }
        writeln!(labels, "{}", graph.label()).unwrap();
        offset += n;
    }
    for (suffix, body) in [
        ("A", edges),
        ("graph_indicator", indicator),
        ("graph_labels", labels),
        ("node_attributes", attrs),
    ] {
        let path = file_path(dir, name, suffix);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(file_path(dir, name, suffix), body).unwrap();
    }

    #[test]
    fn duplicate_directions_become_one_edge() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n2, 1\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n");
        write(dir.path(), "T", "graph_labels", "1\n");
        let ds = parse_tu_dataset(dir.path(), "T").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.graph(0).adjacency(), &array![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(ds.graph(0).features(), &array![[1.0], [1.0]]);
    }

    #[test]
    fn node_labels_become_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n1\n");
        write(dir.path(), "T", "graph_labels", "0\n");
        write(dir.path(), "T", "node_labels", "0\n1\n1\n");
        let ds = parse_tu_dataset(dir.path(), "T").unwrap();
        assert_eq!(ds.graph(0).features(), &array![[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn labels_remap_and_attributes_append() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n3, 3\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n2\n");
        write(dir.path(), "T", "graph_labels", "-1\n1\n");
        write(dir.path(), "T", "node_labels", "4\n2\n4\n");
        write(dir.path(), "T", "node_attributes", "0.5, 1\n-2, 3\n7, 8\n");
        let ds = parse_tu_dataset(dir.path(), "T").unwrap();
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.graph(0).label(), 0);
        assert_eq!(ds.graph(1).label(), 1);
        assert_eq!(
            ds.graph(0).features(),
            &array![[0.0, 1.0, 0.5, 1.0], [1.0, 0.0, -2.0, 3.0]]
        );
        // self-loop line dropped
        assert_eq!(ds.graph(1).adjacency(), &array![[0.0]]);
    }

    #[test]
    fn parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "graph_indicator", "1\n2\n");
        write(dir.path(), "T", "graph_labels", "0\n1\n");
        assert!(matches!(parse_tu_dataset(dir.path(), "T"), Err(Error::MissingFile(_))));

        write(dir.path(), "T", "A", "1, 3\n");
        assert!(matches!(parse_tu_dataset(dir.path(), "T"), Err(Error::Parse { .. })));

        write(dir.path(), "T", "A", "1, 2\n");
        let err = parse_tu_dataset(dir.path(), "T").unwrap_err();
        assert!(err.to_string().contains("joins graphs"), "{err}");

        write(dir.path(), "T", "A", "");
        write(dir.path(), "T", "graph_labels", "0\nfoo\n");
        assert!(matches!(
            parse_tu_dataset(dir.path(), "T"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn write_rejects_fractional_edges() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::new(array![[0.0, 0.5], [0.5, 0.0]], Array2::ones((2, 1)), 0).unwrap();
        assert!(write_tu(dir.path(), "T", &[&g]).is_err());
    }
}
