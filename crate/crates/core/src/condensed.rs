//! On-disk condensed sets: TU files plus a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::condense::{discrete_graphs, DiscretizeMode, SyntheticSet};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tu::{parse_tu_dataset, write_tu};

/// File stem of the TU files inside a condensed-set directory.
pub const CONDENSED_NAME: &str = "condensed";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Non-edge logit used at initialization, recorded for provenance.
pub const OMEGA_INIT_NOTE: &str = "+5 on real edges, -5 elsewhere";
pub const READOUT_NOTE: &str = "last propagation layer linear, pool, then linear classifier";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedManifest {
    pub method: String,
    pub graphs_per_class: usize,
    /// Nodes per graph; `None` when the graphs are copies of real graphs.
    pub node_count: Option<usize>,
    pub feature_dim: usize,
    /// Number of classes.
    pub classes: usize,
    /// Label of each serialized graph, in file order.
    pub labels: Vec<usize>,
    pub seed: u64,
    /// SHA-256 of the JSON run configuration.
    pub config_hash: String,
    /// `None` for selected real graphs.
    pub discretization: Option<DiscretizeMode>,
    pub readout: String,
    pub omega_init: Option<String>,
}

/// Where a set came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
}

/// A condensed set read back from disk.
#[derive(Debug, Clone)]
pub struct CondensedSet {
    pub manifest: CondensedManifest,
    pub graphs: Vec<Graph>,
}

/// Hex SHA-256 of the canonical JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Discretizes `set` and writes it to `dir`. Sample mode draws under the
/// provenance seed.
pub fn write_condensed(
    set: &SyntheticSet,
    mode: DiscretizeMode,
    provenance: &Provenance,
    dir: &Path,
) -> Result<CondensedManifest> {
    let graphs = discrete_graphs(set, mode, provenance.seed)?;
    let manifest = CondensedManifest {
        method: provenance.method.clone(),
        graphs_per_class: set.graphs_per_class(),
        node_count: Some(set.node_count()),
        feature_dim: set.feature_dim(),
        classes: set.num_classes(),
        labels: set.labels().to_vec(),
        seed: provenance.seed,
        config_hash: provenance.config_hash.clone(),
        discretization: Some(mode),
        readout: READOUT_NOTE.into(),
        omega_init: Some(OMEGA_INIT_NOTE.into()),
    };
    write_graphs(&graphs, &manifest, dir)?;
    Ok(manifest)
}

/// Writes copies of selected real graphs, ordered by class.
pub fn write_selected(
    graphs: &[Graph],
    num_classes: usize,
    provenance: &Provenance,
    dir: &Path,
) -> Result<CondensedManifest> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no graphs selected".into()))?;
    if !graphs.len().is_multiple_of(num_classes) {
        return Err(Error::InvalidArgument(format!(
            "{} graphs cannot be split evenly over {num_classes} classes",
            graphs.len()
        )));
    }
    let mut sorted: Vec<Graph> = graphs.to_vec();
    sorted.sort_by_key(Graph::label);
    let manifest = CondensedManifest {
        method: provenance.method.clone(),
        graphs_per_class: graphs.len() / num_classes,
        node_count: None,
        feature_dim: first.feature_dim(),
        classes: num_classes,
        labels: sorted.iter().map(Graph::label).collect(),
        seed: provenance.seed,
        config_hash: provenance.config_hash.clone(),
        discretization: None,
        readout: READOUT_NOTE.into(),
        omega_init: None,
    };
    write_graphs(&sorted, &manifest, dir)?;
    Ok(manifest)
}

fn write_graphs(graphs: &[Graph], manifest: &CondensedManifest, dir: &Path) -> Result<()> {
    let refs: Vec<&Graph> = graphs.iter().collect();
    write_tu(dir, CONDENSED_NAME, &refs)?;
    let path = dir.join(MANIFEST_FILE);
    let mut body = serde_json::to_string_pretty(manifest)?;
    body.push('\n');
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ManifestMismatch(what()))
    }
}

/// Reads a directory written by [`write_condensed`] or [`write_selected`] and
/// checks it against its manifest.
pub fn read_condensed(dir: &Path) -> Result<CondensedSet> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CondensedManifest = serde_json::from_str(&text)?;
    let ds = parse_tu_dataset(dir, CONDENSED_NAME)?;
    let graphs = ds.graphs().to_vec();

    check(manifest.classes >= 1, || "manifest lists no classes".into())?;
    check(graphs.len() == manifest.graphs_per_class * manifest.classes, || {
        format!(
            "{} graphs on disk, manifest expects {} x {}",
            graphs.len(),
            manifest.graphs_per_class,
            manifest.classes
        )
    })?;
    check(ds.num_classes() == manifest.classes, || {
        format!(
            "{} classes on disk, manifest lists {}",
            ds.num_classes(),
            manifest.classes
        )
    })?;
    let labels: Vec<usize> = graphs.iter().map(Graph::label).collect();
    check(labels == manifest.labels, || {
        "graph labels differ from the manifest".into()
    })?;
    check(ds.feature_dim() == manifest.feature_dim, || {
        format!(
            "feature dimension {} on disk, manifest says {}",
            ds.feature_dim(),
            manifest.feature_dim
        )
    })?;
    if let Some(n) = manifest.node_count {
        if let Some(g) = graphs.iter().position(|g| g.node_count() != n) {
            return Err(Error::ManifestMismatch(format!(
                "graph {g} has {} nodes, manifest says {n}",
                graphs[g].node_count()
            )));
        }
    }
    Ok(CondensedSet { manifest, graphs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condense::init_synthetic;
    use crate::toy::toy_dataset;
    use ndarray::Array2;

    fn provenance() -> Provenance {
        Provenance {
            method: "doscond".into(),
            seed: 3,
            config_hash: config_hash(&"cfg").unwrap(),
        }
    }

    #[test]
    fn write_then_read_is_exact() {
        let ds = toy_dataset(6, 0).unwrap();
        let set = init_synthetic(&ds, 2, 5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_condensed(&set, DiscretizeMode::Threshold, &provenance(), dir.path()).unwrap();
        assert_eq!(m.graphs_per_class, 2);
        let back = read_condensed(dir.path()).unwrap();
        assert_eq!(back.manifest, m);
        let expected = discrete_graphs(&set, DiscretizeMode::Threshold, 3).unwrap();
        assert_eq!(back.graphs, expected);
    }

    #[test]
    fn positive_logits_give_complete_graphs() {
        let ds = toy_dataset(4, 0).unwrap();
        let set = init_synthetic(&ds, 1, 4, 0).unwrap();
        let omega = vec![Array2::from_elem((4, 4), 5.0); 2];
        let set = SyntheticSet::from_parts(omega, set.features().to_vec(), 1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_condensed(&set, DiscretizeMode::Threshold, &provenance(), dir.path()).unwrap();
        assert_eq!(m.graphs_per_class, 1);
        let back = read_condensed(dir.path()).unwrap();
        assert_eq!(back.graphs.len(), 2);
        let complete = Array2::from_elem((4, 4), 1.0) - Array2::<f64>::eye(4);
        for g in &back.graphs {
            assert_eq!(g.adjacency(), &complete);
        }
    }

    #[test]
    fn selected_graphs_round_trip() {
        let ds = toy_dataset(6, 0).unwrap();
        let picks = vec![
            ds.graph(ds.train_of_class(1)[0]).clone(),
            ds.graph(ds.train_of_class(0)[0]).clone(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let m = write_selected(&picks, 2, &provenance(), dir.path()).unwrap();
        assert_eq!(m.labels, vec![0, 1]);
        assert_eq!(m.node_count, None);
        let back = read_condensed(dir.path()).unwrap();
        assert_eq!(back.graphs[0], picks[1]);
        assert_eq!(back.graphs[1], picks[0]);
    }

    #[test]
    fn tampered_manifest_is_rejected() {
        let ds = toy_dataset(4, 0).unwrap();
        let set = init_synthetic(&ds, 1, 4, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut m = write_condensed(&set, DiscretizeMode::Threshold, &provenance(), dir.path()).unwrap();
        m.graphs_per_class = 2;
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        let err = read_condensed(dir.path()).unwrap_err();
        assert_eq!(err.kind(), "manifest_mismatch");
        assert_eq!(
            read_condensed(&dir.path().join("absent")).unwrap_err().kind(),
            "missing_file"
        );
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(&1u32).unwrap(), config_hash(&1u32).unwrap());
        assert_ne!(config_hash(&1u32).unwrap(), config_hash(&2u32).unwrap());
        assert_eq!(config_hash(&1u32).unwrap().len(), 64);
    }
}
