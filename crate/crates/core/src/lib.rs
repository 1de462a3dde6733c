//! Graph dataset condensation by one-step gradient matching.
//!
//! A small set of synthetic graphs (edge logits plus node features) is
//! learned so that the gradients of a freshly initialized GNN on the
//! synthetic set point in the same direction as on real data.

pub mod baselines;
pub mod condense;
pub mod condensed;
pub mod diagnostics;
mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod optim;
pub mod rng;
pub mod toy;
pub mod tu;

pub use condense::{condense, condense_bilevel, CondenseConfig, DiscretizeMode, SyntheticSet};
pub use condensed::{
    config_hash, read_condensed, write_condensed, write_selected, CondensedManifest, CondensedSet, Provenance,
};
pub use error::{Error, Result};
pub use eval::{run_protocol, EvalConfig, EvalReport, Method, Metric};
pub use graph::{average_node_count, normalize_adjacency, split_dataset, Graph, GraphDataset, PreparedGraph, Split};
pub use model::{Architecture, InitDistribution, ModelConfig, ModelParams, Pooling};
pub use tu::{parse_tu_dataset, write_tu};
