//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use graphcond::baselines::{
    dcg_condense, herding_select, kcenter_select, pretrain_embeddings, random_select, selected_graphs, EmbeddingTable,
};
use graphcond::condense::{condense_bilevel, discrete_graphs, CondenseRun, StepRecord};
use graphcond::diagnostics::{beta_sweep, random_bound_instance, term_trajectory, theorem1_check};
use graphcond::eval::evaluate_sets;
use graphcond::model::Architecture;
use graphcond::toy::toy_dataset;
use graphcond::{
    condense, config_hash, parse_tu_dataset, read_condensed, split_dataset, write_condensed, write_selected,
    EvalReport, Graph, GraphDataset, Method, Provenance,
};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TOY_PER_CLASS};

pub const CONFIG_FILE: &str = "config.json";
pub const STEPS_FILE: &str = "steps.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.json";

pub fn load_dataset(cfg: &RunConfig) -> Result<GraphDataset> {
    if cfg.toy {
        return Ok(toy_dataset(TOY_PER_CLASS, cfg.split_seed)?);
    }
    let name = cfg.dataset.as_deref().context("no dataset configured")?;
    let dir = cfg.dataset_dir().context("no dataset configured")?;
    let ds = parse_tu_dataset(&dir, name)?;
    Ok(split_dataset(ds, (0.8, 0.1, 0.1), cfg.split_seed)?)
}

/// A condensed or selected set before discretization.
pub enum Built {
    Learned(CondenseRun),
    Selected(Vec<Graph>),
}

impl Built {
    pub fn graphs(&self, cfg: &RunConfig, seed: u64) -> Result<Vec<Graph>> {
        Ok(match self {
            Built::Learned(run) => discrete_graphs(&run.set, cfg.eval.discretization, seed)?,
            Built::Selected(g) => g.clone(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingCache {
    key: String,
    indices: Vec<usize>,
    embeddings: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

fn embedding_key(ds: &GraphDataset, cfg: &RunConfig, seed: u64) -> Result<String> {
    let model = cfg.eval.model_config(ds.feature_dim(), ds.num_classes());
    Ok(config_hash(&(
        ds.name(),
        cfg.toy,
        cfg.split_seed,
        &model,
        cfg.eval.pretrain_epochs,
        cfg.eval.lr,
        seed,
    ))?)
}

/// Pretrained embeddings, read from `cache` when its key matches and written
/// there otherwise.
pub fn embeddings(ds: &GraphDataset, cfg: &RunConfig, seed: u64, cache: Option<&Path>) -> Result<EmbeddingTable> {
    let key = embedding_key(ds, cfg, seed)?;
    if let Some(path) = cache.filter(|p| p.exists()) {
        let text = fs::read_to_string(path)?;
        if let Ok(c) = serde_json::from_str::<EmbeddingCache>(&text) {
            if c.key == key {
                let cols = c.embeddings.first().map_or(0, Vec::len);
                let flat: Vec<f64> = c.embeddings.into_iter().flatten().collect();
                return Ok(EmbeddingTable {
                    indices: c.indices,
                    embeddings: Array2::from_shape_vec((c.labels.len(), cols), flat)?,
                    labels: c.labels,
                    num_classes: c.num_classes,
                });
            }
        }
    }
    let model = cfg.eval.model_config(ds.feature_dim(), ds.num_classes());
    let table = pretrain_embeddings(ds, &model, cfg.eval.pretrain_epochs, cfg.eval.lr, seed)?;
    if let Some(path) = cache {
        let c = EmbeddingCache {
            key,
            indices: table.indices.clone(),
            embeddings: table.embeddings.rows().into_iter().map(|r| r.to_vec()).collect(),
            labels: table.labels.clone(),
            num_classes: table.num_classes,
        };
        fs::write(path, serde_json::to_string(&c)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(table)
}

/// Runs `method` under `seed` with the rest of `cfg`.
pub fn build(ds: &GraphDataset, cfg: &RunConfig, method: Method, seed: u64, cache: Option<&Path>) -> Result<Built> {
    let ccfg = graphcond::CondenseConfig {
        seed,
        ..cfg.condense.clone()
    };
    let gpc = ccfg.graphs_per_class;
    Ok(match method {
        Method::Doscond if cfg.bilevel => Built::Learned(condense_bilevel(ds, &ccfg, &cfg.nested)?),
        Method::Doscond => Built::Learned(condense(ds, &ccfg)?),
        Method::Dcg => Built::Learned(dcg_condense(ds, &ccfg)?),
        Method::Random => Built::Selected(selected_graphs(ds, &random_select(ds, gpc, seed)?)),
        Method::Herding | Method::Kcenter => {
            let table = embeddings(ds, cfg, seed, cache)?;
            let idx = if method == Method::Herding {
                herding_select(&table, gpc)?
            } else {
                kcenter_select(&table, gpc)?
            };
            Built::Selected(selected_graphs(ds, &idx))
        }
    })
}

fn write_steps(path: &Path, log: &[StepRecord]) -> Result<()> {
    let mut body = String::from("step,class,match_loss,reg_loss,tau,mean_sigma_omega\n");
    for r in log {
        body.push_str(&format!(
            "{},{},{:?},{:?},{:?},{:?}\n",
            r.step, r.class, r.match_loss, r.reg_loss, r.tau, r.mean_sigma_omega
        ));
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Timing {
    seconds: f64,
}

fn default_out(cfg: &RunConfig, method: Method) -> PathBuf {
    let name = if cfg.toy {
        "toy"
    } else {
        cfg.dataset.as_deref().unwrap_or("dataset")
    };
    PathBuf::from("runs").join(format!(
        "{name}_{}_gpc{}_seed{}",
        method.name(),
        cfg.condense.graphs_per_class,
        cfg.condense.seed
    ))
}

/// Condenses or selects a set and writes it with its manifest, config,
/// step log and timing. Returns the output directory.
pub fn produce(cfg: &RunConfig, method: Method, out: Option<PathBuf>) -> Result<PathBuf> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let out = out.unwrap_or_else(|| default_out(cfg, method));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let seed = cfg.condense.seed;
    let cfg = RunConfig { method, ..cfg.clone() };
    let start = Instant::now();
    let built = build(&ds, &cfg, method, seed, Some(&out.join(EMBEDDINGS_FILE)))?;
    let seconds = start.elapsed().as_secs_f64();
    let provenance = Provenance {
        method: method.name().into(),
        seed,
        config_hash: config_hash(&cfg)?,
    };
    match &built {
        Built::Learned(run) => {
            write_condensed(&run.set, cfg.eval.discretization, &provenance, &out)?;
            write_steps(&out.join(STEPS_FILE), &run.log)?;
        }
        Built::Selected(graphs) => {
            write_selected(graphs, ds.num_classes(), &provenance, &out)?;
        }
    }
    cfg.write(&out.join(CONFIG_FILE))?;
    fs::write(out.join(TIMING_FILE), serde_json::to_string(&Timing { seconds })?)?;
    println!(
        "{} {} gpc={} seed={} graphs={} seconds={seconds:.2} out={}",
        method.name(),
        ds.name(),
        cfg.condense.graphs_per_class,
        seed,
        cfg.condense.graphs_per_class * ds.num_classes(),
        out.display()
    );
    Ok(out)
}

/// Evaluates the set in `dir`; further condensation seeds are rebuilt from
/// the configuration stored next to it.
pub fn evaluate(
    dir: &Path,
    overrides: impl FnOnce(&mut RunConfig) -> Result<()>,
    out: Option<PathBuf>,
) -> Result<EvalReport> {
    let set = read_condensed(dir)?;
    let stored = RunConfig::load(&dir.join(CONFIG_FILE))?;
    if config_hash(&stored)? != set.manifest.config_hash {
        bail!(graphcond::Error::ManifestMismatch(format!(
            "{} does not match the manifest's config_hash",
            dir.join(CONFIG_FILE).display()
        )));
    }
    let mut cfg = stored;
    overrides(&mut cfg)?;
    cfg.validate()?;
    let method: Method = set.manifest.method.parse()?;
    let ds = load_dataset(&cfg)?;
    let base = set.manifest.seed;
    let first_seconds = fs::read_to_string(dir.join(TIMING_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<Timing>(&t).ok())
        .map_or(0.0, |t| t.seconds);
    let rest: Vec<(Vec<Graph>, f64)> = (1..cfg.eval.cseeds as u64)
        .into_par_iter()
        .map(|cs| {
            let start = Instant::now();
            let built = build(&ds, &cfg, method, base + cs, None)?;
            let graphs = built.graphs(&cfg, base + cs)?;
            Ok((graphs, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let mut sets = vec![(set.graphs, first_seconds)];
    sets.extend(rest);
    let report = evaluate_sets(
        &ds,
        method.name(),
        set.manifest.graphs_per_class,
        base,
        &sets,
        &cfg.eval,
    )?;
    let out = out.unwrap_or_else(|| dir.to_path_buf());
    fs::create_dir_all(&out)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    fs::write(out.join(REPORT_JSON), json)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(out.join(REPORT_CSV), csv)?;
    println!(
        "{} {} gpc={} metric={:?} runs={} mean={:.4} std={:.4} out={}",
        report.method,
        report.dataset,
        report.gpc,
        report.metric,
        report.runs.len(),
        report.mean,
        report.std,
        out.display()
    );
    Ok(report)
}

/// Which diagnostics to produce.
#[derive(Debug, Clone)]
pub struct DiagnoseRequest {
    pub terms: bool,
    pub term_epochs: usize,
    pub bound_trials: usize,
    pub betas: Option<Vec<f64>>,
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

pub const TERMS_FILE: &str = "terms.csv";
pub const THEOREM_FILE: &str = "theorem1.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

pub fn diagnose(cfg: &RunConfig, req: &DiagnoseRequest, out: Option<PathBuf>) -> Result<PathBuf> {
    cfg.validate()?;
    let out = out.unwrap_or_else(|| PathBuf::from("runs").join("diagnostics"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    if req.terms {
        let ds = load_dataset(cfg)?;
        let ccfg = graphcond::CondenseConfig {
            architecture: Architecture::Sgc,
            ..cfg.condense.clone()
        };
        let rows = term_trajectory(&ds, &ccfg, ccfg.horizon, req.term_epochs)?;
        write_csv(
            &out.join(TERMS_FILE),
            "epoch,l1,l2",
            rows.iter().map(|r| format!("{},{:?},{:?}", r.epoch, r.l1, r.l2)),
        )?;
        println!("terms rows={} out={}", rows.len(), out.join(TERMS_FILE).display());
    }
    if req.bound_trials > 0 {
        let reports = (0..req.bound_trials as u64)
            .into_par_iter()
            .map(|t| {
                let inst = random_bound_instance(cfg.condense.seed + t, cfg.condense.pooling)?;
                Ok(theorem1_check(&inst, &cfg.bounds)?)
            })
            .collect::<Result<Vec<_>>>()?;
        write_csv(
            &out.join(THEOREM_FILE),
            "trial,lhs,rhs,holds",
            reports
                .iter()
                .enumerate()
                .map(|(t, r)| format!("{t},{:?},{:?},{}", r.lhs, r.rhs, r.holds)),
        )?;
        let held = reports.iter().filter(|r| r.holds).count();
        println!(
            "theorem1 trials={} holds={held} out={}",
            reports.len(),
            out.join(THEOREM_FILE).display()
        );
    }
    if let Some(betas) = &req.betas {
        let ds = load_dataset(cfg)?;
        let rows = beta_sweep(&ds, &cfg.condense, &cfg.eval, betas)?;
        write_csv(
            &out.join(SWEEP_FILE),
            "beta,accuracy,sparsity",
            rows.iter()
                .map(|r| format!("{:?},{:?},{:?}", r.beta, r.accuracy, r.sparsity)),
        )?;
        println!("sweep rows={} out={}", rows.len(), out.join(SWEEP_FILE).display());
    }
    Ok(out)
}
