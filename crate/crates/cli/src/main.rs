//! `graphcond` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use graphcond::model::Architecture;
use graphcond::optim::OptimizerKind;
use graphcond::{DiscretizeMode, Method, Metric, Pooling};

use commands::DiagnoseRequest;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "graphcond",
    version,
    about = "Condense graph classification datasets by one-step gradient matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a synthetic set and write it with its manifest and step log.
    Condense {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        condense: CondenseFlags,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Build a baseline set: a coreset of real graphs or a DCG synthetic set.
    Baseline {
        #[arg(long)]
        method: Method,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        condense: CondenseFlags,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Train models on a written set and score them on the test split.
    Evaluate {
        /// Directory written by `condense` or `baseline`.
        #[arg(long)]
        condensed: PathBuf,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        condense: CondenseFlags,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Export bound-term trajectories, bound checks and the sparsity sweep.
    Diagnose {
        /// Write the l1/l2 trajectory.
        #[arg(long)]
        terms: bool,
        #[arg(long, default_value_t = 10)]
        term_epochs: usize,
        /// Check the loss bound on this many random instances.
        #[arg(long, default_value_t = 0)]
        bound_trials: usize,
        /// Run the sparsity sweep.
        #[arg(long)]
        sweep: bool,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,1,10")]
        betas: Vec<f64>,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        condense: CondenseFlags,
        #[command(flatten)]
        eval: EvalFlags,
    },
}

#[derive(Args, Default)]
struct DataFlags {
    /// TU dataset name, read from `<data-dir>/<name>/`.
    #[arg(long)]
    dataset: Option<String>,
    /// Defaults to $DOSCOND_DATA_DIR, then `data`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use the built-in triangle/path dataset.
    #[arg(long)]
    toy: bool,
    #[arg(long)]
    split_seed: Option<u64>,
    /// Condensation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Default)]
struct CondenseFlags {
    #[arg(long)]
    gpc: Option<usize>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    lr_omega: Option<f64>,
    #[arg(long)]
    lr_feat: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    tau_final: Option<f64>,
    /// Pooling of both the matching and the evaluation model.
    #[arg(long)]
    pooling: Option<Pooling>,
    /// Architecture of the matching model.
    #[arg(long)]
    arch: Option<Architecture>,
    /// Depth of both the matching and the evaluation model.
    #[arg(long)]
    depth: Option<usize>,
    /// Hidden width of both the matching and the evaluation model.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Optimizer of the synthetic set.
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// Nested trajectory matching instead of one-step matching.
    #[arg(long)]
    bilevel: bool,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    outer: Option<usize>,
    #[arg(long)]
    discretization: Option<DiscretizeMode>,
}

#[derive(Args, Default)]
struct EvalFlags {
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    cseeds: Option<usize>,
    #[arg(long)]
    tseeds: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl DataFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.dataset.is_some() {
            cfg.dataset = self.dataset.clone();
            cfg.toy = false;
        }
        if self.data_dir.is_some() {
            cfg.data_dir = self.data_dir.clone();
        }
        if self.toy {
            cfg.toy = true;
            cfg.dataset = None;
        }
        set(&mut cfg.split_seed, self.split_seed);
        set(&mut cfg.condense.seed, self.seed);
    }
}

impl CondenseFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.condense;
        set(&mut c.graphs_per_class, self.gpc);
        set(&mut c.k1, self.k1);
        set(&mut c.k2, self.k2);
        set(&mut c.lr_omega, self.lr_omega);
        set(&mut c.lr_features, self.lr_feat);
        set(&mut c.beta, self.beta);
        if self.epsilon.is_some() {
            c.epsilon = self.epsilon;
        }
        set(&mut c.tau0, self.tau0);
        set(&mut c.tau_final, self.tau_final);
        set(&mut c.architecture, self.arch);
        set(&mut c.batch_size, self.batch);
        set(&mut c.optimizer, self.optimizer);
        set(&mut c.pooling, self.pooling);
        set(&mut c.depth, self.depth);
        set(&mut c.hidden_dim, self.hidden);
        set(&mut cfg.eval.pooling, self.pooling);
        set(&mut cfg.eval.depth, self.depth);
        set(&mut cfg.eval.hidden_dim, self.hidden);
        set(&mut cfg.eval.discretization, self.discretization);
        if self.bilevel {
            cfg.bilevel = true;
        }
        set(&mut cfg.nested.inner_steps, self.inner);
        set(&mut cfg.nested.outer_steps, self.outer);
    }
}

impl EvalFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.eval;
        set(&mut e.metric, self.metric);
        set(&mut e.epochs, self.epochs);
        set(&mut e.lr, self.lr);
        set(&mut e.cseeds, self.cseeds);
        set(&mut e.tseeds, self.tseeds);
    }
}

/// Applies `--config` then the flags on top of `cfg`.
fn layer(mut cfg: RunConfig, data: &DataFlags, condense: &CondenseFlags, eval: &EvalFlags) -> Result<RunConfig> {
    if let Some(path) = &data.config {
        cfg = RunConfig::load(path)?;
    }
    data.apply(&mut cfg);
    condense.apply(&mut cfg);
    eval.apply(&mut cfg);
    Ok(cfg)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(0) => anyhow::bail!(graphcond::Error::InvalidArgument("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Condense { data, condense, eval } => {
            let cfg = layer(RunConfig::default(), &data, &condense, &eval)?;
            cfg.validate()?;
            with_pool(data.jobs, || {
                commands::produce(&cfg, Method::Doscond, data.out.clone()).map(drop)
            })
        }
        Command::Baseline {
            method,
            data,
            condense,
            eval,
        } => {
            if method == Method::Doscond {
                anyhow::bail!(graphcond::Error::InvalidArgument("use `condense` for doscond".into()));
            }
            let cfg = layer(RunConfig::default(), &data, &condense, &eval)?;
            cfg.validate()?;
            with_pool(data.jobs, || {
                commands::produce(&cfg, method, data.out.clone()).map(drop)
            })
        }
        Command::Evaluate {
            condensed,
            data,
            condense,
            eval,
        } => with_pool(data.jobs, || {
            let overrides = |cfg: &mut RunConfig| {
                *cfg = layer(cfg.clone(), &data, &condense, &eval)?;
                Ok(())
            };
            commands::evaluate(&condensed, overrides, data.out.clone()).map(drop)
        }),
        Command::Diagnose {
            terms,
            term_epochs,
            bound_trials,
            sweep,
            betas,
            data,
            condense,
            eval,
        } => {
            let cfg = layer(RunConfig::default(), &data, &condense, &eval)?;
            cfg.validate()?;
            let all = !terms && bound_trials == 0 && !sweep;
            let req = DiagnoseRequest {
                terms: terms || all,
                term_epochs,
                bound_trials: if all { 5 } else { bound_trials },
                betas: (sweep || all).then_some(betas),
            };
            with_pool(data.jobs, || commands::diagnose(&cfg, &req, data.out.clone()).map(drop))
        }
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<graphcond::Error>())
        .map_or_else(
            || {
                if err.chain().any(|e| e.is::<std::io::Error>()) {
                    "io"
                } else {
                    "error"
                }
            },
            graphcond::Error::kind,
        )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage message={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error kind={} message={message:?}", error_kind(&err));
            ExitCode::FAILURE
        }
    }
}
