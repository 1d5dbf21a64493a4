//! Command-line front end: `gvdb preprocess` and `gvdb serve`.

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gvdb_core::abstraction::{AbstractionCriterion, CriterionKind, Selection};
use gvdb_core::graph::{parse_edge_list, parse_ntriples_subset, Graph};
use gvdb_core::layout::{LayoutAlgorithm, LayoutKind};
use gvdb_core::organize::ArrangeConfig;
use gvdb_core::pipeline::{preprocess, PipelineConfig, PreprocessReport};
use gvdb_core::store::Store;
use gvdb_core::viewport::DEFAULT_CHUNK_SIZE;
use gvdb_core::Execution;

use crate::api::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "gvdb", version, about = "Multi-level exploration of large labeled graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition, lay out, organize, abstract and index a graph into a store file.
    Preprocess(PreprocessArgs),
    /// Serve a store file over HTTP.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InputFormat {
    Edgelist,
    Ntriples,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LayoutChoice {
    Force,
    Circular,
    Grid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CriterionChoice {
    Degree,
    Pagerank,
    Hits,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "edgelist")]
    pub format: InputFormat,
    /// Partition count [default: one per 50,000 edges]
    #[arg(long)]
    pub partitions: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest part size relative to the ideal n/k.
    #[arg(long, default_value_t = 1.1)]
    pub balance: f64,
    #[arg(long, value_enum, default_value = "force")]
    pub layout: LayoutChoice,
    #[arg(long, default_value_t = LayoutAlgorithm::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = LayoutAlgorithm::default().ideal_edge_length)]
    pub edge_length: f64,
    /// Spacing between partition boxes.
    #[arg(long, default_value_t = ArrangeConfig::default().gap)]
    pub gap: f64,
    #[arg(long, value_enum, default_value = "pagerank")]
    pub criterion: CriterionChoice,
    /// Number of layers including the input graph.
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    /// Fraction of nodes kept per layer.
    #[arg(long, conflicts_with = "threshold")]
    pub keep_fraction: Option<f64>,
    /// Keep nodes scoring at least this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
    /// Run every step on one thread.
    #[arg(long)]
    pub sequential: bool,
    /// Also write the timing report as JSON.
    #[arg(long)]
    pub report_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
}

impl PreprocessArgs {
    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let kind = match self.criterion {
            CriterionChoice::Degree => CriterionKind::Degree,
            CriterionChoice::Pagerank => CriterionKind::Pagerank,
            CriterionChoice::Hits => CriterionKind::HitsAuthority,
        };
        let selection = match (self.keep_fraction, self.threshold) {
            (_, Some(t)) => Selection::Threshold(t),
            (Some(f), None) => Selection::KeepFraction(f),
            (None, None) => AbstractionCriterion::default().selection,
        };
        let layout_kind = match self.layout {
            LayoutChoice::Force => LayoutKind::ForceDirected,
            LayoutChoice::Circular => LayoutKind::Circular,
            LayoutChoice::Grid => LayoutKind::Grid,
        };
        if self.layers == 0 {
            bail!("--layers must be at least 1");
        }
        Ok(PipelineConfig {
            partitions: self.partitions,
            balance_tolerance: self.balance,
            seed: self.seed,
            layout: LayoutAlgorithm {
                kind: layout_kind,
                iterations: self.iterations,
                ideal_edge_length: self.edge_length,
                ..LayoutAlgorithm::default()
            },
            arrange: ArrangeConfig { gap: self.gap },
            criterion: AbstractionCriterion { kind, selection },
            layers: self.layers,
            exec: if self.sequential { Execution::Sequential } else { Execution::Parallel },
            dataset: self
                .input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        })
    }
}

pub fn read_graph(path: &PathBuf, format: InputFormat) -> anyhow::Result<Graph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let graph = match format {
        InputFormat::Edgelist => parse_edge_list(&text),
        InputFormat::Ntriples => parse_ntriples_subset(&text),
    }
    .with_context(|| format!("parsing {}", path.display()))?;
    for w in graph.warnings() {
        log::warn!("{w}");
    }
    Ok(graph)
}

pub fn run_preprocess(args: &PreprocessArgs) -> anyhow::Result<PreprocessReport> {
    let cfg = args.pipeline_config()?;
    let graph = read_graph(&args.input, args.format)?;
    let (_, report) = preprocess(&graph, &cfg, Some(&args.output))?;
    if let Some(path) = &args.report_json {
        std::fs::write(path, serde_json::to_vec_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report)
}

pub async fn run_serve(args: &ServeArgs) -> anyhow::Result<()> {
    let store = Store::load(&args.store).with_context(|| format!("loading {}", args.store.display()))?;
    if args.chunk_size == 0 {
        bail!("--chunk-size must be at least 1");
    }
    let app = router(AppState::new(store).with_chunk_size(args.chunk_size));
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
