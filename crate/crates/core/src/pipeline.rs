//! The offline preprocessing pipeline: partition, lay out, organize,
//! abstract, index.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::abstraction::{build_hierarchy, AbstractionCriterion, AbstractionError, Layer};
use crate::exec::Execution;
use crate::graph::Graph;
use crate::layout::{layout_partitions, LayoutAlgorithm, LayoutError};
use crate::organize::{arrange, crossing_edges, total_crossing_length, ArrangeConfig, ArrangeError};
use crate::partition::{edge_cut, partition, PartitionConfig, PartitionError};
use crate::store::{build_store, Store, StoreError, StoreInfo};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("step 1 (partitioning) failed: {0}")]
    Partition(#[from] PartitionError),
    #[error("step 2 (layout) failed: {0}")]
    Layout(#[from] LayoutError),
    #[error("step 3 (organizer) failed: {0}")]
    Arrange(#[from] ArrangeError),
    #[error("step 4 (abstraction) failed: {0}")]
    Abstraction(#[from] AbstractionError),
    #[error("step 5 (indexing) failed: {0}")]
    Store(#[from] StoreError),
    #[error("cannot preprocess an empty graph")]
    EmptyGraph,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    /// Partition count; `None` picks [`PartitionConfig::default_k`].
    pub partitions: Option<usize>,
    pub balance_tolerance: f64,
    pub seed: u64,
    pub layout: LayoutAlgorithm,
    pub arrange: ArrangeConfig,
    pub criterion: AbstractionCriterion,
    pub layers: usize,
    pub exec: Execution,
    pub dataset: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            partitions: None,
            balance_tolerance: PartitionConfig::default().balance_tolerance,
            seed: 0,
            layout: LayoutAlgorithm::default(),
            arrange: ArrangeConfig::default(),
            criterion: AbstractionCriterion::default(),
            layers: 5,
            exec: Execution::default(),
            dataset: String::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepTiming {
    pub step: &'static str,
    pub name: &'static str,
    pub seconds: f64,
}

pub const STEP_NAMES: [(&str, &str); 5] = [
    ("Step 1", "partitioning"),
    ("Step 2", "partition layout"),
    ("Step 3", "partition organizer"),
    ("Step 4", "abstraction layers"),
    ("Step 5", "indexing"),
];

#[derive(Clone, Debug, Serialize)]
pub struct PreprocessReport {
    pub nodes: usize,
    pub edges: usize,
    pub partitions: usize,
    pub edge_cut: usize,
    pub crossing_length: f64,
    pub layers: usize,
    /// Set when the hierarchy stopped short of the requested depth.
    pub truncated: Option<String>,
    pub steps: Vec<StepTiming>,
    /// Wall clock from the start of step 1 to the end of step 5.
    pub total_seconds: f64,
}

impl fmt::Display for PreprocessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "graph: {} nodes, {} edges", self.nodes, self.edges)?;
        writeln!(f, "partitions: {} (edge cut {})", self.partitions, self.edge_cut)?;
        writeln!(f, "layers: {}", self.layers)?;
        if let Some(why) = &self.truncated {
            writeln!(f, "  hierarchy truncated: {why}")?;
        }
        for s in &self.steps {
            writeln!(f, "{:<7} {:<20} {:>10.3} s", s.step, s.name, s.seconds)?;
        }
        write!(f, "{:<28} {:>10.3} s", "total", self.total_seconds)
    }
}

struct Clock {
    start: Instant,
    last: Instant,
    steps: Vec<StepTiming>,
}

impl Clock {
    fn start() -> Clock {
        let now = Instant::now();
        Clock { start: now, last: now, steps: Vec::new() }
    }

    fn lap(&mut self) {
        let now = Instant::now();
        let (step, name) = STEP_NAMES[self.steps.len()];
        self.steps.push(StepTiming { step, name, seconds: secs(now - self.last) });
        self.last = now;
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs steps 1 to 5 on `graph`. When `output` is given the store file is
/// written as part of step 5.
pub fn preprocess(
    graph: &Graph,
    cfg: &PipelineConfig,
    output: Option<&Path>,
) -> Result<(Store, PreprocessReport), PipelineError> {
    if graph.is_empty() {
        return Err(PipelineError::EmptyGraph);
    }
    let k = cfg
        .partitions
        .unwrap_or_else(|| PartitionConfig::default_k(graph.edge_count()))
        .min(graph.node_count());
    let pcfg = PartitionConfig { k, balance_tolerance: cfg.balance_tolerance, seed: cfg.seed };
    let mut clock = Clock::start();

    let assignment = partition(graph, &pcfg)?;
    clock.lap();
    log::info!("partitioned into {k} parts, cut {}", assignment.cut_edges);

    let locals = layout_partitions(graph, &assignment, &cfg.layout, cfg.seed, cfg.exec)?;
    clock.lap();

    let crossings = crossing_edges(graph, &assignment)?;
    let global = arrange(&locals, &crossings, &cfg.arrange)?;
    let crossing_length = total_crossing_length(&global, &crossings)?;
    clock.lap();

    let hierarchy = build_hierarchy(Layer::base(graph.clone(), global.positions), &cfg.criterion, cfg.layers, cfg.exec)?;
    if let Some(why) = &hierarchy.truncated {
        log::warn!("hierarchy truncated: {why}");
    }
    clock.lap();

    let store = build_store(&hierarchy.layers, store_info(cfg, k), cfg.exec)?;
    if let Some(path) = output {
        store.save(path)?;
    }
    clock.lap();

    let report = PreprocessReport {
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        partitions: k,
        edge_cut: edge_cut(graph, &assignment)?,
        crossing_length,
        layers: hierarchy.layers.len(),
        truncated: hierarchy.truncated,
        steps: clock.steps,
        total_seconds: secs(clock.last - clock.start),
    };
    Ok((store, report))
}

fn store_info(cfg: &PipelineConfig, k: usize) -> StoreInfo {
    let params: BTreeMap<String, String> = [
        ("partitions", k.to_string()),
        ("balance_tolerance", cfg.balance_tolerance.to_string()),
        ("seed", cfg.seed.to_string()),
        ("layout", cfg.layout.kind.name().to_string()),
        ("iterations", cfg.layout.iterations.to_string()),
        ("edge_length", cfg.layout.ideal_edge_length.to_string()),
        ("gap", cfg.arrange.gap.to_string()),
        ("layers", cfg.layers.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    StoreInfo { dataset: cfg.dataset.clone(), params }
}
