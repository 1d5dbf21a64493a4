//! Abstraction layers: each layer keeps the best-ranked nodes of the layer
//! below, their induced edges, and their positions unchanged.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::Point;
use crate::graph::{Graph, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum AbstractionError {
    #[error("invalid abstraction config: {0}")]
    Config(String),
    #[error("cannot rank an empty graph")]
    EmptyGraph,
    #[error("no node of layer {layer} reaches threshold {threshold}")]
    EmptyLayer { layer: usize, threshold: f64 },
    #[error("layer {layer} has no position for node {node}")]
    MissingPosition { layer: usize, node: NodeId },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Degree,
    #[default]
    Pagerank,
    HitsAuthority,
}

impl CriterionKind {
    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Degree => "degree",
            CriterionKind::Pagerank => "pagerank",
            CriterionKind::HitsAuthority => "hits_authority",
        }
    }
}

/// How many nodes survive into the next layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Top `ceil(f * n)` nodes, `f` in `(0, 1]`.
    KeepFraction(f64),
    /// Every node scoring at least this much.
    Threshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractionCriterion {
    pub kind: CriterionKind,
    pub selection: Selection,
}

impl Default for AbstractionCriterion {
    fn default() -> Self {
        AbstractionCriterion { kind: CriterionKind::Pagerank, selection: Selection::KeepFraction(0.5) }
    }
}

impl AbstractionCriterion {
    pub fn keep_fraction(kind: CriterionKind, f: f64) -> Self {
        AbstractionCriterion { kind, selection: Selection::KeepFraction(f) }
    }

    pub fn threshold(kind: CriterionKind, t: f64) -> Self {
        AbstractionCriterion { kind, selection: Selection::Threshold(t) }
    }

    fn validate(&self) -> Result<(), AbstractionError> {
        match self.selection {
            Selection::KeepFraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(AbstractionError::Config(format!("keep fraction {f} outside (0, 1]")))
            }
            Selection::Threshold(t) if t.is_nan() => Err(AbstractionError::Config("threshold is NaN".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub index: usize,
    pub graph: Graph,
    pub layout: HashMap<NodeId, Point>,
    /// Criterion that produced this layer; `None` for layer 0.
    pub provenance: Option<AbstractionCriterion>,
}

impl Layer {
    pub fn base(graph: Graph, layout: HashMap<NodeId, Point>) -> Layer {
        Layer { index: 0, graph, layout, provenance: None }
    }
}

/// Extension point for abstractions that merge groups of nodes into single
/// nodes. Returns the condensed graph and a map from every input node to
/// the node that now represents it.
pub trait MergeAbstraction {
    fn merge(&self, graph: &Graph) -> (Graph, HashMap<NodeId, NodeId>);
}

/// `in + out` degree per node in [`Graph::nodes`] order. Parallel edges
/// count individually and a self-loop adds 2.
pub fn degree_scores(g: &Graph) -> Vec<f64> {
    let mut deg = vec![0.0; g.node_count()];
    for (u, v) in g.index_pairs() {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    deg
}

/// Link structure with multiplicity; undirected edges link both ways.
struct Links {
    /// Sources of the links into each node.
    incoming: Vec<Vec<usize>>,
    /// Targets of the links out of each node.
    outgoing: Vec<Vec<usize>>,
}

impl Links {
    fn new(g: &Graph) -> Links {
        let n = g.node_count();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (u, v) in g.index_pairs() {
            outgoing[u].push(v);
            incoming[v].push(u);
            if !g.is_directed() && u != v {
                outgoing[v].push(u);
                incoming[u].push(v);
            }
        }
        Links { incoming, outgoing }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PageRankConfig {
    pub damping: f64,
    /// Stop once the L1 change of one iteration drops below this.
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig { damping: 0.85, eps: 1e-10, max_iter: 200 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageRank {
    /// Scores in [`Graph::nodes`] order, summing to 1.
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration with uniform teleport; rank held by nodes without out
/// links is spread uniformly.
pub fn pagerank(g: &Graph, cfg: &PageRankConfig, exec: Execution) -> Result<PageRank, AbstractionError> {
    let n = g.node_count();
    if n == 0 {
        return Err(AbstractionError::EmptyGraph);
    }
    let links = Links::new(g);
    let out_deg: Vec<f64> = links.outgoing.iter().map(|o| o.len() as f64).collect();
    let nf = n as f64;
    let d = cfg.damping;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&u| out_deg[u] == 0.0).map(|u| rank[u]).sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        let (rank_ref, links_ref, out_ref) = (&rank, &links, &out_deg);
        exec.fill(&mut next, |v| {
            base + d * links_ref.incoming[v].iter().map(|&u| rank_ref[u] / out_ref[u]).sum::<f64>()
        });
        let change: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if change < cfg.eps {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("pagerank did not converge within {} iterations", cfg.max_iter);
    }
    Ok(PageRank { scores: rank, iterations, converged })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitsConfig {
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for HitsConfig {
    fn default() -> Self {
        HitsConfig { eps: 1e-10, max_iter: 200 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hits {
    /// Unit L2 norm, [`Graph::nodes`] order.
    pub hubs: Vec<f64>,
    pub authorities: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// No links to reinforce: both vectors fell back to uniform.
    pub degenerate: bool,
}

fn normalize_l2(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Mutual reinforcement: authority is the sum of hub scores pointing in,
/// hub the sum of authority scores pointed at; both L2-normalized per step.
pub fn hits(g: &Graph, cfg: &HitsConfig, exec: Execution) -> Result<Hits, AbstractionError> {
    let n = g.node_count();
    if n == 0 {
        return Err(AbstractionError::EmptyGraph);
    }
    let links = Links::new(g);
    let uniform = 1.0 / (n as f64).sqrt();
    let mut hubs = vec![uniform; n];
    let mut auth = vec![uniform; n];
    let mut next_auth = vec![0.0; n];
    let mut next_hubs = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let (h, l) = (&hubs, &links);
        exec.fill(&mut next_auth, |v| l.incoming[v].iter().map(|&u| h[u]).sum());
        if !normalize_l2(&mut next_auth) {
            log::warn!("hits: graph has no links, returning uniform scores");
            return Ok(Hits {
                hubs: vec![uniform; n],
                authorities: vec![uniform; n],
                iterations,
                converged: true,
                degenerate: true,
            });
        }
        let a = &next_auth;
        exec.fill(&mut next_hubs, |u| l.outgoing[u].iter().map(|&v| a[v]).sum());
        normalize_l2(&mut next_hubs);
        let change: f64 = auth.iter().zip(&next_auth).map(|(x, y)| (x - y).abs()).sum::<f64>()
            + hubs.iter().zip(&next_hubs).map(|(x, y)| (x - y).abs()).sum::<f64>();
        std::mem::swap(&mut auth, &mut next_auth);
        std::mem::swap(&mut hubs, &mut next_hubs);
        if change < cfg.eps {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("hits did not converge within {} iterations", cfg.max_iter);
    }
    Ok(Hits { hubs, authorities: auth, iterations, converged, degenerate: false })
}

/// Scores under `kind` with default parameters, [`Graph::nodes`] order.
pub fn scores(g: &Graph, kind: CriterionKind, exec: Execution) -> Result<Vec<f64>, AbstractionError> {
    match kind {
        CriterionKind::Degree => Ok(degree_scores(g)),
        CriterionKind::Pagerank => Ok(pagerank(g, &PageRankConfig::default(), exec)?.scores),
        CriterionKind::HitsAuthority => Ok(hits(g, &HitsConfig::default(), exec)?.authorities),
    }
}

/// Indices of the surviving nodes of `g` under `selection`, best first.
/// Equal scores keep the lower [`NodeId`] first.
pub fn select_survivors(g: &Graph, scores: &[f64], selection: Selection) -> Vec<usize> {
    let nodes = g.nodes();
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(nodes[a].id.cmp(&nodes[b].id)));
    match selection {
        Selection::KeepFraction(f) => {
            let keep = ((f * nodes.len() as f64 - 1e-9).ceil() as usize).clamp(1, nodes.len());
            order.truncate(keep);
        }
        Selection::Threshold(t) => order.retain(|&i| scores[i] >= t),
    }
    order
}

pub fn build_layer(prev: &Layer, crit: &AbstractionCriterion, exec: Execution) -> Result<Layer, AbstractionError> {
    crit.validate()?;
    if prev.graph.is_empty() {
        return Err(AbstractionError::EmptyGraph);
    }
    let s = scores(&prev.graph, crit.kind, exec)?;
    let survivors = select_survivors(&prev.graph, &s, crit.selection);
    if survivors.is_empty() {
        let threshold = match crit.selection {
            Selection::Threshold(t) => t,
            Selection::KeepFraction(_) => f64::NAN,
        };
        return Err(AbstractionError::EmptyLayer { layer: prev.index + 1, threshold });
    }
    let keep: HashSet<NodeId> = survivors.iter().map(|&i| prev.graph.nodes()[i].id).collect();
    let graph = prev.graph.induced_subgraph(|id| keep.contains(&id));
    let mut layout = HashMap::with_capacity(keep.len());
    for n in graph.nodes() {
        let p = prev
            .layout
            .get(&n.id)
            .ok_or(AbstractionError::MissingPosition { layer: prev.index, node: n.id })?;
        layout.insert(n.id, *p);
    }
    Ok(Layer { index: prev.index + 1, graph, layout, provenance: Some(*crit) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hierarchy {
    pub layers: Vec<Layer>,
    /// Why construction stopped before the requested depth, if it did.
    pub truncated: Option<String>,
}

/// Builds layers `0..num_layers` bottom-up from `layer0`, stopping early
/// when a layer would come out empty.
pub fn build_hierarchy(
    layer0: Layer,
    crit: &AbstractionCriterion,
    num_layers: usize,
    exec: Execution,
) -> Result<Hierarchy, AbstractionError> {
    if num_layers == 0 {
        return Err(AbstractionError::Config("at least one layer is required".into()));
    }
    crit.validate()?;
    let mut layers = vec![layer0];
    let mut truncated = None;
    while layers.len() < num_layers {
        let prev = layers.last().expect("layer 0 present");
        if prev.graph.is_empty() {
            truncated = Some(format!("layer {} is empty", prev.index));
            break;
        }
        match build_layer(prev, crit, exec) {
            Ok(layer) => layers.push(layer),
            Err(e @ AbstractionError::EmptyLayer { .. }) => {
                log::info!("hierarchy stops at {} layers: {e}", layers.len());
                truncated = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Hierarchy { layers, truncated })
}
