//! Multi-layer triple store with spatial, id and label indexes.
//!
//! Every layer becomes one [`LayerTable`]: a row per edge holding both
//! endpoints (id, label), the edge label and the edge segment on the plane.
//! Nodes without incident edges get a degenerate row (no second node,
//! zero-length segment at the node) so window queries still find them.

mod codec;
pub mod rtree;
pub mod trie;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{AbstractionCriterion, Layer};
use crate::exec::Execution;
use crate::geometry::{Point, Rect};
use crate::graph::{stats_from_counts, GraphStats, NodeId};

pub use codec::{FORMAT_VERSION, MAGIC};
pub use rtree::PackedRTree;
pub use trie::LabelIndex;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown layer {0}")]
    UnknownLayer(usize),
    #[error("invalid window: min exceeds max on some axis")]
    InvalidWindow,
    #[error("node {node} not found in layer {layer}")]
    NotFound { layer: usize, node: NodeId },
    #[error("layer {layer}: no position for node {node}")]
    MissingPosition { layer: usize, node: NodeId },
    #[error("layer {layer}: edge references unknown node {node}")]
    UnknownEndpoint { layer: usize, node: NodeId },
    #[error("layer indices must be contiguous from 0, found {found} at position {expected}")]
    LayerOrder { expected: usize, found: usize },
    #[error("keyword must not be empty")]
    EmptyKeyword,
    #[error("store file is truncated")]
    Truncated,
    #[error("not a store file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported format version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed store file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Segment between the two endpoints of a row. When `directed`, `from` is
/// the source node's position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeGeometry {
    pub from: Point,
    pub to: Point,
    pub directed: bool,
}

impl EdgeGeometry {
    pub fn bbox(&self) -> Rect {
        Rect::from_segment(self.from, self.to)
    }

    pub fn intersects(&self, window: &Rect) -> bool {
        window.intersects_segment(self.from, self.to)
    }

    pub fn length(&self) -> f64 {
        self.from.distance(self.to)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleRow {
    pub node1_id: NodeId,
    pub node1_label: String,
    pub geometry: EdgeGeometry,
    pub edge_label: String,
    /// `None` on the degenerate row of an isolated node.
    pub node2_id: Option<NodeId>,
    pub node2_label: Option<String>,
}

impl TripleRow {
    pub fn is_node_row(&self) -> bool {
        self.node2_id.is_none()
    }

    pub(crate) fn sort_key(&self) -> (NodeId, Option<NodeId>) {
        (self.node1_id, self.node2_id)
    }

    fn position_of(&self, id: NodeId) -> Option<Point> {
        if self.node1_id == id {
            Some(self.geometry.from)
        } else if self.node2_id == Some(id) {
            Some(self.geometry.to)
        } else {
            None
        }
    }
}

/// Everything needed to render a node in focus mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: NodeId,
    pub label: String,
    pub position: Point,
    /// Edge rows with this node at either end; degenerate rows excluded.
    pub rows: Vec<TripleRow>,
}

impl NodeInfo {
    /// Ids of the adjacent nodes, sorted and deduplicated.
    pub fn neighbours(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .rows
            .iter()
            .filter_map(|r| if r.node1_id == self.id { r.node2_id } else { Some(r.node1_id) })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTable {
    pub(crate) index: usize,
    /// Sorted by `(node1_id, node2_id)`, input order among equals.
    pub(crate) rows: Vec<TripleRow>,
    pub(crate) spatial: PackedRTree,
    /// Row offsets for every node, covering both roles.
    pub(crate) ids: BTreeMap<NodeId, Vec<u32>>,
    pub(crate) labels: LabelIndex,
    pub(crate) stats: GraphStats,
}

impl LayerTable {
    pub fn build(layer: &Layer) -> Result<LayerTable, StoreError> {
        let g = &layer.graph;
        let missing = |node| StoreError::MissingPosition { layer: layer.index, node };
        let pos = |id: NodeId| layer.layout.get(&id).copied().ok_or_else(|| missing(id));
        let label = |id: NodeId| {
            g.label(id).map(str::to_string).ok_or(StoreError::UnknownEndpoint { layer: layer.index, node: id })
        };

        let mut rows = Vec::with_capacity(g.edge_count());
        let mut has_edge: HashSet<NodeId> = HashSet::new();
        for e in g.edges() {
            rows.push(TripleRow {
                node1_id: e.source,
                node1_label: label(e.source)?,
                geometry: EdgeGeometry { from: pos(e.source)?, to: pos(e.target)?, directed: g.is_directed() },
                edge_label: e.label.clone(),
                node2_id: Some(e.target),
                node2_label: Some(label(e.target)?),
            });
            has_edge.insert(e.source);
            has_edge.insert(e.target);
        }
        for n in g.nodes() {
            if !has_edge.contains(&n.id) {
                let p = pos(n.id)?;
                rows.push(TripleRow {
                    node1_id: n.id,
                    node1_label: n.label.clone(),
                    geometry: EdgeGeometry { from: p, to: p, directed: g.is_directed() },
                    edge_label: String::new(),
                    node2_id: None,
                    node2_label: None,
                });
            }
        }
        rows.sort_by_key(TripleRow::sort_key);

        let loops = g.edges().iter().filter(|e| e.source == e.target).count();
        let stats = stats_from_counts(g.node_count(), g.edge_count(), loops, g.is_directed());
        let labels = LabelIndex::build(g.nodes().iter().map(|n| (n.id, n.label.as_str())));
        Ok(Self::from_rows(layer.index, rows, labels, stats))
    }

    fn from_rows(index: usize, rows: Vec<TripleRow>, labels: LabelIndex, stats: GraphStats) -> LayerTable {
        let boxes: Vec<(Rect, u32)> = rows.iter().enumerate().map(|(i, r)| (r.geometry.bbox(), i as u32)).collect();
        let spatial = PackedRTree::bulk_load(&boxes, rtree::DEFAULT_NODE_SIZE);
        let ids = id_index(&rows);
        LayerTable { index, rows, spatial, ids, labels, stats }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn rows(&self) -> &[TripleRow] {
        &self.rows
    }

    pub fn stats(&self) -> GraphStats {
        self.stats
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn spatial_index(&self) -> &PackedRTree {
        &self.spatial
    }

    pub fn label_index(&self) -> &LabelIndex {
        &self.labels
    }

    /// Union of all row geometries.
    pub fn bounds(&self) -> Option<Rect> {
        self.spatial.levels.last().and_then(|top| top.iter().map(|e| e.bbox).reduce(|a, b| a.union(&b)))
    }

    /// Offsets of the rows whose segment meets `window`, ascending, which is
    /// ascending `(node1_id, node2_id)` order.
    pub fn window_offsets(&self, window: &Rect) -> Vec<u32> {
        let mut hits: Vec<u32> = Vec::new();
        self.spatial.visit(window, |i| {
            if self.rows[i as usize].geometry.intersects(window) {
                hits.push(i);
            }
        });
        hits.sort_unstable();
        hits
    }

    /// Borrowing form of [`Store::window_query`].
    pub fn window_rows<'a>(&'a self, window: &Rect, edge_labels: Option<&HashSet<String>>) -> Vec<&'a TripleRow> {
        self.window_offsets(window)
            .into_iter()
            .map(|i| &self.rows[i as usize])
            .filter(|r| match edge_labels {
                Some(allowed) => r.is_node_row() || allowed.contains(&r.edge_label),
                None => true,
            })
            .collect()
    }

    pub fn node_position(&self, id: NodeId) -> Option<(Point, &str)> {
        let first = *self.ids.get(&id)?.first()?;
        let row = &self.rows[first as usize];
        let label = if row.node1_id == id { &row.node1_label } else { row.node2_label.as_deref().unwrap_or_default() };
        Some((row.position_of(id)?, label))
    }

    pub fn incident_offsets(&self, id: NodeId) -> &[u32] {
        self.ids.get(&id).map_or(&[], Vec::as_slice)
    }
}

fn id_index(rows: &[TripleRow]) -> BTreeMap<NodeId, Vec<u32>> {
    let mut ids: BTreeMap<NodeId, Vec<u32>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        ids.entry(r.node1_id).or_default().push(i as u32);
        if let Some(n2) = r.node2_id {
            if n2 != r.node1_id {
                ids.entry(n2).or_default().push(i as u32);
            }
        }
    }
    ids
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub index: usize,
    pub bounds: Option<Rect>,
    pub node_count: usize,
    pub edge_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u16,
    pub dataset: String,
    pub directed: bool,
    pub criterion: Option<AbstractionCriterion>,
    pub layers: Vec<LayerSummary>,
    /// Free-form build parameters, recorded for reproducibility.
    pub params: BTreeMap<String, String>,
}

/// Descriptive fields recorded in the manifest at build time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StoreInfo {
    pub dataset: String,
    pub params: BTreeMap<String, String>,
}

/// The immutable, queryable multi-layer bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct Store {
    manifest: Manifest,
    layers: Vec<LayerTable>,
}

/// Materializes and indexes every layer; distinct layers build concurrently
/// under [`Execution::Parallel`].
pub fn build_store(layers: &[Layer], info: StoreInfo, exec: Execution) -> Result<Store, StoreError> {
    for (i, l) in layers.iter().enumerate() {
        if l.index != i {
            return Err(StoreError::LayerOrder { expected: i, found: l.index });
        }
    }
    let tables = exec.map(layers, LayerTable::build).into_iter().collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dataset: info.dataset,
        directed: layers.first().is_none_or(|l| l.graph.is_directed()),
        criterion: layers.iter().find_map(|l| l.provenance),
        layers: tables.iter().map(summary).collect(),
        params: info.params,
    };
    Ok(Store { manifest, layers: tables })
}

fn summary(t: &LayerTable) -> LayerSummary {
    LayerSummary { index: t.index, bounds: t.bounds(), node_count: t.stats.node_count, edge_count: t.stats.edge_count }
}

impl Store {
    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerTable] {
        &self.layers
    }

    pub fn layer(&self, layer: usize) -> Result<&LayerTable, StoreError> {
        self.layers.get(layer).ok_or(StoreError::UnknownLayer(layer))
    }

    /// Rows whose segment meets the closed window, ascending by
    /// `(node1_id, node2_id)`. With `edge_labels`, edge rows whose label is
    /// not in the set are dropped; node rows are always kept.
    pub fn window_query(
        &self,
        layer: usize,
        window: &Rect,
        edge_labels: Option<&HashSet<String>>,
    ) -> Result<Vec<TripleRow>, StoreError> {
        let table = self.layer(layer)?;
        if !window.is_valid() {
            return Err(StoreError::InvalidWindow);
        }
        Ok(table.window_rows(window, edge_labels).into_iter().cloned().collect())
    }

    /// Row counts for many windows at once.
    pub fn window_counts(&self, layer: usize, windows: &[Rect], exec: Execution) -> Result<Vec<usize>, StoreError> {
        let table = self.layer(layer)?;
        if windows.iter().any(|w| !w.is_valid()) {
            return Err(StoreError::InvalidWindow);
        }
        Ok(exec.map(windows, |w| table.window_offsets(w).len()))
    }

    pub fn keyword_search(&self, layer: usize, keyword: &str, limit: usize) -> Result<Vec<(NodeId, String)>, StoreError> {
        let table = self.layer(layer)?;
        if keyword.is_empty() {
            return Err(StoreError::EmptyKeyword);
        }
        Ok(table.labels.search(keyword, limit))
    }

    pub fn node_lookup(&self, layer: usize, id: NodeId) -> Result<NodeInfo, StoreError> {
        let table = self.layer(layer)?;
        let (position, label) = table.node_position(id).ok_or(StoreError::NotFound { layer, node: id })?;
        let rows = table
            .incident_offsets(id)
            .iter()
            .map(|&i| &table.rows[i as usize])
            .filter(|r| !r.is_node_row())
            .cloned()
            .collect();
        Ok(NodeInfo { id, label: label.to_string(), position, rows })
    }

    pub fn stats(&self, layer: usize) -> Result<GraphStats, StoreError> {
        Ok(self.layer(layer)?.stats)
    }

    /// Node positions thinned to at most `max_points` by taking every
    /// `n / max_points`-th node in id order.
    pub fn birdview(&self, layer: usize, max_points: usize) -> Result<Vec<(NodeId, Point)>, StoreError> {
        let table = self.layer(layer)?;
        let n = table.ids.len();
        let ids: Vec<NodeId> = table.ids.keys().copied().collect();
        let picks: Vec<usize> = if n <= max_points {
            (0..n).collect()
        } else {
            (0..max_points).map(|i| i * n / max_points).collect()
        };
        Ok(picks
            .into_iter()
            .filter_map(|i| table.node_position(ids[i]).map(|(p, _)| (ids[i], p)))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Store, StoreError> {
        codec::decode(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Store, StoreError> {
        Store::from_bytes(&std::fs::read(path)?)
    }
}
