//! Per-partition 2-D layout in local pixel coordinates.
//!
//! Each partition is laid out on its own, ignoring crossing edges; the
//! organizer later moves every local layout rigidly onto the global plane.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::{Point, Rect};
use crate::graph::{Graph, NodeId};
use crate::partition::PartitionAssignment;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("cannot lay out an empty sub-graph")]
    EmptyGraph,
    #[error("invalid layout config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    #[default]
    ForceDirected,
    Circular,
    Grid,
}

impl LayoutKind {
    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::ForceDirected => "force_directed",
            LayoutKind::Circular => "circular",
            LayoutKind::Grid => "grid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutAlgorithm {
    pub kind: LayoutKind,
    /// Force-directed iterations.
    pub iterations: usize,
    pub ideal_edge_length: f64,
    /// Padding added around the tight bounding box.
    pub margin: f64,
}

impl Default for LayoutAlgorithm {
    fn default() -> Self {
        LayoutAlgorithm {
            kind: LayoutKind::ForceDirected,
            iterations: 300,
            ideal_edge_length: 60.0,
            margin: 20.0,
        }
    }
}

impl LayoutAlgorithm {
    pub fn new(kind: LayoutKind) -> Self {
        LayoutAlgorithm { kind, ..Default::default() }
    }

    fn validate(&self) -> Result<(), LayoutError> {
        if self.iterations == 0 {
            return Err(LayoutError::Config("iterations must be at least 1".into()));
        }
        if !(self.ideal_edge_length > 0.0 && self.ideal_edge_length.is_finite()) {
            return Err(LayoutError::Config("ideal edge length must be positive".into()));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(LayoutError::Config("margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// Node positions of one partition plus their padded bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLayout {
    pub positions: BTreeMap<NodeId, Point>,
    pub bbox: Rect,
}

impl LocalLayout {
    pub fn position(&self, id: NodeId) -> Option<Point> {
        self.positions.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Rigid translation of positions and box alike.
    pub fn translated(&self, dx: f64, dy: f64) -> LocalLayout {
        LocalLayout {
            positions: self.positions.iter().map(|(&id, p)| (id, p.translate(dx, dy))).collect(),
            bbox: self.bbox.translate(dx, dy),
        }
    }
}

pub fn layout_partition(sub: &Graph, alg: &LayoutAlgorithm, seed: u64) -> Result<LocalLayout, LayoutError> {
    alg.validate()?;
    if sub.is_empty() {
        return Err(LayoutError::EmptyGraph);
    }
    let mut points = match alg.kind {
        LayoutKind::Circular => circular(sub.node_count(), alg.ideal_edge_length),
        LayoutKind::Grid => grid(sub.node_count(), alg.ideal_edge_length),
        LayoutKind::ForceDirected => force_directed_components(sub, alg, seed),
    };
    let tight = Rect::bounding(points.iter().copied()).expect("non-empty");
    let c = tight.center();
    for p in points.iter_mut() {
        *p = p.translate(-c.x, -c.y);
    }
    let bbox = tight.translate(-c.x, -c.y).pad(alg.margin);
    let positions = sub.nodes().iter().map(|n| n.id).zip(points).collect();
    Ok(LocalLayout { positions, bbox })
}

/// Splits `g` into one induced sub-graph per part, crossing edges dropped.
pub fn partition_subgraphs(g: &Graph, a: &PartitionAssignment) -> Vec<Graph> {
    let mut subs: Vec<Graph> = (0..a.k).map(|_| Graph::new(g.is_directed())).collect();
    for n in g.nodes() {
        if let Some(p) = a.part(n.id) {
            subs[p].add_node(n.id, n.label.clone());
        }
    }
    for e in g.edges() {
        match (a.part(e.source), a.part(e.target)) {
            (Some(p), Some(q)) if p == q => subs[p].add_edge(e.source, e.target, e.label.clone()).expect("endpoints added"),
            _ => {}
        }
    }
    subs
}

/// Lays out every partition independently; partition `p` uses a seed
/// derived from `seed` and `p`.
pub fn layout_partitions(
    g: &Graph,
    a: &PartitionAssignment,
    alg: &LayoutAlgorithm,
    seed: u64,
    exec: Execution,
) -> Result<Vec<LocalLayout>, LayoutError> {
    let subs = partition_subgraphs(g, a);
    let indexed: Vec<(usize, &Graph)> = subs.iter().enumerate().collect();
    exec.map(&indexed, |&(p, sub)| layout_partition(sub, alg, mix_seed(seed, p as u64)))
        .into_iter()
        .collect()
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn circular(n: usize, edge_len: f64) -> Vec<Point> {
    if n == 1 {
        return vec![Point::ORIGIN];
    }
    let radius = edge_len * n as f64 / (2.0 * PI);
    (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            Point::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}

fn grid(n: usize, edge_len: f64) -> Vec<Point> {
    let cols = (n as f64).sqrt().ceil() as usize;
    (0..n)
        .map(|i| Point::new((i % cols) as f64 * edge_len, (i / cols) as f64 * edge_len))
        .collect()
}

/// Connected components (direction ignored), ordered by first node.
fn components(sub: &Graph) -> Vec<Vec<usize>> {
    let n = sub.node_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (u, v) in sub.index_pairs() {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru.max(rv)] = ru.min(rv);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for u in 0..n {
        let r = find(&mut parent, u);
        groups.entry(r).or_default().push(u);
    }
    groups.into_values().collect()
}

/// Components laid out separately, then packed left to right along y = 0.
fn force_directed_components(sub: &Graph, alg: &LayoutAlgorithm, seed: u64) -> Vec<Point> {
    let comps = components(sub);
    let mut local_of = vec![0usize; sub.node_count()];
    for comp in &comps {
        for (i, &u) in comp.iter().enumerate() {
            local_of[u] = i;
        }
    }
    let mut comp_of = vec![0usize; sub.node_count()];
    for (c, comp) in comps.iter().enumerate() {
        for &u in comp {
            comp_of[u] = c;
        }
    }
    let mut comp_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); comps.len()];
    for (u, v) in sub.index_pairs() {
        comp_edges[comp_of[u]].push((local_of[u], local_of[v]));
    }

    let mut out = vec![Point::ORIGIN; sub.node_count()];
    let mut cursor = 0.0;
    for (c, comp) in comps.iter().enumerate() {
        let pts = if comp.len() == 1 {
            vec![Point::ORIGIN]
        } else {
            fruchterman_reingold(comp.len(), &comp_edges[c], alg, mix_seed(seed, c as u64))
        };
        let r = Rect::bounding(pts.iter().copied()).expect("non-empty component");
        let (dx, dy) = (cursor - r.min_x, -r.center().y);
        for (&u, p) in comp.iter().zip(&pts) {
            out[u] = p.translate(dx, dy);
        }
        cursor += r.width() + alg.ideal_edge_length;
    }
    out
}

/// Above this size repulsion is approximated with a Barnes-Hut quadtree.
const EXACT_REPULSION_LIMIT: usize = 1500;
/// Opening criterion: a cell acts as one body when `side / distance` is below this.
const BARNES_HUT_THETA: f64 = 0.8;
const QUAD_LEAF: usize = 8;
const QUAD_MAX_DEPTH: usize = 32;

struct QuadNode {
    /// Center of mass and body count.
    cx: f64,
    cy: f64,
    mass: f64,
    side: f64,
    /// Leaf: range into `order`; inner: range into `nodes`.
    start: u32,
    end: u32,
    leaf: bool,
}

struct QuadTree {
    nodes: Vec<QuadNode>,
    order: Vec<usize>,
}

impl QuadTree {
    fn build(pos: &[Point]) -> QuadTree {
        let bounds = Rect::bounding(pos.iter().copied()).expect("non-empty");
        let side = bounds.width().max(bounds.height()).max(1e-9);
        let mut tree = QuadTree { nodes: Vec::new(), order: (0..pos.len()).collect() };
        tree.nodes.push(QuadNode { cx: 0.0, cy: 0.0, mass: 0.0, side, start: 0, end: 0, leaf: true });
        tree.split(0, pos, 0, pos.len(), bounds.min_x, bounds.min_y, side, 0);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn split(&mut self, node: usize, pos: &[Point], lo: usize, hi: usize, x: f64, y: f64, side: f64, depth: usize) {
        let members = &self.order[lo..hi];
        let mass = members.len() as f64;
        let cx = members.iter().map(|&i| pos[i].x).sum::<f64>() / mass;
        let cy = members.iter().map(|&i| pos[i].y).sum::<f64>() / mass;
        let n = &mut self.nodes[node];
        (n.cx, n.cy, n.mass) = (cx, cy, mass);
        if hi - lo <= QUAD_LEAF || depth >= QUAD_MAX_DEPTH {
            (n.start, n.end, n.leaf) = (lo as u32, hi as u32, true);
            return;
        }
        let half = side / 2.0;
        let (mx, my) = (x + half, y + half);
        let quadrant = |p: Point| (p.x >= mx) as usize + 2 * (p.y >= my) as usize;
        self.order[lo..hi].sort_by_key(|&i| quadrant(pos[i]));
        let mut bounds = [lo; 5];
        for q in 0..4 {
            bounds[q + 1] = bounds[q] + self.order[bounds[q]..hi].iter().take_while(|&&i| quadrant(pos[i]) == q).count();
        }
        let first = self.nodes.len();
        let occupied: Vec<usize> = (0..4).filter(|&q| bounds[q + 1] > bounds[q]).collect();
        for _ in &occupied {
            self.nodes.push(QuadNode { cx: 0.0, cy: 0.0, mass: 0.0, side: half, start: 0, end: 0, leaf: true });
        }
        let n = &mut self.nodes[node];
        (n.start, n.end, n.leaf) = (first as u32, (first + occupied.len()) as u32, false);
        for (c, &q) in occupied.iter().enumerate() {
            let (qx, qy) = (if q & 1 == 1 { mx } else { x }, if q & 2 == 2 { my } else { y });
            self.split(first + c, pos, bounds[q], bounds[q + 1], qx, qy, half, depth + 1);
        }
    }

    fn repulsion_on(&self, u: usize, pos: &[Point], k: f64, stack: &mut Vec<usize>) -> (f64, f64) {
        let p = pos[u];
        let (mut fx, mut fy) = (0.0, 0.0);
        stack.clear();
        stack.push(0);
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.leaf {
                for &v in &self.order[node.start as usize..node.end as usize] {
                    if v != u {
                        let (ax, ay) = repulsion(p, pos[v], u, v, k);
                        fx += ax;
                        fy += ay;
                    }
                }
                continue;
            }
            let d = (p.x - node.cx).hypot(p.y - node.cy);
            if d > 0.0 && node.side / d < BARNES_HUT_THETA {
                let f = node.mass * k * k / d;
                fx += (p.x - node.cx) / d * f;
                fy += (p.y - node.cy) / d * f;
            } else {
                stack.extend(node.start as usize..node.end as usize);
            }
        }
        (fx, fy)
    }
}

fn fruchterman_reingold(n: usize, edges: &[(usize, usize)], alg: &LayoutAlgorithm, seed: u64) -> Vec<Point> {
    let k = alg.ideal_edge_length;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).sqrt() * k;
    let mut pos: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side))
        .collect();

    let t_start = (side * std::f64::consts::SQRT_2 / 10.0).max(0.1);
    let t_end = 0.1;
    let iters = alg.iterations;
    let mut disp = vec![(0.0f64, 0.0f64); n];
    for it in 0..iters {
        let t = if iters == 1 {
            t_start
        } else {
            t_start + (t_end - t_start) * it as f64 / (iters - 1) as f64
        };
        disp.iter_mut().for_each(|d| *d = (0.0, 0.0));

        if n <= EXACT_REPULSION_LIMIT {
            for u in 0..n {
                for v in (u + 1)..n {
                    let (fx, fy) = repulsion(pos[u], pos[v], u, v, k);
                    disp[u].0 += fx;
                    disp[u].1 += fy;
                    disp[v].0 -= fx;
                    disp[v].1 -= fy;
                }
            }
        } else {
            let tree = QuadTree::build(&pos);
            let mut stack = Vec::new();
            for (u, d) in disp.iter_mut().enumerate() {
                *d = tree.repulsion_on(u, &pos, k, &mut stack);
            }
        }

        for &(u, v) in edges {
            if u == v {
                continue;
            }
            let (dx, dy) = (pos[u].x - pos[v].x, pos[u].y - pos[v].y);
            let d = dx.hypot(dy).max(0.01);
            let f = d * d / k;
            let (fx, fy) = (dx / d * f, dy / d * f);
            disp[u].0 -= fx;
            disp[u].1 -= fy;
            disp[v].0 += fx;
            disp[v].1 += fy;
        }

        for (p, &(dx, dy)) in pos.iter_mut().zip(&disp) {
            let len = dx.hypot(dy);
            if len > 0.0 && len.is_finite() {
                let step = len.min(t);
                *p = p.translate(dx / len * step, dy / len * step);
            }
        }
    }
    pos
}

/// Repulsive force on `a` from `b`. Coincident points are pushed apart
/// along a direction fixed by their indices.
fn repulsion(a: Point, b: Point, ia: usize, ib: usize, k: f64) -> (f64, f64) {
    let (mut dx, mut dy) = (a.x - b.x, a.y - b.y);
    let mut d = dx.hypot(dy);
    if d < 1e-9 {
        let angle = ((ia * 31 + ib * 17) % 360) as f64 * PI / 180.0;
        let sign = if ia < ib { 1.0 } else { -1.0 };
        dx = sign * angle.cos();
        dy = sign * angle.sin();
        d = 1.0;
    }
    let d_eff = d.max(0.01);
    let f = k * k / d_eff;
    (dx / d * f, dy / d * f)
}
