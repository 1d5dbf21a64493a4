//! Multilevel k-way partitioning that minimizes the edge cut.
//!
//! Three phases, in the usual multilevel shape:
//!
//! - coarsening by heavy-edge matching until the graph is small,
//! - greedy graph growing of `k` regions on the coarsest graph (best of
//!   several seeded trials),
//! - projection back through every level with boundary Fiduccia–Mattheyses
//!   style refinement (tentative moves, rollback to the best prefix).
//!
//! A final pass on the input graph enforces the hard balance bound and
//! non-empty parts. Ties are broken towards the smallest [`NodeId`].

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Graph, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("invalid partition config: {0}")]
    Config(String),
    #[error("cannot partition an empty graph")]
    EmptyGraph,
    #[error("node {0} has no partition assignment")]
    Unassigned(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionConfig {
    pub k: usize,
    /// Largest allowed part size relative to the ideal `n / k`.
    pub balance_tolerance: f64,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig { k: 1, balance_tolerance: 1.1, seed: 0 }
    }
}

impl PartitionConfig {
    pub fn new(k: usize) -> Self {
        PartitionConfig { k, ..Default::default() }
    }

    /// One partition per 50,000 edges, clamped to `[1, 1024]`.
    pub fn default_k(edge_count: usize) -> usize {
        edge_count.div_ceil(50_000).clamp(1, 1024)
    }

    /// `ceil(balance_tolerance * n / k)`.
    pub fn max_part_size(&self, n: usize) -> usize {
        let bound = self.balance_tolerance * n as f64 / self.k as f64;
        // absorb float noise such as 1.1 * 100 / 10 = 11.000000000000002
        ((bound - 1e-9).ceil() as usize).max(n.div_ceil(self.k))
    }

    fn validate(&self, n: usize) -> Result<(), PartitionError> {
        if self.k == 0 {
            return Err(PartitionError::Config("k must be at least 1".into()));
        }
        if self.k > n {
            return Err(PartitionError::Config(format!("k = {} exceeds node count {n}", self.k)));
        }
        if !(self.balance_tolerance >= 1.0) {
            return Err(PartitionError::Config(format!(
                "balance tolerance {} must be >= 1.0",
                self.balance_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionAssignment {
    pub k: usize,
    pub part_of: HashMap<NodeId, usize>,
    pub cut_edges: usize,
}

impl PartitionAssignment {
    pub fn part(&self, id: NodeId) -> Option<usize> {
        self.part_of.get(&id).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &p in self.part_of.values() {
            sizes[p] += 1;
        }
        sizes
    }

    /// Members of each part, in graph node order.
    pub fn members(&self, g: &Graph) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.k];
        for n in g.nodes() {
            if let Some(p) = self.part(n.id) {
                out[p].push(n.id);
            }
        }
        out
    }
}

/// Number of edges whose endpoints lie in different parts. Parallel edges
/// count individually, self-loops never count.
pub fn edge_cut(g: &Graph, a: &PartitionAssignment) -> Result<usize, PartitionError> {
    for n in g.nodes() {
        if !a.part_of.contains_key(&n.id) {
            return Err(PartitionError::Unassigned(n.id));
        }
    }
    Ok(g.edges()
        .iter()
        .filter(|e| a.part_of[&e.source] != a.part_of[&e.target])
        .count())
}

pub fn partition(g: &Graph, cfg: &PartitionConfig) -> Result<PartitionAssignment, PartitionError> {
    let n = g.node_count();
    if n == 0 {
        return Err(PartitionError::EmptyGraph);
    }
    cfg.validate(n)?;

    let parts = if cfg.k == 1 {
        vec![0; n]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fine = WGraph::from_graph(g);
        let max_w = cfg.max_part_size(n) as u64;
        let mut parts = multilevel(&fine, cfg.k, max_w, &mut rng);
        rebalance(&fine, &mut parts, cfg.k, max_w);
        fill_empty_parts(&fine, &mut parts, cfg.k);
        fm_refine(&fine, &mut parts, cfg.k, max_w, 4);
        parts
    };

    let part_of: HashMap<NodeId, usize> =
        g.nodes().iter().zip(&parts).map(|(node, &p)| (node.id, p)).collect();
    let mut out = PartitionAssignment { k: cfg.k, part_of, cut_edges: 0 };
    out.cut_edges = edge_cut(g, &out)?;
    Ok(out)
}

/// Undirected weighted graph in CSR form. `key` is the smallest original
/// node id folded into a vertex and drives tie-breaking.
#[derive(Clone, Debug)]
struct WGraph {
    xadj: Vec<usize>,
    adj: Vec<usize>,
    ew: Vec<u64>,
    vw: Vec<u64>,
    key: Vec<u64>,
}

impl WGraph {
    fn from_graph(g: &Graph) -> WGraph {
        let n = g.node_count();
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2 * g.edge_count());
        for (u, v) in g.index_pairs() {
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        let key = g.nodes().iter().map(|n| n.id.0).collect();
        WGraph::from_pairs(n, pairs.into_iter().map(|(u, v)| (u, v, 1)), vec![1; n], key)
    }

    fn from_pairs(
        n: usize,
        pairs: impl Iterator<Item = (usize, usize, u64)>,
        vw: Vec<u64>,
        key: Vec<u64>,
    ) -> WGraph {
        let mut pairs: Vec<(usize, usize, u64)> = pairs.collect();
        pairs.sort_unstable_by_key(|&(u, v, _)| (u, v));
        let mut xadj = vec![0; n + 1];
        let mut adj = Vec::new();
        let mut ew: Vec<u64> = Vec::new();
        let mut last = None;
        for (u, v, w) in pairs {
            if last == Some((u, v)) {
                *ew.last_mut().unwrap() += w;
                continue;
            }
            last = Some((u, v));
            adj.push(v);
            ew.push(w);
            xadj[u + 1] += 1;
        }
        for i in 0..n {
            xadj[i + 1] += xadj[i];
        }
        WGraph { xadj, adj, ew, vw, key }
    }

    fn len(&self) -> usize {
        self.vw.len()
    }

    fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        (self.xadj[u]..self.xadj[u + 1]).map(move |i| (self.adj[i], self.ew[i]))
    }

    fn total_weight(&self) -> u64 {
        self.vw.iter().sum()
    }
}

/// Collapses a heavy-edge matching; returns the coarse graph and the
/// fine-to-coarse vertex map.
fn coarsen_once(g: &WGraph, max_vw: u64, rng: &mut ChaCha8Rng) -> (WGraph, Vec<usize>) {
    let n = g.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut mate = vec![usize::MAX; n];
    for &u in &order {
        if mate[u] != usize::MAX {
            continue;
        }
        let mut best: Option<(u64, Reverse<u64>, usize)> = None;
        for (v, w) in g.neighbors(u) {
            if mate[v] != usize::MAX || g.vw[u] + g.vw[v] > max_vw {
                continue;
            }
            let cand = (w, Reverse(g.key[v]), v);
            if best.is_none_or(|b| cand > b) {
                best = Some(cand);
            }
        }
        match best {
            Some((_, _, v)) => {
                mate[u] = v;
                mate[v] = u;
            }
            None => mate[u] = u,
        }
    }

    let mut cmap = vec![usize::MAX; n];
    let mut vw = Vec::new();
    let mut key = Vec::new();
    for u in 0..n {
        if cmap[u] != usize::MAX {
            continue;
        }
        let c = vw.len();
        let m = mate[u];
        cmap[u] = c;
        cmap[m] = c;
        if m == u {
            vw.push(g.vw[u]);
            key.push(g.key[u]);
        } else {
            vw.push(g.vw[u] + g.vw[m]);
            key.push(g.key[u].min(g.key[m]));
        }
    }
    let cmap_ref = &cmap;
    let pairs = (0..n).flat_map(|u| {
        let cmap = cmap_ref;
        let cu = cmap[u];
        g.neighbors(u).filter_map(move |(v, w)| {
            let cv = cmap[v];
            (cu != cv).then_some((cu, cv, w))
        })
    });
    let nc = vw.len();
    (WGraph::from_pairs(nc, pairs, vw, key), cmap)
}

fn multilevel(fine: &WGraph, k: usize, max_w: u64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let coarsen_to = (20 * k).max(60);
    let max_vw = ((1.5 * fine.total_weight() as f64 / coarsen_to as f64).ceil() as u64).max(1);

    let mut levels: Vec<(WGraph, Vec<usize>)> = Vec::new();
    let mut current = fine.clone();
    while current.len() > coarsen_to && levels.len() < 40 {
        let (coarse, cmap) = coarsen_once(&current, max_vw, rng);
        if coarse.len() as f64 > 0.95 * current.len() as f64 || coarse.len() < k {
            break;
        }
        levels.push((std::mem::replace(&mut current, coarse), cmap));
    }

    let mut parts = initial_partition(&current, k, max_w, rng);
    while let Some((finer, cmap)) = levels.pop() {
        parts = cmap.iter().map(|&c| parts[c]).collect();
        current = finer;
        rebalance(&current, &mut parts, k, max_w);
        fm_refine(&current, &mut parts, k, max_w, 8);
    }
    parts
}

fn cut_weight(g: &WGraph, parts: &[usize]) -> u64 {
    let mut cut = 0;
    for u in 0..g.len() {
        for (v, w) in g.neighbors(u) {
            if u < v && parts[u] != parts[v] {
                cut += w;
            }
        }
    }
    cut
}

fn overweight(g: &WGraph, parts: &[usize], k: usize, max_w: u64) -> u64 {
    let mut pw = vec![0u64; k];
    for u in 0..g.len() {
        pw[parts[u]] += g.vw[u];
    }
    pw.iter().map(|&w| w.saturating_sub(max_w)).sum()
}

/// Best of several greedy-growing trials, each refined before comparison.
fn initial_partition(g: &WGraph, k: usize, max_w: u64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let trials = if g.len() <= 200 { 16 } else { 8 };
    let mut best: Option<((u64, u64), Vec<usize>)> = None;
    for _ in 0..trials {
        let mut parts = grow_regions(g, k, max_w, rng);
        rebalance(g, &mut parts, k, max_w);
        fill_empty_parts(g, &mut parts, k);
        fm_refine(g, &mut parts, k, max_w, 8);
        let score = (overweight(g, &parts, k, max_w), cut_weight(g, &parts));
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, parts));
        }
    }
    best.expect("at least one trial").1
}

/// Grows parts `0..k-1` one at a time from random seeds, always absorbing
/// the unassigned vertex most connected to the growing region. The last
/// part takes whatever is left.
fn grow_regions(g: &WGraph, k: usize, max_w: u64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    const FREE: usize = usize::MAX;
    let n = g.len();
    let mut parts = vec![FREE; n];
    let mut remaining = g.total_weight();
    let mut conn = vec![0u64; n];
    let mut unassigned = n;

    for p in 0..k - 1 {
        if unassigned == 0 {
            break;
        }
        let target = (remaining as f64 / (k - p) as f64).max(1.0);
        let mut weight = 0u64;
        let mut heap: BinaryHeap<(u64, Reverse<u64>, usize)> = BinaryHeap::new();
        let mut touched: Vec<usize> = Vec::new();
        while (weight as f64) < target && unassigned > 0 {
            let next = loop {
                match heap.pop() {
                    Some((c, _, v)) if parts[v] == FREE && c == conn[v] => break Some(v),
                    Some(_) => continue,
                    None => break None,
                }
            };
            let (v, reseeded) = match next {
                Some(v) => (v, false),
                None => {
                    // new seed: region exhausted or disconnected remainder
                    let free: Vec<usize> = (0..n).filter(|&v| parts[v] == FREE).collect();
                    (free[rng.gen_range(0..free.len())], true)
                }
            };
            if weight > 0 && weight + g.vw[v] > max_w {
                if reseeded {
                    break;
                }
                conn[v] = 0;
                continue;
            }
            parts[v] = p;
            weight += g.vw[v];
            unassigned -= 1;
            for (u, w) in g.neighbors(v) {
                if parts[u] == FREE {
                    conn[u] += w;
                    touched.push(u);
                    heap.push((conn[u], Reverse(g.key[u]), u));
                }
            }
        }
        for u in touched {
            conn[u] = 0;
        }
        remaining -= weight;
    }
    for slot in parts.iter_mut() {
        if *slot == FREE {
            *slot = k - 1;
        }
    }
    parts
}

/// Per-vertex connectivity to each part, with a sparse reset.
struct ConnScratch {
    conn: Vec<u64>,
    touched: Vec<usize>,
}

impl ConnScratch {
    fn new(k: usize) -> Self {
        ConnScratch { conn: vec![0; k], touched: Vec::new() }
    }

    fn load(&mut self, g: &WGraph, parts: &[usize], u: usize) {
        for &p in &self.touched {
            self.conn[p] = 0;
        }
        self.touched.clear();
        for (v, w) in g.neighbors(u) {
            let p = parts[v];
            if self.conn[p] == 0 {
                self.touched.push(p);
            }
            self.conn[p] += w;
        }
        self.touched.sort_unstable();
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct Move {
    gain: i64,
    key: u64,
    vertex: usize,
    to: usize,
    stamp: u32,
}

impl Ord for Move {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .cmp(&other.gain)
            .then_with(|| other.key.cmp(&self.key))
            .then_with(|| other.to.cmp(&self.to))
    }
}

impl PartialOrd for Move {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best feasible boundary move for `u`, if any.
fn best_move(
    g: &WGraph,
    parts: &[usize],
    pw: &[u64],
    counts: &[usize],
    max_w: u64,
    scratch: &mut ConnScratch,
    u: usize,
    stamp: u32,
) -> Option<Move> {
    let from = parts[u];
    if counts[from] <= 1 {
        return None;
    }
    scratch.load(g, parts, u);
    let own = scratch.conn[from] as i64;
    let mut best: Option<Move> = None;
    for &q in &scratch.touched {
        if q == from || pw[q] + g.vw[u] > max_w {
            continue;
        }
        let m = Move { gain: scratch.conn[q] as i64 - own, key: g.key[u], vertex: u, to: q, stamp };
        if best.is_none_or(|b| m > b) {
            best = Some(m);
        }
    }
    best
}

/// Boundary FM refinement: every pass makes tentative moves in gain order
/// (each vertex at most once), then rolls back to the best prefix.
fn fm_refine(g: &WGraph, parts: &mut [usize], k: usize, max_w: u64, passes: usize) {
    let n = g.len();
    if n == 0 || k < 2 {
        return;
    }
    let mut scratch = ConnScratch::new(k);
    let stall_limit = (n / 20).max(50);
    for _ in 0..passes {
        let mut pw = vec![0u64; k];
        let mut counts = vec![0usize; k];
        for u in 0..n {
            pw[parts[u]] += g.vw[u];
            counts[parts[u]] += 1;
        }
        let mut stamps = vec![0u32; n];
        let mut locked = vec![false; n];
        let mut heap = BinaryHeap::new();
        for u in 0..n {
            if let Some(m) = best_move(g, parts, &pw, &counts, max_w, &mut scratch, u, 0) {
                heap.push(m);
            }
        }

        let mut log: Vec<(usize, usize)> = Vec::new();
        let (mut total, mut best_total, mut best_len) = (0i64, 0i64, 0usize);
        while let Some(m) = heap.pop() {
            let u = m.vertex;
            if locked[u] || m.stamp != stamps[u] {
                continue;
            }
            // the entry may predate weight changes elsewhere
            let fresh = match best_move(g, parts, &pw, &counts, max_w, &mut scratch, u, m.stamp) {
                Some(f) => f,
                None => continue,
            };
            if fresh != m {
                heap.push(fresh);
                continue;
            }
            let from = parts[u];
            locked[u] = true;
            parts[u] = m.to;
            pw[from] -= g.vw[u];
            pw[m.to] += g.vw[u];
            counts[from] -= 1;
            counts[m.to] += 1;
            log.push((u, from));
            total += m.gain;
            if total > best_total {
                best_total = total;
                best_len = log.len();
            } else if log.len() - best_len > stall_limit {
                break;
            }
            for (v, _) in g.neighbors(u) {
                if locked[v] {
                    continue;
                }
                stamps[v] += 1;
                if let Some(mv) = best_move(g, parts, &pw, &counts, max_w, &mut scratch, v, stamps[v]) {
                    heap.push(mv);
                }
            }
        }
        for &(u, from) in log[best_len..].iter().rev() {
            parts[u] = from;
        }
        if best_total <= 0 {
            break;
        }
    }
}

/// Moves vertices out of overweight parts, cheapest cut increase first,
/// until every part fits `max_w` or no feasible move remains.
fn rebalance(g: &WGraph, parts: &mut [usize], k: usize, max_w: u64) {
    let n = g.len();
    let mut pw = vec![0u64; k];
    let mut counts = vec![0usize; k];
    for u in 0..n {
        pw[parts[u]] += g.vw[u];
        counts[parts[u]] += 1;
    }
    if pw.iter().all(|&w| w <= max_w) {
        return;
    }
    let mut scratch = ConnScratch::new(k);
    let candidate = |u: usize, parts: &[usize], pw: &[u64], counts: &[usize], scratch: &mut ConnScratch| {
        let from = parts[u];
        if pw[from] <= max_w || counts[from] <= 1 {
            return None;
        }
        scratch.load(g, parts, u);
        let own = scratch.conn[from] as i64;
        (0..k)
            .filter(|&q| q != from && pw[q] + g.vw[u] <= max_w)
            .map(|q| Move { gain: scratch.conn[q] as i64 - own, key: g.key[u], vertex: u, to: q, stamp: 0 })
            .max()
    };
    let mut heap: BinaryHeap<Move> =
        (0..n).filter_map(|u| candidate(u, parts, &pw, &counts, &mut scratch)).collect();
    while let Some(m) = heap.pop() {
        let u = m.vertex;
        let fresh = match candidate(u, parts, &pw, &counts, &mut scratch) {
            Some(f) => f,
            None => continue,
        };
        if fresh != m {
            heap.push(fresh);
            continue;
        }
        let from = parts[u];
        parts[u] = m.to;
        pw[from] -= g.vw[u];
        pw[m.to] += g.vw[u];
        counts[from] -= 1;
        counts[m.to] += 1;
        if pw.iter().all(|&w| w <= max_w) {
            return;
        }
        for (v, _) in g.neighbors(u) {
            if let Some(mv) = candidate(v, parts, &pw, &counts, &mut scratch) {
                heap.push(mv);
            }
        }
    }
}

/// Gives every empty part one vertex taken from the currently largest part.
fn fill_empty_parts(g: &WGraph, parts: &mut [usize], k: usize) {
    let mut counts = vec![0usize; k];
    for &p in parts.iter() {
        counts[p] += 1;
    }
    let mut scratch = ConnScratch::new(k);
    for q in 0..k {
        if counts[q] > 0 {
            continue;
        }
        let donor = (0..k).max_by_key(|&p| (counts[p], Reverse(p))).unwrap();
        let pick = (0..g.len())
            .filter(|&u| parts[u] == donor)
            .min_by_key(|&u| {
                scratch.load(g, parts, u);
                (scratch.conn[donor], g.key[u])
            })
            .unwrap();
        parts[pick] = q;
        counts[donor] -= 1;
        counts[q] += 1;
    }
}
