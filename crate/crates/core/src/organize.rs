//! Greedy arrangement of laid-out partitions on the global plane.
//!
//! The partition with the most crossing edges goes to the center. The rest
//! wait in a priority queue keyed by how many crossing edges they share with
//! partitions already on the plane. Each popped partition is tried in every
//! slot of a ring around the occupied area and lands where its crossing
//! edges to placed partitions are shortest in total.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use thiserror::Error;

use crate::geometry::{Point, Rect};
use crate::graph::{Graph, NodeId};
use crate::layout::LocalLayout;
use crate::partition::PartitionAssignment;

#[derive(Debug, Error, PartialEq)]
pub enum ArrangeError {
    #[error("node {0} has no partition assignment")]
    Unassigned(NodeId),
    #[error("crossing edge references partition {0}, but only {1} layouts were given")]
    UnknownPartition(usize, usize),
    #[error("node {0} has no position in its partition layout")]
    MissingPosition(NodeId),
    #[error("candidate box overlaps partition {0}")]
    Overlap(usize),
}

/// An edge whose endpoints lie in different partitions, as
/// `(partition, node)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingEdge {
    pub source: (usize, NodeId),
    pub target: (usize, NodeId),
    pub label: String,
}

pub fn crossing_edges(g: &Graph, a: &PartitionAssignment) -> Result<Vec<CrossingEdge>, ArrangeError> {
    let part = |id: NodeId| a.part(id).ok_or(ArrangeError::Unassigned(id));
    for n in g.nodes() {
        part(n.id)?;
    }
    let mut out = Vec::new();
    for e in g.edges() {
        let (p, q) = (part(e.source)?, part(e.target)?);
        if p != q {
            out.push(CrossingEdge { source: (p, e.source), target: (q, e.target), label: e.label.clone() });
        }
    }
    Ok(out)
}

/// Crossing edges incident to each partition, indexed by partition. An edge
/// between `p` and `q` counts for both.
pub fn count_crossing_edges(g: &Graph, a: &PartitionAssignment) -> Result<Vec<usize>, ArrangeError> {
    Ok(crossing_totals(&crossing_edges(g, a)?, a.k))
}

fn crossing_totals(crossings: &[CrossingEdge], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for c in crossings {
        counts[c.source.0] += 1;
        counts[c.target.0] += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrangeConfig {
    /// Spacing between neighbouring partition boxes, in pixels.
    pub gap: f64,
}

impl Default for ArrangeConfig {
    fn default() -> Self {
        ArrangeConfig { gap: 40.0 }
    }
}

/// Node positions on the shared plane plus the box each partition occupies.
/// `boxes` and `offsets` are keyed by partition index; while the greedy loop
/// runs they hold only the partitions placed so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlobalLayout {
    pub positions: HashMap<NodeId, Point>,
    pub boxes: BTreeMap<usize, Rect>,
    /// Rigid translation applied to each partition's local layout.
    pub offsets: BTreeMap<usize, (f64, f64)>,
    /// Partitions in placement order.
    pub order: Vec<usize>,
}

impl GlobalLayout {
    pub fn partition_box(&self, p: usize) -> Option<Rect> {
        self.boxes.get(&p).copied()
    }

    /// Union of all partition boxes.
    pub fn bounds(&self) -> Option<Rect> {
        self.boxes.values().copied().reduce(|a, b| a.union(&b))
    }

    fn place(&mut self, p: usize, layout: &LocalLayout, dx: f64, dy: f64) {
        for (&id, pt) in &layout.positions {
            self.positions.insert(id, pt.translate(dx, dy));
        }
        self.boxes.insert(p, layout.bbox.translate(dx, dy));
        self.offsets.insert(p, (dx, dy));
        self.order.push(p);
    }
}

/// Sum of Euclidean crossing-edge lengths under `layout`.
pub fn total_crossing_length(layout: &GlobalLayout, crossings: &[CrossingEdge]) -> Result<f64, ArrangeError> {
    crossings.iter().try_fold(0.0, |acc, c| {
        let a = *layout.positions.get(&c.source.1).ok_or(ArrangeError::MissingPosition(c.source.1))?;
        let b = *layout.positions.get(&c.target.1).ok_or(ArrangeError::MissingPosition(c.target.1))?;
        Ok(acc + a.distance(b))
    })
}

/// Total length of the crossing edges between partition `popped` and the
/// partitions already in `placed`, with `popped_layout` moved into
/// `candidate` (its min corner aligned with the candidate's).
pub fn placement_cost(
    candidate: &Rect,
    popped: usize,
    popped_layout: &LocalLayout,
    placed: &GlobalLayout,
    crossings: &[CrossingEdge],
) -> Result<f64, ArrangeError> {
    if let Some((&p, _)) = placed.boxes.iter().find(|(_, b)| b.interiors_overlap(candidate)) {
        return Err(ArrangeError::Overlap(p));
    }
    let dx = candidate.min_x - popped_layout.bbox.min_x;
    let dy = candidate.min_y - popped_layout.bbox.min_y;
    let relevant = crossings.iter().filter(|c| c.source.0 == popped || c.target.0 == popped);
    cost_at(dx, dy, popped, popped_layout, placed, relevant)
}

fn cost_at<'a>(
    dx: f64,
    dy: f64,
    popped: usize,
    popped_layout: &LocalLayout,
    placed: &GlobalLayout,
    crossings: impl Iterator<Item = &'a CrossingEdge>,
) -> Result<f64, ArrangeError> {
    let mut total = 0.0;
    for c in crossings {
        let (own, other) = if c.source.0 == popped { (c.source, c.target) } else { (c.target, c.source) };
        if other.0 == popped || !placed.boxes.contains_key(&other.0) {
            continue;
        }
        let local = popped_layout.position(own.1).ok_or(ArrangeError::MissingPosition(own.1))?;
        let far = *placed.positions.get(&other.1).ok_or(ArrangeError::MissingPosition(other.1))?;
        total += local.translate(dx, dy).distance(far);
    }
    Ok(total)
}

/// Candidate min corners for a `w × h` box on the ring around `occupied`:
/// right, top, left and bottom sides in that order, slots spaced by the box
/// size plus `gap`.
pub fn ring_slots(occupied: &Rect, w: f64, h: f64, gap: f64) -> Vec<Point> {
    let step_x = w + gap;
    let step_y = h + gap;
    let nx = ((occupied.width() + gap) / step_x).ceil() as i64;
    let ny = ((occupied.height() + gap) / step_y).ceil() as i64;
    let mut slots = Vec::new();
    for j in -1..=ny {
        slots.push(Point::new(occupied.max_x + gap, occupied.min_y + j as f64 * step_y));
    }
    for i in -1..=nx {
        slots.push(Point::new(occupied.min_x + i as f64 * step_x, occupied.max_y + gap));
    }
    for j in -1..=ny {
        slots.push(Point::new(occupied.min_x - gap - w, occupied.min_y + j as f64 * step_y));
    }
    for i in -1..=nx {
        slots.push(Point::new(occupied.min_x + i as f64 * step_x, occupied.min_y - gap - h));
    }
    slots
}

pub fn arrange(
    layouts: &[LocalLayout],
    crossings: &[CrossingEdge],
    cfg: &ArrangeConfig,
) -> Result<GlobalLayout, ArrangeError> {
    let k = layouts.len();
    let mut out = GlobalLayout::default();
    if k == 0 {
        return Ok(out);
    }
    let mut by_part: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, c) in crossings.iter().enumerate() {
        for p in [c.source.0, c.target.0] {
            if p >= k {
                return Err(ArrangeError::UnknownPartition(p, k));
            }
        }
        by_part[c.source.0].push(i);
        by_part[c.target.0].push(i);
    }
    let totals = crossing_totals(crossings, k);

    let first = (0..k).max_by_key(|&p| (totals[p], Reverse(p))).expect("k > 0");
    let c = layouts[first].bbox.center();
    out.place(first, &layouts[first], -c.x, -c.y);
    let mut occupied = out.boxes[&first];

    let mut placed = vec![false; k];
    placed[first] = true;
    let mut common = vec![0usize; k];
    let mut queue: BinaryHeap<(usize, usize, Reverse<usize>)> = BinaryHeap::new();
    let bump = |p: usize, common: &mut Vec<usize>, queue: &mut BinaryHeap<_>, placed: &[bool]| {
        for &i in &by_part[p] {
            let e = &crossings[i];
            let other = if e.source.0 == p { e.target.0 } else { e.source.0 };
            if !placed[other] {
                common[other] += 1;
            }
        }
        let mut touched: Vec<usize> = by_part[p]
            .iter()
            .map(|&i| if crossings[i].source.0 == p { crossings[i].target.0 } else { crossings[i].source.0 })
            .filter(|&q| !placed[q])
            .collect();
        touched.sort_unstable();
        touched.dedup();
        for q in touched {
            queue.push((common[q], totals[q], Reverse(q)));
        }
    };
    for p in 0..k {
        if p != first {
            queue.push((0, totals[p], Reverse(p)));
        }
    }
    bump(first, &mut common, &mut queue, &placed);

    while let Some((key, _, Reverse(p))) = queue.pop() {
        if placed[p] || key != common[p] {
            continue;
        }
        let layout = &layouts[p];
        let (w, h) = (layout.bbox.width(), layout.bbox.height());
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for (slot, corner) in ring_slots(&occupied, w, h, cfg.gap).into_iter().enumerate() {
            let (dx, dy) = (corner.x - layout.bbox.min_x, corner.y - layout.bbox.min_y);
            let cost = cost_at(dx, dy, p, layout, &out, by_part[p].iter().map(|&i| &crossings[i]))?;
            if best.is_none_or(|(c, ..)| cost < c) {
                best = Some((cost, slot, dx, dy));
            }
        }
        let (_, _, dx, dy) = best.expect("ring is never empty");
        out.place(p, layout, dx, dy);
        occupied = occupied.union(&out.boxes[&p]);
        placed[p] = true;
        bump(p, &mut common, &mut queue, &placed);
    }
    Ok(out)
}
