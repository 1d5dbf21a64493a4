//! Static R-tree packed with Sort-Tile-Recursive bulk loading.
//!
//! Items are grouped into leaves of `node_size` entries: sort by center x,
//! cut into `ceil(sqrt(leaves))` vertical slices, sort each slice by center y
//! and chunk it. The same packing is repeated on the node boxes of every
//! level until a single root remains.

use crate::geometry::Rect;

pub const DEFAULT_NODE_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Entry {
    pub bbox: Rect,
    /// Child range: entries of the level below, or item slots for leaves.
    pub start: u32,
    pub end: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackedRTree {
    pub(crate) node_size: usize,
    /// Item ids in packed order.
    pub(crate) items: Vec<u32>,
    pub(crate) item_boxes: Vec<Rect>,
    /// `levels[0]` are the leaves, the last level holds the root.
    pub(crate) levels: Vec<Vec<Entry>>,
}

fn str_pack(boxes: &[(Rect, u32)], node_size: usize) -> Vec<Vec<(Rect, u32)>> {
    let mut sorted = boxes.to_vec();
    let n = sorted.len();
    let groups = n.div_ceil(node_size);
    let slices = (groups as f64).sqrt().ceil() as usize;
    let per_slice = slices * node_size;
    sorted.sort_by(|a, b| a.0.center().x.total_cmp(&b.0.center().x).then(a.1.cmp(&b.1)));
    let mut out = Vec::with_capacity(groups);
    for slice in sorted.chunks_mut(per_slice.max(1)) {
        slice.sort_by(|a, b| a.0.center().y.total_cmp(&b.0.center().y).then(a.1.cmp(&b.1)));
        out.extend(slice.chunks(node_size).map(|c| c.to_vec()));
    }
    out
}

fn enclose(boxes: impl Iterator<Item = Rect>) -> Rect {
    boxes.reduce(|a, b| a.union(&b)).expect("non-empty group")
}

impl PackedRTree {
    /// Bulk-loads `(bbox, item id)` pairs.
    pub fn bulk_load(items: &[(Rect, u32)], node_size: usize) -> PackedRTree {
        let node_size = node_size.max(2);
        let mut tree = PackedRTree { node_size, items: Vec::new(), item_boxes: Vec::new(), levels: Vec::new() };
        if items.is_empty() {
            return tree;
        }
        let mut leaves = Vec::new();
        for group in str_pack(items, node_size) {
            let start = tree.items.len() as u32;
            for &(r, id) in &group {
                tree.items.push(id);
                tree.item_boxes.push(r);
            }
            let bbox = enclose(group.iter().map(|g| g.0));
            leaves.push(Entry { bbox, start, end: tree.items.len() as u32 });
        }
        tree.levels.push(leaves);
        while tree.levels.last().unwrap().len() > 1 {
            let below = tree.levels.last_mut().unwrap();
            let keyed: Vec<(Rect, u32)> = below.iter().enumerate().map(|(i, e)| (e.bbox, i as u32)).collect();
            let groups = str_pack(&keyed, node_size);
            // reorder the level below so every parent owns a contiguous range
            let old = std::mem::take(below);
            let mut reordered = Vec::with_capacity(old.len());
            let mut parents = Vec::with_capacity(groups.len());
            for group in groups {
                let start = reordered.len() as u32;
                reordered.extend(group.iter().map(|&(_, i)| old[i as usize]));
                let bbox = enclose(group.iter().map(|g| g.0));
                parents.push(Entry { bbox, start, end: reordered.len() as u32 });
            }
            *tree.levels.last_mut().unwrap() = reordered;
            tree.levels.push(parents);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn height(&self) -> usize {
        self.levels.len()
    }

    /// Ids of all items whose box intersects `window` (closed), unordered.
    pub fn search(&self, window: &Rect) -> Vec<u32> {
        let mut out = Vec::new();
        self.visit(window, |id| out.push(id));
        out
    }

    pub fn visit<F: FnMut(u32)>(&self, window: &Rect, mut f: F) {
        let Some(top) = self.levels.len().checked_sub(1) else { return };
        let mut stack: Vec<(usize, u32)> = (0..self.levels[top].len() as u32).map(|i| (top, i)).collect();
        while let Some((level, i)) = stack.pop() {
            let e = self.levels[level][i as usize];
            if !e.bbox.intersects(window) {
                continue;
            }
            if level == 0 {
                for slot in e.start..e.end {
                    if self.item_boxes[slot as usize].intersects(window) {
                        f(self.items[slot as usize]);
                    }
                }
            } else {
                stack.extend((e.start..e.end).map(|c| (level - 1, c)));
            }
        }
    }
}
