//! Binary store file.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "GVDB" | version u16 | manifest JSON (u32 length + bytes) | layer count u32
//! per layer: index u32 | stats | rows | R-tree | label index
//! crc32 of everything before it, u32
//! ```
//!
//! The id index and the R-tree item boxes are derived from the rows on load.

use crate::geometry::{Point, Rect};
use crate::graph::{GraphStats, NodeId};

use super::rtree::{Entry, PackedRTree};
use super::trie::{LabelIndex, SuffixTrie};
use super::{id_index, EdgeGeometry, LayerTable, Manifest, Store, StoreError, TripleRow};

pub const MAGIC: &[u8; 4] = b"GVDB";
pub const FORMAT_VERSION: u16 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("section larger than u32::MAX entries"));
    }
    fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.0.extend_from_slice(b);
    }
    fn point(&mut self, p: Point) {
        self.f64(p.x);
        self.f64(p.y);
    }
    fn rect(&mut self, r: &Rect) {
        for v in [r.min_x, r.min_y, r.max_x, r.max_y] {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(StoreError::Truncated)?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], StoreError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, StoreError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, StoreError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    /// Reads a count and rejects it early when fewer than `min_size` bytes
    /// per element remain.
    fn len(&mut self, min_size: usize) -> Result<usize, StoreError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_size) > self.buf.len() - self.pos {
            return Err(StoreError::Truncated);
        }
        Ok(n)
    }
    fn bytes(&mut self) -> Result<&'a [u8], StoreError> {
        let n = self.len(1)?;
        self.take(n)
    }
    fn string(&mut self) -> Result<String, StoreError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| malformed("label is not UTF-8"))
    }
    fn point(&mut self) -> Result<Point, StoreError> {
        Ok(Point::new(self.f64()?, self.f64()?))
    }
    fn rect(&mut self) -> Result<Rect, StoreError> {
        Ok(Rect::new(self.f64()?, self.f64()?, self.f64()?, self.f64()?))
    }
}

fn malformed(msg: &str) -> StoreError {
    StoreError::Format(msg.to_string())
}

pub(super) fn encode(store: &Store) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.bytes(&serde_json::to_vec(&store.manifest).expect("manifest serializes"));
    w.len(store.layers.len());
    for t in &store.layers {
        write_layer(&mut w, t);
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

fn write_layer(w: &mut Writer, t: &LayerTable) {
    w.len(t.index);
    w.u64(t.stats.node_count as u64);
    w.u64(t.stats.edge_count as u64);
    w.f64(t.stats.avg_degree);
    w.f64(t.stats.density);

    w.len(t.rows.len());
    for r in &t.rows {
        w.u64(r.node1_id.0);
        w.bytes(r.node1_label.as_bytes());
        w.point(r.geometry.from);
        w.point(r.geometry.to);
        w.u8(r.geometry.directed as u8);
        w.bytes(r.edge_label.as_bytes());
        match (r.node2_id, &r.node2_label) {
            (Some(id), Some(label)) => {
                w.u8(1);
                w.u64(id.0);
                w.bytes(label.as_bytes());
            }
            _ => w.u8(0),
        }
    }

    let tree = &t.spatial;
    w.len(tree.node_size);
    w.len(tree.items.len());
    for &i in &tree.items {
        w.u32(i);
    }
    w.len(tree.levels.len());
    for level in &tree.levels {
        w.len(level.len());
        for e in level {
            w.rect(&e.bbox);
            w.u32(e.start);
            w.u32(e.end);
        }
    }

    let labels = &t.labels;
    w.len(labels.labels.len());
    for (label, ids) in labels.labels.iter().zip(&labels.nodes) {
        w.bytes(label.as_bytes());
        w.len(ids.len());
        for id in ids {
            w.u64(id.0);
        }
    }
    let trie = &labels.trie;
    w.len(trie.chars.len());
    for i in 0..trie.chars.len() {
        w.u32(trie.chars[i] as u32);
        w.u32(trie.ends[i]);
        w.u32(trie.post_starts[i]);
    }
    w.len(trie.postings.len());
    for &p in &trie.postings {
        w.u32(p);
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<Store, StoreError> {
    if bytes.len() < MAGIC.len() {
        return Err(StoreError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let body_len = bytes.len().checked_sub(4).filter(|&l| l >= r.pos).ok_or(StoreError::Truncated)?;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(StoreError::Checksum { stored, computed });
    }
    let mut r = Reader { buf: &bytes[..body_len], pos: r.pos };

    let manifest: Manifest =
        serde_json::from_slice(r.bytes()?).map_err(|e| StoreError::Format(format!("manifest: {e}")))?;
    let count = r.len(1)?;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let t = read_layer(&mut r)?;
        if t.index != i {
            return Err(StoreError::LayerOrder { expected: i, found: t.index });
        }
        layers.push(t);
    }
    if r.pos != r.buf.len() {
        return Err(malformed("trailing bytes after last layer"));
    }
    if manifest.layers.len() != layers.len() {
        return Err(malformed("manifest layer count disagrees with layer blocks"));
    }
    Ok(Store { manifest, layers })
}

fn read_layer(r: &mut Reader) -> Result<LayerTable, StoreError> {
    let index = r.u32()? as usize;
    let stats = GraphStats {
        node_count: r.u64()? as usize,
        edge_count: r.u64()? as usize,
        avg_degree: r.f64()?,
        density: r.f64()?,
    };

    let n_rows = r.len(8 + 4 + 32 + 1 + 4 + 1)?;
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let node1_id = NodeId(r.u64()?);
        let node1_label = r.string()?;
        let from = r.point()?;
        let to = r.point()?;
        let directed = r.u8()? != 0;
        let edge_label = r.string()?;
        let (node2_id, node2_label) = match r.u8()? {
            0 => (None, None),
            1 => (Some(NodeId(r.u64()?)), Some(r.string()?)),
            _ => return Err(malformed("bad row tag")),
        };
        rows.push(TripleRow {
            node1_id,
            node1_label,
            geometry: EdgeGeometry { from, to, directed },
            edge_label,
            node2_id,
            node2_label,
        });
    }
    if rows.windows(2).any(|w| w[0].sort_key() > w[1].sort_key()) {
        return Err(malformed("rows out of order"));
    }

    let node_size = r.u32()? as usize;
    let n_items = r.len(4)?;
    if n_items != rows.len() {
        return Err(malformed("R-tree item count disagrees with row count"));
    }
    let mut items = Vec::with_capacity(n_items);
    for _ in 0..n_items {
        let i = r.u32()?;
        if i as usize >= rows.len() {
            return Err(malformed("R-tree item out of range"));
        }
        items.push(i);
    }
    let n_levels = r.len(4)?;
    let mut levels: Vec<Vec<Entry>> = Vec::with_capacity(n_levels);
    for l in 0..n_levels {
        let below = if l == 0 { items.len() } else { levels[l - 1].len() };
        let n = r.len(40)?;
        let mut level = Vec::with_capacity(n);
        for _ in 0..n {
            let e = Entry { bbox: r.rect()?, start: r.u32()?, end: r.u32()? };
            if e.start > e.end || e.end as usize > below {
                return Err(malformed("R-tree child range out of bounds"));
            }
            level.push(e);
        }
        levels.push(level);
    }
    let item_boxes = items.iter().map(|&i| rows[i as usize].geometry.bbox()).collect();
    let spatial = PackedRTree { node_size, items, item_boxes, levels };

    let n_labels = r.len(8)?;
    let mut labels = Vec::with_capacity(n_labels);
    let mut nodes = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        labels.push(r.string()?);
        let n = r.len(8)?;
        nodes.push((0..n).map(|_| r.u64().map(NodeId)).collect::<Result<Vec<_>, _>>()?);
    }
    let n_trie = r.len(12)?;
    if n_trie == 0 {
        return Err(malformed("label trie has no root"));
    }
    let mut trie = SuffixTrie { chars: Vec::new(), ends: Vec::new(), post_starts: Vec::new(), postings: Vec::new() };
    for i in 0..n_trie {
        let c = char::from_u32(r.u32()?).ok_or_else(|| malformed("invalid trie character"))?;
        let end = r.u32()?;
        if (end as usize) <= i || end as usize > n_trie {
            return Err(malformed("trie subtree range out of bounds"));
        }
        trie.chars.push(c);
        trie.ends.push(end);
        trie.post_starts.push(r.u32()?);
    }
    let n_post = r.len(4)?;
    for _ in 0..n_post {
        let p = r.u32()?;
        if p as usize >= labels.len() {
            return Err(malformed("trie posting out of range"));
        }
        trie.postings.push(p);
    }
    if trie.post_starts.windows(2).any(|w| w[0] > w[1]) || trie.post_starts.iter().any(|&s| s as usize > n_post) {
        return Err(malformed("trie postings out of order"));
    }

    let ids = id_index(&rows);
    let labels = LabelIndex::from_parts(labels, nodes, Some(trie));
    Ok(LayerTable { index, rows, spatial, ids, labels, stats })
}
