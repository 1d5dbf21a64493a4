//! Case-insensitive substring index over node labels.
//!
//! Every suffix of every lowercased label, truncated to [`MAX_DEPTH`]
//! characters, is inserted into a character trie. Nodes are stored in
//! depth-first order, so the labels below any trie node form one contiguous
//! run of `postings`. A keyword query walks its first characters down the
//! trie and reads that run; keywords longer than the depth limit are
//! confirmed against the full label.

use crate::graph::NodeId;

pub const MAX_DEPTH: usize = 8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelIndex {
    /// Distinct labels, sorted.
    pub(crate) labels: Vec<String>,
    pub(crate) lowered: Vec<String>,
    /// Node ids carrying each label, sorted.
    pub(crate) nodes: Vec<Vec<NodeId>>,
    pub(crate) trie: SuffixTrie,
}

/// Depth-first character trie; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct SuffixTrie {
    pub(crate) chars: Vec<char>,
    /// One past the last node of each subtree, which is also the index of
    /// the next sibling.
    pub(crate) ends: Vec<u32>,
    /// Offset of each node's first posting.
    pub(crate) post_starts: Vec<u32>,
    pub(crate) postings: Vec<u32>,
}

impl Default for SuffixTrie {
    fn default() -> Self {
        SuffixTrie { chars: vec!['\0'], ends: vec![1], post_starts: vec![0], postings: Vec::new() }
    }
}

impl SuffixTrie {
    fn build(lowered: &[Vec<char>]) -> SuffixTrie {
        let mut suffixes: Vec<(u32, u32)> = Vec::new();
        for (id, chars) in lowered.iter().enumerate() {
            suffixes.extend((0..chars.len()).map(|s| (id as u32, s as u32)));
        }
        let key = |&(id, s): &(u32, u32)| {
            let c = &lowered[id as usize];
            let s = s as usize;
            &c[s..(s + MAX_DEPTH).min(c.len())]
        };
        suffixes.sort_unstable_by(|a, b| key(a).cmp(key(b)).then(a.0.cmp(&b.0)));

        let mut trie = SuffixTrie::default();
        // stack[d] = node at depth d + 1 on the current path
        let mut stack: Vec<u32> = Vec::new();
        let mut previous: Option<(&[char], u32)> = None;
        for suffix in &suffixes {
            let k = key(suffix);
            let mut common = 0;
            while common < stack.len() && common < k.len() && trie.chars[stack[common] as usize] == k[common] {
                common += 1;
            }
            let now = trie.chars.len() as u32;
            for node in stack.drain(common..) {
                trie.ends[node as usize] = now;
            }
            for &c in &k[common..] {
                stack.push(trie.chars.len() as u32);
                trie.chars.push(c);
                trie.ends.push(0);
                trie.post_starts.push(trie.postings.len() as u32);
            }
            if previous != Some((k, suffix.0)) {
                trie.postings.push(suffix.0);
            }
            previous = Some((k, suffix.0));
        }
        let now = trie.chars.len() as u32;
        for node in stack {
            trie.ends[node as usize] = now;
        }
        trie.ends[0] = now;
        trie
    }

    fn node_count(&self) -> usize {
        self.chars.len()
    }

    fn child(&self, node: usize, c: char) -> Option<usize> {
        let mut child = node + 1;
        while child < self.ends[node] as usize {
            if self.chars[child] == c {
                return Some(child);
            }
            child = self.ends[child] as usize;
        }
        None
    }

    /// Label ids with a substring equal to `prefix` (at most `MAX_DEPTH`
    /// chars), possibly repeated.
    fn subtree_postings(&self, prefix: &[char]) -> &[u32] {
        let mut node = 0;
        for &c in prefix {
            match self.child(node, c) {
                Some(next) => node = next,
                None => return &[],
            }
        }
        let start = self.post_starts[node] as usize;
        let end = self
            .post_starts
            .get(self.ends[node] as usize)
            .map_or(self.postings.len(), |&p| p as usize);
        &self.postings[start..end]
    }
}

impl LabelIndex {
    pub fn build<'a>(entries: impl IntoIterator<Item = (NodeId, &'a str)>) -> LabelIndex {
        let mut pairs: Vec<(&str, NodeId)> = entries.into_iter().map(|(id, l)| (l, id)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut labels: Vec<String> = Vec::new();
        let mut nodes: Vec<Vec<NodeId>> = Vec::new();
        for (label, id) in pairs {
            if labels.last().map(String::as_str) != Some(label) {
                labels.push(label.to_string());
                nodes.push(Vec::new());
            }
            nodes.last_mut().unwrap().push(id);
        }
        Self::from_parts(labels, nodes, None)
    }

    pub(crate) fn from_parts(labels: Vec<String>, nodes: Vec<Vec<NodeId>>, trie: Option<SuffixTrie>) -> LabelIndex {
        let lowered: Vec<String> = labels.iter().map(|l| l.to_lowercase()).collect();
        let trie = trie.unwrap_or_else(|| {
            let chars: Vec<Vec<char>> = lowered.iter().map(|l| l.chars().collect()).collect();
            SuffixTrie::build(&chars)
        });
        LabelIndex { labels, lowered, nodes, trie }
    }

    pub fn distinct_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn trie_nodes(&self) -> usize {
        self.trie.node_count()
    }

    /// Nodes whose label contains `keyword`, ignoring case, sorted by
    /// `(label, id)` and cut to `limit`.
    pub fn search(&self, keyword: &str, limit: usize) -> Vec<(NodeId, String)> {
        let kw = keyword.to_lowercase();
        let kw_chars: Vec<char> = kw.chars().collect();
        if kw_chars.is_empty() || limit == 0 {
            return Vec::new();
        }
        let probe = &kw_chars[..kw_chars.len().min(MAX_DEPTH)];
        let mut hits: Vec<u32> = self.trie.subtree_postings(probe).to_vec();
        hits.sort_unstable();
        hits.dedup();
        if kw_chars.len() > MAX_DEPTH {
            hits.retain(|&l| self.lowered[l as usize].contains(&kw));
        }
        let mut out = Vec::new();
        'labels: for l in hits {
            for &id in &self.nodes[l as usize] {
                if out.len() == limit {
                    break 'labels;
                }
                out.push((id, self.labels[l as usize].clone()));
            }
        }
        out
    }
}
