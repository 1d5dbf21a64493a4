//! Labeled directed multigraph, text ingestion and basic statistics.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for NodeId {
    fn from(v: u64) -> Self {
        NodeId(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub label: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("edge endpoint {0} is not a node of the graph")]
    MissingEndpoint(NodeId),
}

/// Directed (or undirected) labeled multigraph.
///
/// Nodes keep their insertion order, edges keep input order. Parallel edges
/// and self-loops are allowed.
#[derive(Clone, Debug)]
pub struct Graph {
    directed: bool,
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    warnings: Vec<String>,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new(true)
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.directed == other.directed && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Graph {
    pub fn new(directed: bool) -> Self {
        Graph {
            directed,
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Non-fatal ingestion notices (label conflicts and the like).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    /// Dense position of `id` in [`Graph::nodes`].
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.node(id).map(|n| n.label.as_str())
    }

    /// Adds a node. An existing id keeps its first label; a differing label
    /// is recorded as a warning. Returns whether the node was new.
    pub fn add_node(&mut self, id: NodeId, label: impl Into<String>) -> bool {
        let label = label.into();
        if let Some(&i) = self.index.get(&id) {
            if self.nodes[i].label != label {
                let msg = format!(
                    "node {id}: label {label:?} ignored, keeping first label {:?}",
                    self.nodes[i].label
                );
                log::warn!("{msg}");
                self.warnings.push(msg);
            }
            return false;
        }
        self.index.insert(id, self.nodes.len());
        self.nodes.push(Node { id, label });
        true
    }

    pub fn add_edge(
        &mut self,
        source: NodeId,
        target: NodeId,
        label: impl Into<String>,
    ) -> Result<(), GraphError> {
        for id in [source, target] {
            if !self.contains(id) {
                return Err(GraphError::MissingEndpoint(id));
            }
        }
        self.edges.push(Edge { source, target, label: label.into() });
        Ok(())
    }

    /// Checks that every edge endpoint resolves in the node set.
    pub fn validate(&self) -> Result<(), GraphError> {
        for e in &self.edges {
            for id in [e.source, e.target] {
                if !self.contains(id) {
                    return Err(GraphError::MissingEndpoint(id));
                }
            }
        }
        Ok(())
    }

    /// Sub-graph on the nodes accepted by `keep`, with every edge whose two
    /// endpoints survive. Node and edge order are preserved.
    pub fn induced_subgraph<F: Fn(NodeId) -> bool>(&self, keep: F) -> Graph {
        let mut sub = Graph::new(self.directed);
        for n in &self.nodes {
            if keep(n.id) {
                sub.index.insert(n.id, sub.nodes.len());
                sub.nodes.push(n.clone());
            }
        }
        sub.edges = self
            .edges
            .iter()
            .filter(|e| sub.contains(e.source) && sub.contains(e.target))
            .cloned()
            .collect();
        sub
    }

    /// Edges as pairs of dense node indices.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .map(|e| (self.index[&e.source], self.index[&e.target]))
            .collect()
    }

    /// Serializes to the tab-separated edge-list format: one `id<TAB>label`
    /// line per node, then one five-field line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("{}\t{}\n", n.id, escape(&n.label)));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.source,
                escape(self.label(e.source).unwrap_or_default()),
                escape(&e.label),
                e.target,
                escape(self.label(e.target).unwrap_or_default()),
            ));
        }
        out
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    if !s.contains('\\') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Parses the tab-separated edge-list format.
///
/// Each data line is `src_id<TAB>src_label<TAB>edge_label<TAB>dst_id<TAB>dst_label`;
/// a two-field line `id<TAB>label` declares a (possibly isolated) node. Blank
/// lines and lines starting with `#` are skipped. The result is directed.
pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut g = Graph::new(true);
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_id = |s: &str| {
            s.parse::<u64>().map(NodeId).map_err(|_| GraphError::Parse {
                line: line_no,
                message: format!("invalid node id {s:?}"),
            })
        };
        match fields.as_slice() {
            [src, src_label, edge_label, dst, dst_label] => {
                let (src, dst) = (parse_id(src)?, parse_id(dst)?);
                g.add_node(src, unescape(src_label));
                g.add_node(dst, unescape(dst_label));
                g.add_edge(src, dst, unescape(edge_label))?;
            }
            [id, label] => {
                g.add_node(parse_id(id)?, unescape(label));
            }
            other => {
                return Err(GraphError::Parse {
                    line: line_no,
                    message: format!("expected 5 tab-separated fields, found {}", other.len()),
                })
            }
        }
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Term {
    Iri(String),
    Literal(String),
    Blank(String),
}

impl Term {
    fn label(&self) -> &str {
        match self {
            Term::Iri(s) | Term::Literal(s) | Term::Blank(s) => s,
        }
    }
}

struct TermReader<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> TermReader<'a> {
    fn err(&self, message: impl Into<String>) -> GraphError {
        GraphError::Parse { line: self.line, message: message.into() }
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn term(&mut self) -> Result<Term, GraphError> {
        self.skip_ws();
        if let Some(body) = self.rest.strip_prefix('<') {
            let end = body.find('>').ok_or_else(|| self.err("unterminated IRI"))?;
            let iri = body[..end].to_string();
            self.rest = &body[end + 1..];
            Ok(Term::Iri(iri))
        } else if let Some(body) = self.rest.strip_prefix('"') {
            let mut text = String::new();
            let mut chars = body.char_indices();
            let end = loop {
                match chars.next() {
                    None => return Err(self.err("unterminated literal")),
                    Some((i, '"')) => break i,
                    Some((_, '\\')) => match chars.next() {
                        Some((_, 'n')) => text.push('\n'),
                        Some((_, 't')) => text.push('\t'),
                        Some((_, 'r')) => text.push('\r'),
                        Some((_, 'u')) => {
                            let hex: String = (0..4).filter_map(|_| chars.next().map(|c| c.1)).collect();
                            let c = u32::from_str_radix(&hex, 16)
                                .ok()
                                .and_then(char::from_u32)
                                .ok_or_else(|| self.err("invalid \\u escape"))?;
                            text.push(c);
                        }
                        Some((_, c)) => text.push(c),
                        None => return Err(self.err("unterminated literal")),
                    },
                    Some((_, c)) => text.push(c),
                }
            };
            self.rest = &body[end + 1..];
            // language tags and datatypes are accepted and dropped
            if let Some(tagged) = self.rest.strip_prefix('@') {
                let n = tagged
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                    .unwrap_or(tagged.len());
                self.rest = &tagged[n..];
            } else if let Some(typed) = self.rest.strip_prefix("^^") {
                self.rest = typed;
                match self.term()? {
                    Term::Iri(_) => {}
                    _ => return Err(self.err("datatype must be an IRI")),
                }
            }
            Ok(Term::Literal(text))
        } else if self.rest.starts_with("_:") {
            let n = self.rest.find(char::is_whitespace).unwrap_or(self.rest.len());
            let label = self.rest[..n].to_string();
            self.rest = &self.rest[n..];
            Ok(Term::Blank(label))
        } else {
            Err(self.err("expected <IRI>, \"literal\" or _:blank"))
        }
    }
}

/// Parses a subset of N-Triples: `<s> <p> <o> .` per line, objects may be
/// quoted literals, which become leaf nodes labeled with their text.
///
/// Every distinct term gets a fresh id in order of first appearance,
/// starting at 0. Predicates become edge labels.
pub fn parse_ntriples_subset(text: &str) -> Result<Graph, GraphError> {
    let mut g = Graph::new(true);
    let mut ids: HashMap<Term, NodeId> = HashMap::new();
    let mut intern = |g: &mut Graph, t: Term| -> NodeId {
        let next = NodeId(ids.len() as u64);
        *ids.entry(t.clone()).or_insert_with(|| {
            g.add_node(next, t.label());
            next
        })
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut r = TermReader { rest: line, line: i + 1 };
        let s = r.term()?;
        if matches!(s, Term::Literal(_)) {
            return Err(r.err("subject cannot be a literal"));
        }
        let p = match r.term()? {
            Term::Iri(p) => p,
            _ => return Err(r.err("predicate must be an IRI")),
        };
        let o = r.term()?;
        r.skip_ws();
        match r.rest.strip_prefix('.') {
            Some(tail) if tail.trim().is_empty() || tail.trim_start().starts_with('#') => {}
            _ => return Err(r.err("missing trailing '.'")),
        }
        let s = intern(&mut g, s);
        let o = intern(&mut g, o);
        g.add_edge(s, o, p)?;
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub avg_degree: f64,
    pub density: f64,
}

/// Counts plus average (in+out) degree and density.
///
/// Density ignores self-loops: `m / (n(n-1))` when directed, twice that when
/// undirected. Parallel edges can push it above 1; the raw ratio is kept.
pub fn graph_stats(g: &Graph) -> GraphStats {
    let n = g.node_count();
    let m = g.edge_count();
    let loops = g.edges().iter().filter(|e| e.source == e.target).count();
    stats_from_counts(n, m, loops, g.is_directed())
}

pub(crate) fn stats_from_counts(n: usize, m: usize, self_loops: usize, directed: bool) -> GraphStats {
    let avg_degree = if n == 0 { 0.0 } else { 2.0 * m as f64 / n as f64 };
    let density = if n < 2 {
        0.0
    } else {
        let pairs = (n as f64) * (n as f64 - 1.0);
        let links = (m - self_loops) as f64;
        if directed {
            links / pairs
        } else {
            2.0 * links / pairs
        }
    };
    GraphStats { node_count: n, edge_count: m, avg_degree, density }
}
