//! Offline preprocessing and spatial storage for interactive exploration of
//! very large labeled graphs.
//!
//! The pipeline turns an input graph into a multi-layer [`store::Store`]:
//!
//! 1. [`partition`] splits the graph into `k` sub-graphs with a small edge cut.
//! 2. [`layout`] assigns local coordinates to every partition independently.
//! 3. [`organize`] places the partitions on a shared plane without overlap,
//!    greedily keeping crossing edges short.
//! 4. [`abstraction`] derives coarser layers by filtering nodes on a ranking
//!    criterion (degree, PageRank, HITS authority).
//! 5. [`store`] materializes every layer as triple rows and indexes them with
//!    a packed R-tree, an id index and a substring label index.
//!
//! The online side ([`viewport`], [`store::Store::window_query`],
//! [`store::Store::keyword_search`], [`store::Store::node_lookup`]) answers
//! window, keyword and focus queries against the immutable store.

pub mod abstraction;
pub mod exec;
pub mod geometry;
pub mod graph;
pub mod layout;
pub mod organize;
pub mod partition;
pub mod pipeline;
pub mod store;
pub mod viewport;

pub use exec::Execution;
pub use geometry::{Point, Rect};
pub use graph::{Edge, Graph, GraphError, GraphStats, Node, NodeId};
