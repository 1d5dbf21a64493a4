//! Client viewports and the windows they translate to.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Rect};
use crate::graph::NodeId;
use crate::store::{Store, StoreError, TripleRow};

pub const DEFAULT_CHUNK_SIZE: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum ViewportError {
    #[error("zoom must be a finite positive number, got {0}")]
    Zoom(f64),
    #[error("viewport size must be finite and non-negative, got {0}x{1}")]
    Size(f64, f64),
    #[error("chunk size must be at least 1")]
    ChunkSize,
}

/// What the client currently shows: `width`x`height` screen pixels centered
/// on `center` in global coordinates, magnified by `zoom`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub center: Point,
    pub width: f64,
    pub height: f64,
    pub zoom: f64,
}

/// The plane rectangle visible through `v`: zooming in by a factor shrinks
/// both sides by the same factor.
pub fn effective_window(v: &Viewport) -> Result<Rect, ViewportError> {
    if !(v.zoom.is_finite() && v.zoom > 0.0) {
        return Err(ViewportError::Zoom(v.zoom));
    }
    if !(v.width.is_finite() && v.height.is_finite() && v.width >= 0.0 && v.height >= 0.0) {
        return Err(ViewportError::Size(v.width, v.height));
    }
    Ok(Rect::centered(v.center, v.width / v.zoom, v.height / v.zoom))
}

/// Client-sized window centered on the stored position of `node`.
pub fn focus_window(store: &Store, layer: usize, node: NodeId, client_size: (f64, f64)) -> Result<Rect, StoreError> {
    let info = store.node_lookup(layer, node)?;
    Ok(Rect::centered(info.position, client_size.0, client_size.1))
}

/// A window result cut into consecutive pieces for streaming.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkedResult<T = TripleRow> {
    pub chunks: Vec<Vec<T>>,
}

impl<T> ChunkedResult<T> {
    pub fn split(rows: Vec<T>, chunk_size: usize) -> Result<Self, ViewportError> {
        if chunk_size == 0 {
            return Err(ViewportError::ChunkSize);
        }
        let mut chunks = Vec::with_capacity(rows.len().div_ceil(chunk_size));
        let mut rest = rows.into_iter().peekable();
        while rest.peek().is_some() {
            chunks.push(rest.by_ref().take(chunk_size).collect());
        }
        Ok(ChunkedResult { chunks })
    }

    pub fn total_rows(&self) -> usize {
        self.chunks.iter().map(Vec::len).sum()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.chunks.iter().map(Vec::len).collect()
    }

    pub fn concat(self) -> Vec<T> {
        self.chunks.into_iter().flatten().collect()
    }
}
