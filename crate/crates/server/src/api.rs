//! Read-only HTTP API over an immutable [`Store`].
//!
//! | route            | parameters                                   |
//! |------------------|----------------------------------------------|
//! | `/api/manifest`  |                                              |
//! | `/api/window`    | `layer x1 y1 x2 y2 [labels] [timings]`       |
//! | `/api/search`    | `layer q [limit]`                            |
//! | `/api/node`      | `layer id [width height]`                    |
//! | `/api/stats`     | `layer`                                      |
//! | `/api/birdview`  | `layer [max_points]`                         |
//!
//! Window results stream as newline-delimited JSON: one object per chunk,
//! then a summary object.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use bytes::Bytes;
use serde::Serialize;
use serde_json::json;

use gvdb_core::store::{Store, StoreError, TripleRow};
use gvdb_core::viewport::{focus_window, DEFAULT_CHUNK_SIZE};
use gvdb_core::{NodeId, Point, Rect};

pub const NDJSON: &str = "application/x-ndjson";
pub const DEFAULT_SEARCH_LIMIT: usize = 20;
pub const MAX_SEARCH_LIMIT: usize = 10_000;
pub const DEFAULT_BIRDVIEW_POINTS: usize = 2_000;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub chunk_size: usize,
}

impl AppState {
    pub fn new(store: Store) -> AppState {
        AppState { store: Arc::new(store), chunk_size: DEFAULT_CHUNK_SIZE }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> AppState {
        self.chunk_size = chunk_size.max(1);
        self
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/manifest", get(manifest))
        .route("/api/window", get(window))
        .route("/api/search", get(search))
        .route("/api/node", get(node))
        .route("/api/stats", get(stats))
        .route("/api/birdview", get(birdview))
        .with_state(state)
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Internal,
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        match e {
            StoreError::UnknownLayer(_) | StoreError::NotFound { .. } => ApiError::NotFound(e.to_string()),
            StoreError::InvalidWindow | StoreError::EmptyKeyword => ApiError::BadRequest(e.to_string()),
            other => {
                log::error!("request failed: {other}");
                ApiError::Internal
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal error".to_string()),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

type Params = Query<HashMap<String, String>>;

fn required<T: std::str::FromStr>(p: &HashMap<String, String>, key: &str) -> Result<T, ApiError> {
    let raw = p.get(key).ok_or_else(|| ApiError::BadRequest(format!("missing parameter `{key}`")))?;
    raw.parse().map_err(|_| ApiError::BadRequest(format!("invalid value for `{key}`: {raw:?}")))
}

fn optional<T: std::str::FromStr>(p: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    p.contains_key(key).then(|| required(p, key)).transpose()
}

fn coordinate(p: &HashMap<String, String>, key: &str) -> Result<f64, ApiError> {
    let v: f64 = required(p, key)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ApiError::BadRequest(format!("`{key}` must be finite")))
    }
}

async fn manifest(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(s.store.manifest()).expect("manifest serializes"))
}

#[derive(Serialize)]
struct Chunk<'a> {
    chunk: usize,
    count: usize,
    rows: Vec<&'a TripleRow>,
}

#[derive(Serialize)]
pub struct Timings {
    pub query_ms: f64,
    pub serialize_ms: f64,
}

#[derive(Serialize)]
struct Summary {
    total_rows: usize,
    chunks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Streams the rows of one window. Rows are serialized lazily as the body is
/// polled; the query time goes out in a `Server-Timing` header, and with
/// `timings=true` both times are appended to the summary.
async fn window(State(s): State<AppState>, Query(p): Params) -> Result<Response, ApiError> {
    let layer: usize = required(&p, "layer")?;
    let (x1, y1, x2, y2) = (coordinate(&p, "x1")?, coordinate(&p, "y1")?, coordinate(&p, "x2")?, coordinate(&p, "y2")?);
    let rect = Rect::new(x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2));
    let labels: Option<HashSet<String>> =
        p.get("labels").map(|l| l.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect());
    let with_timings = optional::<bool>(&p, "timings")?.unwrap_or(false);

    let store = s.store.clone();
    let started = Instant::now();
    let offsets = tokio::task::spawn_blocking(move || -> Result<Vec<u32>, StoreError> {
        let table = store.layer(layer)?;
        let hits = table.window_offsets(&rect);
        Ok(match &labels {
            None => hits,
            Some(allowed) => hits
                .into_iter()
                .filter(|&i| {
                    let r = &table.rows()[i as usize];
                    r.is_node_row() || allowed.contains(&r.edge_label)
                })
                .collect(),
        })
    })
    .await
    .map_err(|_| ApiError::Internal)??;
    let query_time = started.elapsed();

    let store = s.store.clone();
    let chunk_size = s.chunk_size;
    let n_chunks = offsets.len().div_ceil(chunk_size);
    let mut serialize_time = Duration::ZERO;
    let pieces = (0..=n_chunks).map(move |i| -> Result<Bytes, std::convert::Infallible> {
        let t = Instant::now();
        let mut line = if i < n_chunks {
            let table = store.layer(layer).expect("layer checked by query");
            let slice = &offsets[i * chunk_size..((i + 1) * chunk_size).min(offsets.len())];
            let rows: Vec<&TripleRow> = slice.iter().map(|&o| &table.rows()[o as usize]).collect();
            let v = serde_json::to_vec(&Chunk { chunk: i, count: rows.len(), rows }).expect("rows serialize");
            serialize_time += t.elapsed();
            v
        } else {
            let timings = with_timings
                .then(|| Timings { query_ms: ms(query_time), serialize_ms: ms(serialize_time) });
            let summary = Summary { total_rows: offsets.len(), chunks: n_chunks, timings };
            serde_json::to_vec(&json!({ "summary": summary })).expect("summary serializes")
        };
        line.push(b'\n');
        Ok(Bytes::from(line))
    });

    let mut resp = Response::new(Body::from_stream(futures::stream::iter(pieces)));
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(NDJSON));
    if let Ok(v) = HeaderValue::from_str(&format!("query;dur={:.3}", ms(query_time))) {
        headers.insert("server-timing", v);
    }
    Ok(resp)
}

#[derive(Serialize)]
struct NodeRef<'a> {
    id: NodeId,
    label: &'a str,
}

async fn search(State(s): State<AppState>, Query(p): Params) -> Result<Json<serde_json::Value>, ApiError> {
    let layer: usize = required(&p, "layer")?;
    let q: String = required(&p, "q")?;
    let limit = optional::<usize>(&p, "limit")?.unwrap_or(DEFAULT_SEARCH_LIMIT).min(MAX_SEARCH_LIMIT);
    let hits = s.store.keyword_search(layer, &q, limit)?;
    let hits: Vec<NodeRef> = hits.iter().map(|(id, label)| NodeRef { id: *id, label }).collect();
    Ok(Json(json!({ "layer": layer, "query": q, "hits": hits })))
}

#[derive(Serialize)]
struct Placed<'a> {
    id: NodeId,
    label: &'a str,
    position: Point,
}

/// Focus payload: the node, its neighbours with positions, and the incident
/// rows. With `width` and `height` the client-sized focus window is added.
async fn node(State(s): State<AppState>, Query(p): Params) -> Result<Json<serde_json::Value>, ApiError> {
    let layer: usize = required(&p, "layer")?;
    let id = NodeId(required(&p, "id")?);
    let info = s.store.node_lookup(layer, id)?;
    let table = s.store.layer(layer)?;
    let neighbours: Vec<Placed> = info
        .neighbours()
        .into_iter()
        .filter_map(|n| table.node_position(n).map(|(position, label)| Placed { id: n, label, position }))
        .collect();
    let window = match (optional::<f64>(&p, "width")?, optional::<f64>(&p, "height")?) {
        (Some(w), Some(h)) if w >= 0.0 && h >= 0.0 => Some(focus_window(&s.store, layer, id, (w, h))?),
        (None, None) => None,
        _ => return Err(ApiError::BadRequest("`width` and `height` must both be given and non-negative".into())),
    };
    Ok(Json(json!({
        "layer": layer,
        "node": Placed { id, label: &info.label, position: info.position },
        "neighbours": neighbours,
        "rows": info.rows,
        "focus_window": window,
    })))
}

async fn stats(State(s): State<AppState>, Query(p): Params) -> Result<Json<serde_json::Value>, ApiError> {
    let layer: usize = required(&p, "layer")?;
    let stats = s.store.stats(layer)?;
    Ok(Json(json!({ "layer": layer, "stats": stats })))
}

async fn birdview(State(s): State<AppState>, Query(p): Params) -> Result<Json<serde_json::Value>, ApiError> {
    let layer: usize = required(&p, "layer")?;
    let max_points = optional::<usize>(&p, "max_points")?.unwrap_or(DEFAULT_BIRDVIEW_POINTS);
    let points = s.store.birdview(layer, max_points)?;
    let bounds = s.store.layer(layer)?.bounds();
    let points: Vec<(NodeId, f64, f64)> = points.into_iter().map(|(id, p)| (id, p.x, p.y)).collect();
    Ok(Json(json!({ "layer": layer, "bounds": bounds, "points": points })))
}
