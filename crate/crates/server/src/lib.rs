//! HTTP query service and command-line front end for gvdb stores.

pub mod api;
pub mod cli;

pub use api::{router, AppState};
