//! File formats, persistence, HTTP service and command-line tooling for the
//! counseling chat engine in `solace-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
mod error;
pub mod files;
pub mod models;
pub mod server;
pub mod service;
pub mod store;

pub use error::{Error, Result};
pub use solace_core as core;
