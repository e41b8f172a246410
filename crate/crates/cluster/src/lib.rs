//! Deployment layer for `pmsr-core`: a TCP storage-node daemon that keeps
//! coded shares on disk, a coordinator that writes, privately reads and
//! repairs records across the cluster, and the `pmsr` command line tool.
//!
//! User-facing identifiers are one-based here: nodes are `1..=n` and
//! records `1..=m`. The core crate is zero-based; conversion happens in the
//! coordinator and the daemon.

pub mod cli;
pub mod codec;
pub mod config;
pub mod coordinator;
pub mod daemon;
pub mod demo;
pub mod error;
pub mod local;
pub mod store;
pub mod wire;

pub use config::ClusterConfig;
pub use coordinator::Coordinator;
pub use error::ClusterError;
pub use store::ShareStore;
