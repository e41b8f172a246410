use std::io;

use pmsr_core::{FieldError, MatrixError, MsrError, PirError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("config: {0}")]
    Config(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("store: {0}")]
    Store(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad frame: {0}")]
    BadFrame(String),
    #[error("node {node} replied with error: {message}")]
    Remote { node: usize, message: String },
    #[error("node {node} unreachable: {source}")]
    Unreachable { node: usize, source: io::Error },
    #[error("node {node} sent an unexpected reply")]
    UnexpectedReply { node: usize },
    #[error("retrieval unavailable: {0}")]
    RetrievalUnavailable(String),
    #[error("insufficient helpers: {live} live, {needed} needed")]
    InsufficientHelpers { live: usize, needed: usize },
    #[error("put aborted: {0}")]
    PutAborted(String),
    #[error("repair verification failed for record {record} stripe {stripe}")]
    RepairMismatch { record: u32, stripe: u32 },
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Msr(#[from] MsrError),
    #[error(transparent)]
    Pir(#[from] PirError),
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;
