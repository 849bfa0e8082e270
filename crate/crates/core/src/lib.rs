//! Imputation-free incomplete multi-view clustering.
//!
//! The pipeline groups samples by missing pattern with a pruned pattern tree,
//! clusters each group in a concatenated embedding space, fuses the group
//! decisions with inverse-entropy weights, and distills the fused decision
//! back into per-view autoencoder clustering models.

pub mod config;
pub mod dataset;
pub mod distill;
pub mod ensemble;
pub mod groupwise;
pub mod metrics;
pub mod mpt;
pub mod nn;
pub mod numkernel;
pub mod runner;
pub mod synth;

pub use config::RunConfig;
pub use dataset::{MaskMatrix, MultiViewDataset};
pub use numkernel::{Matrix, RngStream};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("degenerate row {row}: sum is not positive")]
    DegenerateRow { row: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("load error in {file} line {line}: {msg}")]
    Load {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
}

pub type Result<T> = std::result::Result<T, Error>;
