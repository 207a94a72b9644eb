use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer index {index} out of range 1..={depth}")]
    LayerIndex { index: usize, depth: usize },

    #[error("non-finite objective at iteration {iteration} (value {value})")]
    Diverged { iteration: usize, value: f64 },

    #[error("all {} epsilon candidates diverged: {tried:?}", tried.len())]
    AllCandidatesDiverged { tried: Vec<f64> },

    #[error("matrix of layer {layer} is singular or near-singular (pivot {pivot:e})")]
    Singular { layer: usize, pivot: f64 },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}
