//! Crate-wide error type.
//!
//! Numerical edge cases that callers might want to branch on (zero-norm
//! cosines, divergence, enumeration blow-up) get their own variants so
//! they never degrade into silent defaults.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A vector operation received operands of different lengths.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Parameter vectors must hold at least one coordinate.
    #[error("parameter vectors must be non-empty")]
    EmptyVector,

    /// A constructor or operation received a NaN or infinite value.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Cosine similarity is undefined for zero-norm inputs.
    #[error("cosine similarity undefined: {side} vector has zero norm")]
    ZeroNorm { side: &'static str },

    /// Alignment diagnostics refuse zero gradients rather than reporting 0.
    #[error("task {task_id} has a zero gradient; alignment is undefined there")]
    ZeroGradient { task_id: usize },

    /// A mini-batch referenced an example outside the task's dataset.
    #[error("batch index {index} out of range for task {task_id} (dataset size {dataset_size})")]
    BatchIndexOutOfRange {
        task_id: usize,
        index: usize,
        dataset_size: usize,
    },

    /// Batches must contain at least one example.
    #[error("empty batch for task {task_id}")]
    EmptyBatch { task_id: usize },

    /// Sampler construction needs at least one task.
    #[error("sampler needs at least one task")]
    EmptySampler,

    /// Dataset counts feeding a sampler must be at least 1.
    #[error("dataset count for task {index} must be >= 1, got {count}")]
    InvalidCount { index: usize, count: u64 },

    /// Explicit sampling weights must be positive and finite.
    #[error("sampling weight for task {index} must be positive and finite, got {weight}")]
    InvalidWeight { index: usize, weight: f64 },

    /// A run configuration failed validation.
    #[error("invalid config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },

    /// An optimizer produced a non-finite loss or parameter entry.
    #[error("divergence at outer step {outer_step}, inner step {inner_step}: {detail}")]
    Divergence {
        outer_step: usize,
        inner_step: usize,
        detail: String,
    },

    /// Exact expectation enumeration is capped to keep runs tractable.
    #[error("enumeration of {required} sequences exceeds the limit of {limit}")]
    EnumerationTooLarge { required: u128, limit: u64 },

    /// Exact enumeration requires tasks with deterministic full-batch losses.
    #[error("task {task_id} is stochastic; exact enumeration needs deterministic tasks")]
    StochasticTask { task_id: usize },

    /// An operation that needs at least one task got an empty slice.
    #[error("no tasks supplied")]
    NoTasks,

    /// Grid evaluation is only defined over two-dimensional parameters.
    #[error("loss grids need 2-d tasks, found dimension {dim}")]
    GridDimension { dim: usize },

    /// Grid resolution must be at least 2 in each axis.
    #[error("grid resolution must be >= 2, got {nx}x{ny}")]
    GridResolution { nx: usize, ny: usize },

    /// Monte Carlo estimates need at least two samples for a standard error.
    #[error("Monte Carlo estimation needs at least 2 samples, got {samples}")]
    TooFewSamples { samples: usize },
}
