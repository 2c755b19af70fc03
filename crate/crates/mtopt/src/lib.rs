//! Multi-task meta-optimization in plain Rust.
//!
//! The crate implements a small family of gradient-based multi-task
//! optimizers over a shared parameter vector:
//!
//! - joint descent on the summed task losses (optionally L2-regularized),
//! - Reptile-style meta-steps with one inner trajectory per task,
//! - a sequential variant that runs a single inner trajectory through a
//!   randomized task schedule,
//! - PCGrad-style gradient surgery.
//!
//! Around the optimizers it provides deterministic task sampling from
//! dataset sizes, exact and Monte Carlo estimators for expected
//! meta-gradients, a second-order surrogate objective with a step-size
//! order check, gradient-alignment reports, and loss-surface grids.
//!
//! Everything is deterministic given a seed: random draws flow through
//! [`RandomSource`], a counter-based generator with order-insensitive
//! child streams.

mod analysis;
mod error;
mod optim;
mod rng;
mod sampler;
mod task;
mod vector;

pub use analysis::{
    alignment_report, expected_meta_gradient_exact, expected_meta_gradient_mc,
    finite_difference_gradient, loss_grid, surrogate_objective, taylor_order_check,
    EstimateMethod, ExpectationEstimate, GradientAlignmentReport, GridBounds, LossGrid,
    ResidualRow, ResidualTable, SurrogateEval, DEFAULT_GRID_BOUNDS, DEFAULT_GRID_RESOLUTION,
    ENUMERATION_LIMIT,
};
pub use error::{Error, Result};
pub use optim::{
    gradient_surgery, inner_loop_single_task, inner_loop_with_schedule, joint_mtl_step,
    pcgrad_step,
    reptile_meta_step, sequential_reptile_meta_step, train, InnerTrajectory, MetaGradient,
    OptimizerKind, ProjectionEvent, RunConfig, SurgeryReport, TrainFailure, TrainRecord,
};
pub use rng::{RandomSource, GENERATOR_ID};
pub use sampler::{TaskSampler, DEFAULT_SIZE_EXPONENT};
pub use task::{
    full_batch, sample_batch, MiniBatch, QuadraticTask, RegressionTask, SyntheticRadialTask, Task,
    RADIAL_CUSP_EPS,
};
pub use vector::ParamVector;
