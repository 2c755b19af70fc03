//! Task families: differentiable losses over a shared parameter vector.
//!
//! A task owns a dataset (possibly a single synthetic "example") and
//! returns, for any parameter vector and mini-batch, the batch loss and its
//! analytic gradient. Tasks are immutable after construction and safe to
//! share across threads.
//!
//! Three families are provided:
//!
//! - [`SyntheticRadialTask`]: a radial exponential well `-A * exp(-r * d)`
//!   with `d = ||phi - center||`, the two-dimensional landscape used by the
//!   convergence demos;
//! - [`QuadraticTask`]: `0.5 * ||phi - target||^2`, the constant-Hessian
//!   family every closed-form oracle is built on;
//! - [`RegressionTask`]: mean squared error of a linear model over a
//!   generated dataset, the only stochastic family.

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::vector::ParamVector;

/// Distances at or below this count as "at the cusp" of the radial well,
/// where the gradient is defined as zero.
pub const RADIAL_CUSP_EPS: f64 = 1e-12;

/// Indices into a task's dataset; sampling is uniform with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    indices: Vec<usize>,
}

impl MiniBatch {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    /// The whole dataset, in order.
    pub fn full(dataset_size: usize) -> Self {
        Self {
            indices: (0..dataset_size).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// A differentiable loss with an analytic gradient.
pub trait Task: Send + Sync {
    /// Stable identifier, used in error reports and diagnostics.
    fn id(&self) -> usize;

    /// Dimension of the parameter vector this task expects.
    fn dim(&self) -> usize;

    /// Number of examples; 1 for deterministic full-batch tasks.
    fn dataset_size(&self) -> usize;

    /// Deterministic tasks always evaluate on their full dataset.
    fn is_deterministic(&self) -> bool {
        self.dataset_size() == 1
    }

    /// Batch loss and analytic batch gradient at `params`.
    fn evaluate(&self, params: &ParamVector, batch: &MiniBatch) -> Result<(f64, ParamVector)>;

    /// Hessian-vector product at `params`, where the family has a closed
    /// form. `None` means callers must fall back to finite differences.
    fn hessian_vector_product(
        &self,
        params: &ParamVector,
        vector: &ParamVector,
        batch: &MiniBatch,
    ) -> Option<Result<ParamVector>> {
        let _ = (params, vector, batch);
        None
    }

    /// Full-dataset loss.
    fn loss(&self, params: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(params, &MiniBatch::full(self.dataset_size()))?.0)
    }

    /// Full-dataset gradient.
    fn gradient(&self, params: &ParamVector) -> Result<ParamVector> {
        Ok(self.evaluate(params, &MiniBatch::full(self.dataset_size()))?.1)
    }
}

fn check_params(task: &dyn Task, params: &ParamVector) -> Result<()> {
    if params.dim() != task.dim() {
        return Err(Error::DimensionMismatch {
            expected: task.dim(),
            found: params.dim(),
        });
    }
    Ok(())
}

fn check_batch(task: &dyn Task, batch: &MiniBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch { task_id: task.id() });
    }
    let n = task.dataset_size();
    if let Some(&index) = batch.indices().iter().find(|&&i| i >= n) {
        return Err(Error::BatchIndexOutOfRange {
            task_id: task.id(),
            index,
            dataset_size: n,
        });
    }
    Ok(())
}

/// Draws a batch for `task`: the full dataset for deterministic tasks
/// (consuming no randomness), otherwise `batch_size` uniform draws with
/// replacement.
pub fn sample_batch(task: &dyn Task, batch_size: usize, rng: &mut RandomSource) -> MiniBatch {
    if task.is_deterministic() {
        return MiniBatch::full(task.dataset_size());
    }
    let n = task.dataset_size();
    MiniBatch::new((0..batch_size).map(|_| rng.index(n)).collect())
}

/// The full-dataset batch for `task`.
pub fn full_batch(task: &dyn Task) -> MiniBatch {
    MiniBatch::full(task.dataset_size())
}

/// Radial exponential well `-A * exp(-r * ||phi - center||)`.
///
/// The minimum sits at `center` with value `-A`; the loss decays toward 0
/// far away. The gradient magnitude `A * r * exp(-r * d)` does not vanish
/// near the center (the surface has a cusp there), so fixed-step descent
/// orbits the center at a radius proportional to the step size.
#[derive(Debug, Clone)]
pub struct SyntheticRadialTask {
    id: usize,
    center: ParamVector,
    amplitude: f64,
    rate: f64,
}

impl SyntheticRadialTask {
    /// Standard well: amplitude 200, rate 0.2.
    pub fn new(id: usize, center: ParamVector) -> Self {
        Self::with_shape(id, center, 200.0, 0.2)
    }

    pub fn with_shape(id: usize, center: ParamVector, amplitude: f64, rate: f64) -> Self {
        Self {
            id,
            center,
            amplitude,
            rate,
        }
    }

    pub fn center(&self) -> &ParamVector {
        &self.center
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Task for SyntheticRadialTask {
    fn id(&self) -> usize {
        self.id
    }

    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn dataset_size(&self) -> usize {
        1
    }

    fn evaluate(&self, params: &ParamVector, batch: &MiniBatch) -> Result<(f64, ParamVector)> {
        check_params(self, params)?;
        check_batch(self, batch)?;
        let d = params.l2_distance(&self.center)?;
        let loss = -self.amplitude * (-self.rate * d).exp();
        let gradient = if d <= RADIAL_CUSP_EPS {
            // At the cusp the radial direction is undefined; clamp to zero.
            ParamVector::zeros(self.dim())?
        } else {
            let scale = self.amplitude * self.rate * (-self.rate * d).exp() / d;
            params.sub(&self.center)?.scale(scale)
        };
        Ok((loss, gradient))
    }
}

/// Quadratic bowl `0.5 * ||phi - target||^2` with identity Hessian.
#[derive(Debug, Clone)]
pub struct QuadraticTask {
    id: usize,
    target: ParamVector,
}

impl QuadraticTask {
    pub fn new(id: usize, target: ParamVector) -> Self {
        Self { id, target }
    }

    pub fn target(&self) -> &ParamVector {
        &self.target
    }
}

impl Task for QuadraticTask {
    fn id(&self) -> usize {
        self.id
    }

    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn dataset_size(&self) -> usize {
        1
    }

    fn evaluate(&self, params: &ParamVector, batch: &MiniBatch) -> Result<(f64, ParamVector)> {
        check_params(self, params)?;
        check_batch(self, batch)?;
        let diff = params.sub(&self.target)?;
        Ok((0.5 * diff.dot(&diff)?, diff))
    }

    fn hessian_vector_product(
        &self,
        params: &ParamVector,
        vector: &ParamVector,
        _batch: &MiniBatch,
    ) -> Option<Result<ParamVector>> {
        if params.dim() != self.dim() || vector.dim() != self.dim() {
            return Some(Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: vector.dim(),
            }));
        }
        Some(Ok(vector.clone()))
    }
}

/// Linear regression under squared error:
/// `0.5 * mean_{i in batch} (w . x_i - y_i)^2`.
#[derive(Debug, Clone)]
pub struct RegressionTask {
    id: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    true_weights: Option<ParamVector>,
}

impl RegressionTask {
    /// Builds a task from an explicit dataset.
    pub fn from_data(id: usize, inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidConfig {
                field: "regression.data",
                message: format!(
                    "need matching non-empty inputs/targets, got {} and {}",
                    inputs.len(),
                    targets.len()
                ),
            });
        }
        let dim = inputs[0].len();
        if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::InvalidConfig {
                field: "regression.data",
                message: "inputs must be non-empty rows of equal dimension".into(),
            });
        }
        Ok(Self {
            id,
            inputs,
            targets,
            true_weights: None,
        })
    }

    /// Generates `n` examples `y = w* . x + noise * eps` with standard
    /// normal inputs, weights, and noise, all drawn from `rng`.
    pub fn generate(
        id: usize,
        n: usize,
        dim: usize,
        noise: f64,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidConfig {
                field: "regression.shape",
                message: format!("need n >= 1 and dim >= 1, got n={n}, dim={dim}"),
            });
        }
        let weights = ParamVector::new(rng.normal_vec(dim))?;
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.normal_vec(dim);
            let y: f64 = x
                .iter()
                .zip(weights.values())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + noise * rng.normal();
            inputs.push(x);
            targets.push(y);
        }
        Ok(Self {
            id,
            inputs,
            targets,
            true_weights: Some(weights),
        })
    }

    /// The generating weights, when the dataset was synthesized.
    pub fn true_weights(&self) -> Option<&ParamVector> {
        self.true_weights.as_ref()
    }
}

impl Task for RegressionTask {
    fn id(&self) -> usize {
        self.id
    }

    fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    fn dataset_size(&self) -> usize {
        self.inputs.len()
    }

    fn evaluate(&self, params: &ParamVector, batch: &MiniBatch) -> Result<(f64, ParamVector)> {
        check_params(self, params)?;
        check_batch(self, batch)?;
        let m = batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim()];
        for &i in batch.indices() {
            let x = &self.inputs[i];
            let residual: f64 = x
                .iter()
                .zip(params.values())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                - self.targets[i];
            loss += 0.5 * residual * residual;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += residual * xi;
            }
        }
        let gradient = ParamVector::new(grad.into_iter().map(|g| g / m).collect())?;
        Ok((loss / m, gradient))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(values: &[f64]) -> ParamVector {
        ParamVector::new(values.to_vec()).unwrap()
    }

    /// Central finite difference, independent of the analysis module.
    fn fd_gradient(task: &dyn Task, params: &ParamVector, h: f64) -> Vec<f64> {
        let batch = full_batch(task);
        (0..params.dim())
            .map(|i| {
                let mut plus = params.values().to_vec();
                let mut minus = params.values().to_vec();
                plus[i] += h;
                minus[i] -= h;
                let lp = task.evaluate(&pv(&plus), &batch).unwrap().0;
                let lm = task.evaluate(&pv(&minus), &batch).unwrap().0;
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn radial_loss_and_gradient_at_unit_distance() {
        let task = SyntheticRadialTask::new(0, pv(&[0.0, 0.0]));
        let (loss, grad) = task.evaluate(&pv(&[1.0, 0.0]), &full_batch(&task)).unwrap();
        let expected_loss = -200.0 * (-0.2_f64).exp();
        let expected_slope = 40.0 * (-0.2_f64).exp();
        assert!((loss - expected_loss).abs() < 1e-12 * expected_loss.abs());
        assert!((grad[0] - expected_slope).abs() < 1e-12 * expected_slope);
        assert_eq!(grad[1], 0.0);
    }

    #[test]
    fn radial_minimum_value_at_center() {
        let task = SyntheticRadialTask::new(0, pv(&[3.0, -1.0]));
        let (loss, grad) = task.evaluate(&pv(&[3.0, -1.0]), &full_batch(&task)).unwrap();
        assert_eq!(loss, -200.0);
        assert_eq!(grad.values(), &[0.0, 0.0]);
    }

    #[test]
    fn radial_gradient_clamps_inside_cusp_region() {
        let task = SyntheticRadialTask::new(0, pv(&[0.0, 0.0]));
        let (_, grad) = task
            .evaluate(&pv(&[1e-13, 0.0]), &full_batch(&task))
            .unwrap();
        assert_eq!(grad.values(), &[0.0, 0.0]);
        // Just outside the clamp the gradient is near full magnitude.
        let (_, grad) = task
            .evaluate(&pv(&[1e-9, 0.0]), &full_batch(&task))
            .unwrap();
        assert!((grad[0] - 40.0).abs() < 1e-6);
    }

    #[test]
    fn radial_gradient_matches_finite_differences() {
        let task = SyntheticRadialTask::new(0, pv(&[0.0, 10.0]));
        for point in [[20.0, 5.0], [-3.0, 2.0], [1.0, 9.0]] {
            let p = pv(&point);
            let grad = task.gradient(&p).unwrap();
            let fd = fd_gradient(&task, &p, 1e-6);
            for i in 0..2 {
                let scale = grad[i].abs().max(1.0);
                assert!((grad[i] - fd[i]).abs() / scale < 1e-6);
            }
        }
    }

    #[test]
    fn quadratic_loss_and_gradient() {
        let task = QuadraticTask::new(1, pv(&[0.0, 0.0]));
        let (loss, grad) = task.evaluate(&pv(&[3.0, 4.0]), &full_batch(&task)).unwrap();
        assert_eq!(loss, 12.5);
        assert_eq!(grad.values(), &[3.0, 4.0]);
    }

    #[test]
    fn quadratic_hessian_vector_product_is_identity() {
        let task = QuadraticTask::new(1, pv(&[2.0, -1.0]));
        let v = pv(&[0.3, -0.7]);
        let hv = task
            .hessian_vector_product(&pv(&[1.0, 1.0]), &v, &full_batch(&task))
            .unwrap()
            .unwrap();
        assert_eq!(hv, v);
    }

    #[test]
    fn regression_explicit_dataset_values() {
        let task = RegressionTask::from_data(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![2.0, -1.0],
        )
        .unwrap();
        let (loss, grad) = task
            .evaluate(&pv(&[0.0, 0.0]), &MiniBatch::full(2))
            .unwrap();
        assert_eq!(loss, 1.25);
        assert_eq!(grad.values(), &[-1.0, 0.5]);
        let (loss, grad) = task
            .evaluate(&pv(&[0.0, 0.0]), &MiniBatch::new(vec![0]))
            .unwrap();
        assert_eq!(loss, 2.0);
        assert_eq!(grad.values(), &[-2.0, 0.0]);
    }

    #[test]
    fn regression_generation_is_deterministic_and_noiseless_at_truth() {
        let mut r1 = RandomSource::new(77);
        let mut r2 = RandomSource::new(77);
        let a = RegressionTask::generate(0, 50, 3, 0.0, &mut r1).unwrap();
        let b = RegressionTask::generate(0, 50, 3, 0.0, &mut r2).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
        let truth = a.true_weights().unwrap().clone();
        let (loss, grad) = a.evaluate(&truth, &MiniBatch::full(50)).unwrap();
        assert!(loss.abs() < 1e-25);
        assert!(grad.norm() < 1e-12);
    }

    #[test]
    fn regression_gradient_matches_finite_differences() {
        let mut rng = RandomSource::new(5);
        let task = RegressionTask::generate(0, 40, 4, 0.3, &mut rng).unwrap();
        let p = pv(&[0.5, -1.0, 2.0, 0.0]);
        let grad = task.gradient(&p).unwrap();
        let fd = fd_gradient(&task, &p, 1e-6);
        for i in 0..4 {
            let scale = grad[i].abs().max(1.0);
            assert!((grad[i] - fd[i]).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn deterministic_tasks_ignore_rng_when_batching() {
        let task = QuadraticTask::new(0, pv(&[0.0]));
        let mut rng = RandomSource::new(1);
        let before = rng.clone().next_u64();
        let batch = sample_batch(&task, 16, &mut rng);
        assert_eq!(batch.indices(), &[0]);
        assert_eq!(rng.next_u64(), before);
    }

    #[test]
    fn stochastic_batches_sample_with_replacement_in_range() {
        let mut rng = RandomSource::new(9);
        let task = RegressionTask::generate(0, 5, 2, 0.1, &mut rng).unwrap();
        let batch = sample_batch(&task, 64, &mut rng);
        assert_eq!(batch.len(), 64);
        assert!(batch.indices().iter().all(|&i| i < 5));
        // 64 draws from 5 items must repeat some index.
        let mut seen = [false; 5];
        for &i in batch.indices() {
            seen[i] = true;
        }
        assert!(batch.len() > seen.iter().filter(|s| **s).count());
    }

    #[test]
    fn evaluate_rejects_bad_batches_and_dims() {
        let task = QuadraticTask::new(3, pv(&[0.0, 0.0]));
        let err = task
            .evaluate(&pv(&[1.0, 1.0]), &MiniBatch::new(vec![]))
            .unwrap_err();
        assert_eq!(err, Error::EmptyBatch { task_id: 3 });
        let err = task
            .evaluate(&pv(&[1.0, 1.0]), &MiniBatch::new(vec![1]))
            .unwrap_err();
        assert_eq!(
            err,
            Error::BatchIndexOutOfRange {
                task_id: 3,
                index: 1,
                dataset_size: 1
            }
        );
        let err = task
            .evaluate(&pv(&[1.0]), &MiniBatch::full(1))
            .unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 1
            }
        );
    }
}
