//! Diagnostics and oracles for the optimizers.
//!
//! - exact and Monte Carlo expectations of the sequential meta-gradient
//!   over the task-schedule distribution;
//! - a second-order surrogate objective whose gradient the meta-gradient
//!   should match to leading order, plus a residual-order check over a
//!   ladder of step sizes;
//! - gradient-alignment reports (pairwise cosine matrices);
//! - summed loss surfaces on 2-d grids for plotting.

use crate::error::{Error, Result};
use crate::optim::{inner_loop_with_schedule, RunConfig, TASK_CHOICE_STREAM};
use crate::rng::RandomSource;
use crate::sampler::TaskSampler;
use crate::task::{full_batch, MiniBatch, Task};
use crate::vector::ParamVector;

/// Exact enumeration is refused beyond this many task sequences.
pub const ENUMERATION_LIMIT: u64 = 65_536;

/// Grid window that frames all three demo wells with margin.
pub const DEFAULT_GRID_BOUNDS: GridBounds = GridBounds {
    min_x: -5.0,
    max_x: 25.0,
    min_y: -5.0,
    max_y: 25.0,
};

/// Default grid resolution (0.1 spacing over the default bounds).
pub const DEFAULT_GRID_RESOLUTION: (usize, usize) = (301, 301);

/// Central-difference gradient of a scalar function, with per-coordinate
/// step `h_rel * (1 + |phi_i|)`.
pub fn finite_difference_gradient<F>(f: F, phi: &ParamVector, h_rel: f64) -> Result<ParamVector>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(phi.dim());
    for i in 0..phi.dim() {
        let h = h_rel * (1.0 + phi[i].abs());
        let mut plus = phi.values().to_vec();
        let mut minus = phi.values().to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = f(&ParamVector::new(plus)?)?;
        let fm = f(&ParamVector::new(minus)?)?;
        grad.push((fp - fm) / (2.0 * h));
    }
    ParamVector::new(grad)
}

/// How an [`ExpectationEstimate`] was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateMethod {
    Exact { sequences: u64 },
    MonteCarlo { samples: usize },
}

/// An estimate of the expected meta-gradient at a point.
#[derive(Debug, Clone)]
pub struct ExpectationEstimate {
    pub mean: ParamVector,
    /// Per-coordinate standard error; `None` for exact enumeration.
    pub standard_error: Option<ParamVector>,
    pub method: EstimateMethod,
}

fn require_deterministic(tasks: &[Box<dyn Task>]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    for task in tasks {
        if !task.is_deterministic() {
            return Err(Error::StochasticTask { task_id: task.id() });
        }
    }
    Ok(())
}

/// Calls `visit(schedule, weight)` for every length-`k` task sequence,
/// in lexicographic order with the first inner step varying slowest.
fn for_each_sequence<F>(probs: &[f64], k: usize, mut visit: F) -> Result<()>
where
    F: FnMut(&[usize], f64) -> Result<()>,
{
    let t = probs.len();
    let total = (t as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_LIMIT as u128 {
        return Err(Error::EnumerationTooLarge {
            required: total,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut schedule = vec![0usize; k];
    loop {
        let weight: f64 = schedule.iter().map(|&s| probs[s]).product();
        visit(&schedule, weight)?;
        // Odometer increment from the last position.
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            schedule[pos] += 1;
            if schedule[pos] < t {
                break;
            }
            schedule[pos] = 0;
            if pos == 0 {
                return Ok(());
            }
        }
        if k == 0 {
            return Ok(());
        }
    }
}

fn sequence_meta_gradient(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    schedule: &[usize],
    inner_lr: f64,
) -> Result<ParamVector> {
    let cfg = RunConfig {
        inner_lr,
        inner_steps: schedule.len(),
        batch_size: 1,
        ..RunConfig::default()
    };
    // Deterministic tasks never touch their batch streams.
    let src = RandomSource::new(0);
    let mut batch_rngs: Vec<RandomSource> =
        (0..tasks.len()).map(|i| src.child(i as u64)).collect();
    let traj = inner_loop_with_schedule(phi, tasks, schedule, &cfg, &mut batch_rngs)?;
    Ok(traj.meta_gradient().direction)
}

/// Exact expectation of the sequential meta-gradient at `phi`, by
/// enumerating every task schedule of length `cfg.inner_steps`.
///
/// Requires deterministic tasks and at most [`ENUMERATION_LIMIT`]
/// sequences. Terms accumulate in enumeration order, so the result is a
/// pure function of its arguments.
pub fn expected_meta_gradient_exact(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    sampler: &TaskSampler,
    cfg: &RunConfig,
) -> Result<ExpectationEstimate> {
    require_deterministic(tasks)?;
    if sampler.len() != tasks.len() {
        return Err(Error::InvalidConfig {
            field: "sampler",
            message: format!(
                "sampler covers {} tasks but {} were supplied",
                sampler.len(),
                tasks.len()
            ),
        });
    }
    let mut mean = ParamVector::zeros(phi.dim())?;
    let mut weight_total = 0.0;
    let mut sequences = 0u64;
    for_each_sequence(sampler.probs(), cfg.inner_steps, |schedule, weight| {
        let mg = sequence_meta_gradient(phi, tasks, schedule, cfg.inner_lr)?;
        mean = mean.axpy(weight, &mg)?;
        weight_total += weight;
        sequences += 1;
        Ok(())
    })?;
    debug_assert!((weight_total - 1.0).abs() < 1e-12);
    Ok(ExpectationEstimate {
        mean,
        standard_error: None,
        method: EstimateMethod::Exact { sequences },
    })
}

/// Monte Carlo estimate of the same expectation from `samples` sampled
/// schedules, with a per-coordinate standard error.
///
/// Sample `i` draws through the order-insensitive child stream `i` of a
/// single fork, and the reduction runs in index order, so estimates are
/// reproducible.
pub fn expected_meta_gradient_mc(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    sampler: &TaskSampler,
    cfg: &RunConfig,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<ExpectationEstimate> {
    if tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    if samples < 2 {
        return Err(Error::TooFewSamples { samples });
    }
    if sampler.len() != tasks.len() {
        return Err(Error::InvalidConfig {
            field: "sampler",
            message: format!(
                "sampler covers {} tasks but {} were supplied",
                sampler.len(),
                tasks.len()
            ),
        });
    }
    let base = rng.fork();
    let mut draws: Vec<ParamVector> = Vec::with_capacity(samples);
    for i in 0..samples {
        let sample_src = base.child(i as u64);
        let mut choice_rng = sample_src.child(TASK_CHOICE_STREAM);
        let schedule: Vec<usize> = (0..cfg.inner_steps)
            .map(|_| sampler.sample(&mut choice_rng))
            .collect();
        let mut batch_rngs: Vec<RandomSource> = (0..tasks.len())
            .map(|t| sample_src.child(t as u64))
            .collect();
        let traj = inner_loop_with_schedule(phi, tasks, &schedule, cfg, &mut batch_rngs)?;
        draws.push(traj.meta_gradient().direction);
    }
    let n = samples as f64;
    let mut mean = ParamVector::zeros(phi.dim())?;
    for d in &draws {
        mean = mean.add(d)?;
    }
    let mean = mean.scale(1.0 / n);
    let mut variance = vec![0.0; phi.dim()];
    for d in &draws {
        for (i, v) in variance.iter_mut().enumerate() {
            let delta = d[i] - mean[i];
            *v += delta * delta;
        }
    }
    let se = ParamVector::new(
        variance
            .into_iter()
            .map(|v| (v / (n * (n - 1.0))).sqrt())
            .collect(),
    )?;
    Ok(ExpectationEstimate {
        mean,
        standard_error: Some(se),
        method: EstimateMethod::MonteCarlo { samples },
    })
}

/// A second-order surrogate evaluated at one point for one task schedule.
#[derive(Debug, Clone)]
pub struct SurrogateEval {
    /// `sum_k L_k(phi) - (alpha/2) * sum_{k>j} <g_k, g_j>`.
    pub value: f64,
    pub loss_sum: f64,
    /// `sum_{k>j} <g_k(phi), g_j(phi)>`.
    pub interaction_sum: f64,
    pub gradient: ParamVector,
    /// True when every task supplied a closed-form Hessian-vector product
    /// and the gradient is exact; false means central differences.
    pub exact_gradient: bool,
}

fn surrogate_scalar(
    phi: &ParamVector,
    sequence: &[(&dyn Task, &MiniBatch)],
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    let mut loss_sum = 0.0;
    let mut grads: Vec<ParamVector> = Vec::with_capacity(sequence.len());
    for (task, batch) in sequence {
        let (loss, grad) = task.evaluate(phi, batch)?;
        loss_sum += loss;
        grads.push(grad);
    }
    let mut interaction_sum = 0.0;
    for k in 1..grads.len() {
        for j in 0..k {
            interaction_sum += grads[k].dot(&grads[j])?;
        }
    }
    Ok((
        loss_sum - 0.5 * alpha * interaction_sum,
        loss_sum,
        interaction_sum,
    ))
}

/// Evaluates the surrogate objective for a fixed `(task, batch)` schedule.
///
/// The gradient uses the closed-form
/// `sum_k g_k - (alpha/2) * sum_{k>j} (H_k g_j + H_j g_k)` whenever every
/// task in the schedule provides a Hessian-vector product; otherwise it
/// falls back to central finite differences (relative step `1e-6`) on the
/// scalar objective.
pub fn surrogate_objective(
    phi: &ParamVector,
    sequence: &[(&dyn Task, &MiniBatch)],
    alpha: f64,
) -> Result<SurrogateEval> {
    if sequence.is_empty() {
        return Err(Error::NoTasks);
    }
    let (value, loss_sum, interaction_sum) = surrogate_scalar(phi, sequence, alpha)?;
    let mut grads = Vec::with_capacity(sequence.len());
    for (task, batch) in sequence {
        grads.push(task.evaluate(phi, batch)?.1);
    }
    let hvp = |k: usize, v: &ParamVector| -> Option<Result<ParamVector>> {
        let (task, batch) = sequence[k];
        task.hessian_vector_product(phi, v, batch)
    };
    let all_closed_form = (0..sequence.len()).all(|k| hvp(k, &grads[k]).is_some());
    if all_closed_form {
        let mut gradient = ParamVector::zeros(phi.dim())?;
        for g in &grads {
            gradient = gradient.add(g)?;
        }
        let mut cross = ParamVector::zeros(phi.dim())?;
        for k in 1..sequence.len() {
            for j in 0..k {
                cross = cross.add(&hvp(k, &grads[j]).expect("checked")?)?;
                cross = cross.add(&hvp(j, &grads[k]).expect("checked")?)?;
            }
        }
        let gradient = gradient.axpy(-0.5 * alpha, &cross)?;
        return Ok(SurrogateEval {
            value,
            loss_sum,
            interaction_sum,
            gradient,
            exact_gradient: true,
        });
    }
    let gradient = finite_difference_gradient(
        |p| surrogate_scalar(p, sequence, alpha).map(|(v, _, _)| v),
        phi,
        1e-6,
    )?;
    Ok(SurrogateEval {
        value,
        loss_sum,
        interaction_sum,
        gradient,
        exact_gradient: false,
    })
}

/// One rung of the residual ladder produced by [`taylor_order_check`].
#[derive(Debug, Clone)]
pub struct ResidualRow {
    pub alpha: f64,
    /// `|| E[MG] - alpha * E[grad surrogate] ||`.
    pub residual: f64,
    /// Scale below which the residual is numerically indistinguishable
    /// from zero.
    pub noise_floor: f64,
}

impl ResidualRow {
    pub fn is_measurable(&self) -> bool {
        self.residual > self.noise_floor
    }
}

/// Residuals across a decreasing step-size ladder, with consecutive
/// ratios where both rungs are above their noise floors.
#[derive(Debug, Clone)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
    pub ratios: Vec<Option<f64>>,
}

impl ResidualTable {
    /// True when every residual sits at numerical zero, i.e. the
    /// surrogate gradient matches the expected meta-gradient exactly.
    pub fn all_below_floor(&self) -> bool {
        self.rows.iter().all(|r| !r.is_measurable())
    }

    /// True when every consecutive ratio is measurable and inside
    /// `[lo, hi]`.
    pub fn ratios_within(&self, lo: f64, hi: f64) -> bool {
        !self.ratios.is_empty()
            && self
                .ratios
                .iter()
                .all(|r| matches!(r, Some(v) if (lo..=hi).contains(v)))
    }

    /// The order check passes if residuals either vanish to round-off or
    /// shrink at a rate inside the band.
    pub fn passes(&self, lo: f64, hi: f64) -> bool {
        self.all_below_floor() || self.ratios_within(lo, hi)
    }
}

/// Compares the exact expected meta-gradient against `alpha` times the
/// expected surrogate gradient across a ladder of decreasing step sizes.
///
/// For a surrogate that is accurate to second order the residual shrinks
/// like `alpha^3`, so halving `alpha` divides consecutive residuals by
/// about 8. On constant-Hessian tasks with `inner_steps = 2` the residual
/// cancels outright and every rung reports "below floor".
pub fn taylor_order_check(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    sampler: &TaskSampler,
    inner_steps: usize,
    alphas: &[f64],
) -> Result<ResidualTable> {
    require_deterministic(tasks)?;
    if alphas.is_empty() {
        return Err(Error::InvalidConfig {
            field: "alphas",
            message: "need at least one step size".into(),
        });
    }
    for pair in alphas.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::InvalidConfig {
                field: "alphas",
                message: "step sizes must be strictly decreasing".into(),
            });
        }
    }
    if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::InvalidConfig {
            field: "alphas",
            message: "step sizes must be positive and finite".into(),
        });
    }
    let full_batches: Vec<MiniBatch> = tasks.iter().map(|t| full_batch(t.as_ref())).collect();
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = RunConfig {
            inner_lr: alpha,
            inner_steps,
            batch_size: 1,
            ..RunConfig::default()
        };
        let expected_mg = expected_meta_gradient_exact(phi, tasks, sampler, &cfg)?;
        let mut expected_surrogate_grad = ParamVector::zeros(phi.dim())?;
        for_each_sequence(sampler.probs(), inner_steps, |schedule, weight| {
            let sequence: Vec<(&dyn Task, &MiniBatch)> = schedule
                .iter()
                .map(|&t| (tasks[t].as_ref() as &dyn Task, &full_batches[t]))
                .collect();
            let eval = surrogate_objective(phi, &sequence, alpha)?;
            expected_surrogate_grad = expected_surrogate_grad.axpy(weight, &eval.gradient)?;
            Ok(())
        })?;
        let residual = expected_mg
            .mean
            .sub(&expected_surrogate_grad.scale(alpha))?
            .norm();
        let scale = expected_mg
            .mean
            .norm()
            .max(alpha * expected_surrogate_grad.norm())
            .max(1.0);
        rows.push(ResidualRow {
            alpha,
            residual,
            noise_floor: 1e-12 * scale,
        });
    }
    let ratios = rows
        .windows(2)
        .map(|pair| {
            if pair[0].is_measurable() && pair[1].is_measurable() {
                Some(pair[0].residual / pair[1].residual)
            } else {
                None
            }
        })
        .collect();
    Ok(ResidualTable { rows, ratios })
}

/// Pairwise cosine similarities between full-batch task gradients.
#[derive(Debug, Clone)]
pub struct GradientAlignmentReport {
    matrix: Vec<Vec<f64>>,
    mean_offdiagonal: Option<f64>,
}

impl GradientAlignmentReport {
    /// Row-major `T x T` cosine matrix.
    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    /// Mean over unordered off-diagonal pairs; `None` for a single task.
    pub fn mean_offdiagonal(&self) -> Option<f64> {
        self.mean_offdiagonal
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }
}

/// Cosine matrix of full-batch gradients at `phi`.
///
/// A task whose gradient vanishes at `phi` makes alignment undefined; the
/// report refuses it with [`Error::ZeroGradient`] naming the task rather
/// than recording a misleading zero.
pub fn alignment_report(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
) -> Result<GradientAlignmentReport> {
    if tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    let mut grads = Vec::with_capacity(tasks.len());
    for task in tasks {
        let g = task.gradient(phi)?;
        if g.norm() == 0.0 {
            return Err(Error::ZeroGradient { task_id: task.id() });
        }
        grads.push(g);
    }
    let t = tasks.len();
    let mut matrix = vec![vec![0.0; t]; t];
    let mut offdiag_sum = 0.0;
    for i in 0..t {
        // Exact by definition; the gradients were checked nonzero above,
        // and routing through the quotient would cost a rounding ulp.
        matrix[i][i] = 1.0;
        for j in 0..i {
            let c = grads[i].cosine_similarity(&grads[j])?;
            matrix[i][j] = c;
            matrix[j][i] = c;
            offdiag_sum += c;
        }
    }
    let pairs = t * (t - 1) / 2;
    let mean_offdiagonal = if pairs == 0 {
        None
    } else {
        Some(offdiag_sum / pairs as f64)
    };
    Ok(GradientAlignmentReport {
        matrix,
        mean_offdiagonal,
    })
}

/// Rectangular evaluation window for [`loss_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBounds {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl GridBounds {
    fn validate(&self) -> Result<()> {
        let vals = [self.min_x, self.max_x, self.min_y, self.max_y];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "grid.bounds",
                message: "bounds must be finite".into(),
            });
        }
        if self.max_x <= self.min_x || self.max_y <= self.min_y {
            return Err(Error::InvalidConfig {
                field: "grid.bounds",
                message: "bounds must have positive extent".into(),
            });
        }
        Ok(())
    }
}

/// Summed task loss sampled on a regular 2-d grid, row-major with `y`
/// varying by row and `x` by column.
#[derive(Debug, Clone)]
pub struct LossGrid {
    bounds: GridBounds,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl LossGrid {
    pub fn bounds(&self) -> GridBounds {
        self.bounds
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x_at(&self, ix: usize) -> f64 {
        self.bounds.min_x + ix as f64 * (self.bounds.max_x - self.bounds.min_x) / (self.nx - 1) as f64
    }

    pub fn y_at(&self, iy: usize) -> f64 {
        self.bounds.min_y + iy as f64 * (self.bounds.max_y - self.bounds.min_y) / (self.ny - 1) as f64
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates `sum_t L_t` over a regular grid. Tasks must be 2-d; cell
/// values are summed per point in task order, so the grid of a task set
/// equals the element-wise sum of its single-task grids bit for bit.
pub fn loss_grid(
    tasks: &[Box<dyn Task>],
    bounds: GridBounds,
    resolution: (usize, usize),
) -> Result<LossGrid> {
    if tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    bounds.validate()?;
    let (nx, ny) = resolution;
    if nx < 2 || ny < 2 {
        return Err(Error::GridResolution { nx, ny });
    }
    for task in tasks {
        if task.dim() != 2 {
            return Err(Error::GridDimension { dim: task.dim() });
        }
    }
    let mut grid = LossGrid {
        bounds,
        nx,
        ny,
        values: Vec::with_capacity(nx * ny),
    };
    for iy in 0..ny {
        let y = grid.y_at(iy);
        for ix in 0..nx {
            let x = grid.x_at(ix);
            let point = ParamVector::new(vec![x, y])?;
            let mut total = 0.0;
            for task in tasks {
                total += task.loss(&point)?;
            }
            grid.values.push(total);
        }
    }
    Ok(grid)
}
