//! Multi-task optimizers over a shared parameter vector.
//!
//! Four step rules share one inner-loop engine:
//!
//! - [`joint_mtl_step`]: plain descent on the summed task gradients, with
//!   an optional L2 pull toward a reference point;
//! - [`reptile_meta_step`]: one inner trajectory per task from the current
//!   point, then a move toward the mean endpoint;
//! - [`sequential_reptile_meta_step`]: a single inner trajectory whose task
//!   schedule is drawn from a [`TaskSampler`], then a move toward its
//!   endpoint;
//! - [`pcgrad_step`]: joint descent after projecting away pairwise-
//!   conflicting gradient components.
//!
//! Randomness discipline: every step forks the caller's stream once, then
//! derives order-insensitive child streams from the fork (one per task for
//! batch draws, plus reserved streams for the task schedule and the
//! surgery permutation). Two optimizers fed the same stream therefore see
//! identical batches, which is what makes the degeneracy identities in the
//! tests exact rather than approximate.

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::sampler::TaskSampler;
use crate::task::{sample_batch, MiniBatch, Task};
use crate::vector::ParamVector;

/// Reserved child-stream index for the sequential task schedule.
pub(crate) const TASK_CHOICE_STREAM: u64 = u64::MAX;
/// Reserved child-stream index for the gradient-surgery permutation.
const SURGERY_PERM_STREAM: u64 = u64::MAX - 1;

/// Step sizes and budgets for one training run.
///
/// `inner_lr` is the step size of inner trajectories and of the joint /
/// surgery baselines; `outer_lr` scales meta-updates only. `seed` is
/// carried here so a run is reproducible from its config alone; callers
/// build the `RandomSource` they pass in from it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub inner_steps: usize,
    pub outer_steps: usize,
    pub batch_size: usize,
    pub l2_coeff: f64,
    pub l2_reference: Option<ParamVector>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inner_lr: 0.01,
            outer_lr: 0.5,
            inner_steps: 10,
            outer_steps: 100,
            batch_size: 16,
            l2_coeff: 0.0,
            l2_reference: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn with_inner_lr(mut self, v: f64) -> Self {
        self.inner_lr = v;
        self
    }

    pub fn with_outer_lr(mut self, v: f64) -> Self {
        self.outer_lr = v;
        self
    }

    pub fn with_inner_steps(mut self, v: usize) -> Self {
        self.inner_steps = v;
        self
    }

    pub fn with_outer_steps(mut self, v: usize) -> Self {
        self.outer_steps = v;
        self
    }

    pub fn with_batch_size(mut self, v: usize) -> Self {
        self.batch_size = v;
        self
    }

    pub fn with_seed(mut self, v: u64) -> Self {
        self.seed = v;
        self
    }

    pub fn with_l2(mut self, coeff: f64, reference: ParamVector) -> Self {
        self.l2_coeff = coeff;
        self.l2_reference = Some(reference);
        self
    }

    /// Checks the config, returning warnings for legal-but-suspect values.
    ///
    /// Step sizes of exactly zero are allowed: they freeze the inner or
    /// outer loop, which the degeneracy tests rely on.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !self.inner_lr.is_finite() || self.inner_lr < 0.0 {
            return Err(Error::InvalidConfig {
                field: "inner_lr",
                message: format!("must be finite and >= 0, got {}", self.inner_lr),
            });
        }
        if !self.outer_lr.is_finite() || self.outer_lr < 0.0 {
            return Err(Error::InvalidConfig {
                field: "outer_lr",
                message: format!("must be finite and >= 0, got {}", self.outer_lr),
            });
        }
        if self.inner_steps == 0 {
            return Err(Error::InvalidConfig {
                field: "inner_steps",
                message: "must be >= 1".into(),
            });
        }
        if self.outer_steps == 0 {
            return Err(Error::InvalidConfig {
                field: "outer_steps",
                message: "must be >= 1".into(),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig {
                field: "batch_size",
                message: "must be >= 1".into(),
            });
        }
        if !self.l2_coeff.is_finite() || self.l2_coeff < 0.0 {
            return Err(Error::InvalidConfig {
                field: "l2_coeff",
                message: format!("must be finite and >= 0, got {}", self.l2_coeff),
            });
        }
        if self.l2_coeff > 0.0 && self.l2_reference.is_none() {
            return Err(Error::InvalidConfig {
                field: "l2_reference",
                message: "required when l2_coeff > 0".into(),
            });
        }
        let mut warnings = Vec::new();
        if self.outer_lr > 1.0 {
            warnings.push(format!(
                "outer_lr {} overshoots trajectory endpoints; values in (0, 1] are typical",
                self.outer_lr
            ));
        }
        Ok(warnings)
    }
}

/// The step rules. String forms (`mtl`, `reptile`, `seq-reptile`,
/// `pcgrad`) are what configs and output paths use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    JointMtl,
    Reptile,
    SequentialReptile,
    PcGrad,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::JointMtl,
        OptimizerKind::Reptile,
        OptimizerKind::SequentialReptile,
        OptimizerKind::PcGrad,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::JointMtl => "mtl",
            OptimizerKind::Reptile => "reptile",
            OptimizerKind::SequentialReptile => "seq-reptile",
            OptimizerKind::PcGrad => "pcgrad",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mtl" => Ok(OptimizerKind::JointMtl),
            "reptile" => Ok(OptimizerKind::Reptile),
            "seq-reptile" => Ok(OptimizerKind::SequentialReptile),
            "pcgrad" => Ok(OptimizerKind::PcGrad),
            other => Err(Error::InvalidConfig {
                field: "optimizer",
                message: format!(
                    "unknown optimizer '{other}' (expected mtl, reptile, seq-reptile, or pcgrad)"
                ),
            }),
        }
    }
}

/// A recorded inner trajectory: iterates, the task and batch used at each
/// step, and the analytic gradient that produced each step.
#[derive(Debug, Clone)]
pub struct InnerTrajectory {
    iterates: Vec<ParamVector>,
    task_ids: Vec<usize>,
    step_gradients: Vec<ParamVector>,
    batches: Vec<MiniBatch>,
    inner_lr: f64,
}

impl InnerTrajectory {
    /// Number of inner steps taken.
    pub fn len(&self) -> usize {
        self.step_gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step_gradients.is_empty()
    }

    /// All `K + 1` iterates, starting point first.
    pub fn iterates(&self) -> &[ParamVector] {
        &self.iterates
    }

    /// Task index used at each step.
    pub fn task_ids(&self) -> &[usize] {
        &self.task_ids
    }

    pub fn step_gradients(&self) -> &[ParamVector] {
        &self.step_gradients
    }

    pub fn batches(&self) -> &[MiniBatch] {
        &self.batches
    }

    pub fn inner_lr(&self) -> f64 {
        self.inner_lr
    }

    pub fn start(&self) -> &ParamVector {
        &self.iterates[0]
    }

    pub fn final_params(&self) -> &ParamVector {
        self.iterates.last().expect("trajectory holds start")
    }

    /// The literal endpoint difference `phi - theta_K`.
    pub fn displacement(&self) -> ParamVector {
        self.start()
            .sub(self.final_params())
            .expect("iterates share dimension")
    }

    /// Meta-gradient of the trajectory.
    ///
    /// Accumulated in telescoped form, `alpha * sum_k g_k`, which equals
    /// [`InnerTrajectory::displacement`] up to a few ulps of rounding and
    /// is exact in the one-step case.
    pub fn meta_gradient(&self) -> MetaGradient {
        let mut sum = ParamVector::zeros(self.start().dim()).expect("positive dim");
        for g in &self.step_gradients {
            sum = sum.add(g).expect("gradients share dimension");
        }
        MetaGradient {
            direction: sum.scale(self.inner_lr),
        }
    }
}

/// Direction a meta-update descends along; see
/// [`InnerTrajectory::meta_gradient`] for the arithmetic form.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaGradient {
    pub direction: ParamVector,
}

fn check_tasks_dim(phi: &ParamVector, tasks: &[Box<dyn Task>]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    for task in tasks {
        if task.dim() != phi.dim() {
            return Err(Error::DimensionMismatch {
                expected: phi.dim(),
                found: task.dim(),
            });
        }
    }
    Ok(())
}

fn divergence(inner_step: usize, detail: String) -> Error {
    // Inner routines do not know the outer step; `train` rewrites it.
    Error::Divergence {
        outer_step: 0,
        inner_step,
        detail,
    }
}

fn check_step_health(
    inner_step: usize,
    task_id: usize,
    loss: f64,
    theta: &ParamVector,
) -> Result<()> {
    if !loss.is_finite() {
        return Err(divergence(
            inner_step,
            format!("task {task_id} produced non-finite loss {loss}"),
        ));
    }
    if !theta.is_finite() {
        return Err(divergence(
            inner_step,
            format!("parameters left the finite range after a task {task_id} step"),
        ));
    }
    Ok(())
}

/// Runs `K` descent steps through an explicit task schedule, drawing each
/// step's batch from that task's own stream in `batch_rngs`.
pub fn inner_loop_with_schedule(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    schedule: &[usize],
    cfg: &RunConfig,
    batch_rngs: &mut [RandomSource],
) -> Result<InnerTrajectory> {
    check_tasks_dim(phi, tasks)?;
    if batch_rngs.len() != tasks.len() {
        return Err(Error::InvalidConfig {
            field: "batch_rngs",
            message: format!("need one stream per task, got {}", batch_rngs.len()),
        });
    }
    let mut iterates = Vec::with_capacity(schedule.len() + 1);
    let mut task_ids = Vec::with_capacity(schedule.len());
    let mut step_gradients = Vec::with_capacity(schedule.len());
    let mut batches = Vec::with_capacity(schedule.len());
    iterates.push(phi.clone());
    let mut theta = phi.clone();
    for (k, &t) in schedule.iter().enumerate() {
        let task = tasks
            .get(t)
            .ok_or(Error::InvalidConfig {
                field: "schedule",
                message: format!("task index {t} out of range for {} tasks", tasks.len()),
            })?
            .as_ref();
        let batch = sample_batch(task, cfg.batch_size, &mut batch_rngs[t]);
        let (loss, gradient) = task.evaluate(&theta, &batch)?;
        theta = theta.axpy(-cfg.inner_lr, &gradient)?;
        check_step_health(k, task.id(), loss, &theta)?;
        iterates.push(theta.clone());
        task_ids.push(t);
        step_gradients.push(gradient);
        batches.push(batch);
    }
    Ok(InnerTrajectory {
        iterates,
        task_ids,
        step_gradients,
        batches,
        inner_lr: cfg.inner_lr,
    })
}

/// Runs `cfg.inner_steps` descent steps on a single task.
pub fn inner_loop_single_task(
    phi: &ParamVector,
    task: &dyn Task,
    task_index: usize,
    cfg: &RunConfig,
    rng: &mut RandomSource,
) -> Result<InnerTrajectory> {
    if task.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.dim(),
            found: task.dim(),
        });
    }
    let mut iterates = Vec::with_capacity(cfg.inner_steps + 1);
    let mut step_gradients = Vec::with_capacity(cfg.inner_steps);
    let mut batches = Vec::with_capacity(cfg.inner_steps);
    iterates.push(phi.clone());
    let mut theta = phi.clone();
    for k in 0..cfg.inner_steps {
        let batch = sample_batch(task, cfg.batch_size, rng);
        let (loss, gradient) = task.evaluate(&theta, &batch)?;
        theta = theta.axpy(-cfg.inner_lr, &gradient)?;
        check_step_health(k, task.id(), loss, &theta)?;
        iterates.push(theta.clone());
        step_gradients.push(gradient);
        batches.push(batch);
    }
    Ok(InnerTrajectory {
        iterates,
        task_ids: vec![task_index; cfg.inner_steps],
        step_gradients,
        batches,
        inner_lr: cfg.inner_lr,
    })
}

/// Meta-update toward trajectory endpoints:
/// `phi - eta * mean_t (phi - theta_t)`.
///
/// An outer rate of exactly 1 with a single trajectory returns that
/// endpoint bit-for-bit, and endpoints equal to `phi` (a frozen inner
/// loop) leave `phi` bit-for-bit unchanged: every displacement is then an
/// exact zero and `phi + (-eta * 0)` is `phi` in IEEE arithmetic.
fn apply_meta_update(
    phi: &ParamVector,
    endpoints: &[&ParamVector],
    eta: f64,
) -> Result<ParamVector> {
    if eta == 1.0 && endpoints.len() == 1 {
        return Ok(endpoints[0].clone());
    }
    let mut displacement_sum = ParamVector::zeros(phi.dim())?;
    for theta in endpoints {
        displacement_sum = displacement_sum.add(&phi.sub(theta)?)?;
    }
    let mean = displacement_sum.scale(1.0 / endpoints.len() as f64);
    phi.axpy(-eta, &mean)
}

/// One Reptile meta-step: an independent inner trajectory per task from
/// `phi`, then a move toward the mean endpoint scaled by `outer_lr`.
pub fn reptile_meta_step(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    cfg: &RunConfig,
    rng: &mut RandomSource,
) -> Result<(ParamVector, Vec<InnerTrajectory>)> {
    check_tasks_dim(phi, tasks)?;
    let step_src = rng.fork();
    let mut trajectories = Vec::with_capacity(tasks.len());
    for (t, task) in tasks.iter().enumerate() {
        let mut task_rng = step_src.child(t as u64);
        trajectories.push(inner_loop_single_task(
            phi,
            task.as_ref(),
            t,
            cfg,
            &mut task_rng,
        )?);
    }
    let endpoints: Vec<&ParamVector> = trajectories.iter().map(|t| t.final_params()).collect();
    let new_phi = apply_meta_update(phi, &endpoints, cfg.outer_lr)?;
    if !new_phi.is_finite() {
        return Err(divergence(cfg.inner_steps, "meta-update overflowed".into()));
    }
    Ok((new_phi, trajectories))
}

/// One sequential meta-step: a single inner trajectory whose task at each
/// step is drawn from `sampler`, then a move toward its endpoint.
pub fn sequential_reptile_meta_step(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    sampler: &TaskSampler,
    cfg: &RunConfig,
    rng: &mut RandomSource,
) -> Result<(ParamVector, InnerTrajectory)> {
    check_tasks_dim(phi, tasks)?;
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
    let step_src = rng.fork();
    let mut choice_rng = step_src.child(TASK_CHOICE_STREAM);
    let schedule: Vec<usize> = (0..cfg.inner_steps)
        .map(|_| sampler.sample(&mut choice_rng))
        .collect();
    let mut batch_rngs: Vec<RandomSource> =
        (0..tasks.len()).map(|t| step_src.child(t as u64)).collect();
    let trajectory = inner_loop_with_schedule(phi, tasks, &schedule, cfg, &mut batch_rngs)?;
    let new_phi = apply_meta_update(phi, &[trajectory.final_params()], cfg.outer_lr)?;
    if !new_phi.is_finite() {
        return Err(divergence(cfg.inner_steps, "meta-update overflowed".into()));
    }
    Ok((new_phi, trajectory))
}

fn step_batches(
    tasks: &[Box<dyn Task>],
    cfg: &RunConfig,
    step_src: &RandomSource,
) -> Vec<MiniBatch> {
    tasks
        .iter()
        .enumerate()
        .map(|(t, task)| {
            let mut task_rng = step_src.child(t as u64);
            sample_batch(task.as_ref(), cfg.batch_size, &mut task_rng)
        })
        .collect()
}

/// One joint multi-task step:
/// `phi - inner_lr * (sum_t g_t + l2_coeff * (phi - reference))`.
pub fn joint_mtl_step(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    cfg: &RunConfig,
    rng: &mut RandomSource,
) -> Result<ParamVector> {
    check_tasks_dim(phi, tasks)?;
    let step_src = rng.fork();
    let batches = step_batches(tasks, cfg, &step_src);
    let mut total = ParamVector::zeros(phi.dim())?;
    for (task, batch) in tasks.iter().zip(&batches) {
        let (loss, gradient) = task.evaluate(phi, batch)?;
        if !loss.is_finite() {
            return Err(divergence(
                0,
                format!("task {} produced non-finite loss {loss}", task.id()),
            ));
        }
        total = total.add(&gradient)?;
    }
    if cfg.l2_coeff > 0.0 {
        let reference = cfg.l2_reference.as_ref().ok_or(Error::InvalidConfig {
            field: "l2_reference",
            message: "required when l2_coeff > 0".into(),
        })?;
        total = total.axpy(cfg.l2_coeff, &phi.sub(reference)?)?;
    }
    let new_phi = phi.axpy(-cfg.inner_lr, &total)?;
    if !new_phi.is_finite() {
        return Err(divergence(0, "joint step overflowed".into()));
    }
    Ok(new_phi)
}

/// One projection applied during gradient surgery: `task`'s gradient had
/// negative inner product `dot` with `against`'s gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionEvent {
    pub task: usize,
    pub against: usize,
    pub dot: f64,
}

/// What surgery did during one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurgeryReport {
    pub events: Vec<ProjectionEvent>,
    /// Pairs skipped because the opposing gradient's squared norm
    /// underflowed to zero; projecting would divide by it.
    pub skipped: Vec<(usize, usize)>,
}

/// Fisher-Yates shuffle driven by `rng`.
fn shuffle(items: &mut [usize], rng: &mut RandomSource) {
    for k in (1..items.len()).rev() {
        let j = rng.index(k + 1);
        items.swap(k, j);
    }
}

/// Gradient surgery on a set of per-task gradients.
///
/// Gradient `i` is projected off every other *original* gradient it
/// conflicts with (negative inner product), visiting the others in an
/// order shuffled by `perm_rng`, one shuffle per gradient. Non-conflicting
/// gradients come back as exact clones, so a conflict-free set survives
/// surgery bit for bit.
pub fn gradient_surgery(
    gradients: &[ParamVector],
    perm_rng: &mut RandomSource,
) -> Result<(Vec<ParamVector>, SurgeryReport)> {
    let mut report = SurgeryReport::default();
    let mut surgered_set = Vec::with_capacity(gradients.len());
    for i in 0..gradients.len() {
        let mut surgered = gradients[i].clone();
        let mut others: Vec<usize> = (0..gradients.len()).filter(|&j| j != i).collect();
        shuffle(&mut others, perm_rng);
        for j in others {
            let dot = surgered.dot(&gradients[j])?;
            if dot < 0.0 {
                let norm_sq = gradients[j].dot(&gradients[j])?;
                if norm_sq == 0.0 {
                    report.skipped.push((i, j));
                    continue;
                }
                surgered = surgered.axpy(-dot / norm_sq, &gradients[j])?;
                report.events.push(ProjectionEvent {
                    task: i,
                    against: j,
                    dot,
                });
            }
        }
        surgered_set.push(surgered);
    }
    Ok((surgered_set, report))
}

/// One gradient-surgery step.
///
/// Each task's gradient is projected off every other task's *original*
/// gradient it conflicts with (negative inner product), visiting the
/// others in a seeded random order; the surgered gradients are then summed
/// and applied like a joint step. When no pair conflicts this reduces to
/// [`joint_mtl_step`] with `l2_coeff = 0`, bit for bit, because both draw
/// batches from the same child streams and sum in task order.
pub fn pcgrad_step(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    cfg: &RunConfig,
    rng: &mut RandomSource,
) -> Result<(ParamVector, SurgeryReport)> {
    check_tasks_dim(phi, tasks)?;
    let step_src = rng.fork();
    let batches = step_batches(tasks, cfg, &step_src);
    let mut gradients = Vec::with_capacity(tasks.len());
    for (task, batch) in tasks.iter().zip(&batches) {
        let (loss, gradient) = task.evaluate(phi, batch)?;
        if !loss.is_finite() {
            return Err(divergence(
                0,
                format!("task {} produced non-finite loss {loss}", task.id()),
            ));
        }
        gradients.push(gradient);
    }
    let mut perm_rng = step_src.child(SURGERY_PERM_STREAM);
    let (surgered_set, report) = gradient_surgery(&gradients, &mut perm_rng)?;
    let mut total = ParamVector::zeros(phi.dim())?;
    for surgered in &surgered_set {
        total = total.add(surgered)?;
    }
    let new_phi = phi.axpy(-cfg.inner_lr, &total)?;
    if !new_phi.is_finite() {
        return Err(divergence(0, "surgery step overflowed".into()));
    }
    Ok((new_phi, report))
}

/// Everything a finished (or aborted) run recorded.
///
/// `snapshots` holds `outer_steps + 1` parameter vectors, the starting
/// point first. Loss entries are full-dataset diagnostics evaluated at
/// each snapshot; they are not counted in `gradient_evaluations`, which
/// tallies only gradients consumed by optimization steps.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub kind: OptimizerKind,
    pub snapshots: Vec<ParamVector>,
    pub mtl_losses: Vec<f64>,
    pub task_losses: Vec<Vec<f64>>,
    pub gradient_evaluations: u64,
    pub surgery_projections: u64,
}

impl TrainRecord {
    pub fn final_params(&self) -> &ParamVector {
        self.snapshots.last().expect("records hold the start")
    }

    /// Outer steps actually completed.
    pub fn completed_steps(&self) -> usize {
        self.snapshots.len() - 1
    }
}

/// A run that stopped early, with whatever it had recorded.
#[derive(Debug, Clone)]
pub struct TrainFailure {
    pub error: Error,
    pub partial: TrainRecord,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "training stopped after {} outer steps: {}",
            self.partial.completed_steps(),
            self.error
        )
    }
}

impl std::error::Error for TrainFailure {}

fn snapshot_losses(
    phi: &ParamVector,
    tasks: &[Box<dyn Task>],
    cfg: &RunConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut per_task = Vec::with_capacity(tasks.len());
    for task in tasks {
        per_task.push(task.loss(phi)?);
    }
    let mut mtl: f64 = per_task.iter().sum();
    if cfg.l2_coeff > 0.0 {
        if let Some(reference) = &cfg.l2_reference {
            let d = phi.l2_distance(reference)?;
            mtl += 0.5 * cfg.l2_coeff * d * d;
        }
    }
    Ok((mtl, per_task))
}

/// Runs `cfg.outer_steps` steps of the chosen optimizer from `phi0`.
///
/// Deterministic: the record is a pure function of the arguments and the
/// state of `rng` (callers normally seed it from `cfg.seed`). On
/// divergence the error is returned together with the record of every
/// completed step.
pub fn train(
    kind: OptimizerKind,
    phi0: &ParamVector,
    tasks: &[Box<dyn Task>],
    sampler: &TaskSampler,
    cfg: &RunConfig,
    rng: &mut RandomSource,
) -> std::result::Result<TrainRecord, Box<TrainFailure>> {
    let fail = |error: Error, partial: TrainRecord| Box::new(TrainFailure { error, partial });
    let minimal = |kind| TrainRecord {
        kind,
        snapshots: vec![phi0.clone()],
        mtl_losses: Vec::new(),
        task_losses: Vec::new(),
        gradient_evaluations: 0,
        surgery_projections: 0,
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, minimal(kind)));
    }
    if sampler.len() != tasks.len() {
        return Err(fail(
            Error::InvalidConfig {
                field: "sampler",
                message: format!(
                    "sampler covers {} tasks but {} were supplied",
                    sampler.len(),
                    tasks.len()
                ),
            },
            minimal(kind),
        ));
    }
    let mut record = minimal(kind);
    match snapshot_losses(phi0, tasks, cfg) {
        Ok((mtl, per_task)) => {
            record.mtl_losses.push(mtl);
            record.task_losses.push(per_task);
        }
        Err(e) => return Err(fail(e, record)),
    }
    let mut phi = phi0.clone();
    for step in 0..cfg.outer_steps {
        let stepped = match kind {
            OptimizerKind::JointMtl => joint_mtl_step(&phi, tasks, cfg, rng).inspect(|_| {
                record.gradient_evaluations += tasks.len() as u64;
            }),
            OptimizerKind::Reptile => reptile_meta_step(&phi, tasks, cfg, rng).map(|(p, trajs)| {
                record.gradient_evaluations +=
                    trajs.iter().map(|t| t.len() as u64).sum::<u64>();
                p
            }),
            OptimizerKind::SequentialReptile => {
                sequential_reptile_meta_step(&phi, tasks, sampler, cfg, rng).map(|(p, traj)| {
                    record.gradient_evaluations += traj.len() as u64;
                    p
                })
            }
            OptimizerKind::PcGrad => pcgrad_step(&phi, tasks, cfg, rng).map(|(p, report)| {
                record.gradient_evaluations += tasks.len() as u64;
                record.surgery_projections += report.events.len() as u64;
                p
            }),
        };
        phi = match stepped {
            Ok(p) => p,
            Err(Error::Divergence {
                inner_step, detail, ..
            }) => {
                return Err(fail(
                    Error::Divergence {
                        outer_step: step,
                        inner_step,
                        detail,
                    },
                    record,
                ));
            }
            Err(e) => return Err(fail(e, record)),
        };
        match snapshot_losses(&phi, tasks, cfg) {
            Ok((mtl, per_task)) => {
                record.snapshots.push(phi.clone());
                record.mtl_losses.push(mtl);
                record.task_losses.push(per_task);
            }
            Err(e) => return Err(fail(e, record)),
        }
    }
    Ok(record)
}
