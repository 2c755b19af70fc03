//! Experiment configuration: schema, validation, and resolution.
//!
//! Configs are TOML on disk. A *resolved* config has every per-optimizer
//! setting materialized, so it round-trips losslessly through the run
//! manifest and re-running a manifest reproduces the original outputs.

use std::collections::BTreeMap;
use std::path::Path;

use mtopt::{OptimizerKind, ParamVector, RandomSource, RunConfig, Task, TaskSampler};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment name; also the default output subdirectory.
    pub name: String,
    /// Seeds to run every optimizer under. Must be non-empty.
    pub seeds: Vec<u64>,
    /// Record metrics every this many outer steps (step 0 and the final
    /// step are always included).
    #[serde(default = "default_metric_every")]
    pub metric_every: usize,
    /// The task family and its parameters.
    pub tasks: TaskSetSpec,
    /// How inner steps choose their task.
    #[serde(default)]
    pub sampler: SamplerSpec,
    /// Shared parameter initialization.
    pub init: InitSpec,
    /// Base settings applied to every optimizer.
    #[serde(default)]
    pub defaults: RunSettings,
    /// Optimizers to run, keyed by name (`mtl`, `reptile`, `seq-reptile`,
    /// `pcgrad`), each with optional overrides of the defaults. An empty
    /// map means "run all four with the defaults".
    #[serde(default)]
    pub optimizers: BTreeMap<String, RunOverrides>,
    /// Loss-surface grid to export (2-D experiments only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Output directory; overridable by `--out` and the output-root
    /// environment variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_metric_every() -> usize {
    10
}

/// Task family specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSetSpec {
    /// Exponential radial wells `-amplitude * exp(-rate * |phi - c|)`.
    Radial {
        centers: Vec<Vec<f64>>,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_rate")]
        rate: f64,
    },
    /// Isotropic quadratic bowls `0.5 * |phi - target|^2`.
    Quadratic { targets: Vec<Vec<f64>> },
    /// Synthetic linear-regression datasets of the given sizes.
    Regression {
        counts: Vec<u64>,
        dim: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        /// Seed for dataset generation, separate from the run seeds so
        /// every run sees identical data.
        #[serde(default)]
        data_seed: u64,
    },
}

fn default_amplitude() -> f64 {
    200.0
}

fn default_rate() -> f64 {
    0.2
}

fn default_noise() -> f64 {
    0.1
}

impl TaskSetSpec {
    /// Number of tasks in the set.
    pub fn len(&self) -> usize {
        match self {
            TaskSetSpec::Radial { centers, .. } => centers.len(),
            TaskSetSpec::Quadratic { targets } => targets.len(),
            TaskSetSpec::Regression { counts, .. } => counts.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter dimension the tasks live in.
    pub fn dim(&self) -> Option<usize> {
        match self {
            TaskSetSpec::Radial { centers, .. } => centers.first().map(Vec::len),
            TaskSetSpec::Quadratic { targets } => targets.first().map(Vec::len),
            TaskSetSpec::Regression { dim, .. } => Some(*dim),
        }
    }

    /// Dataset sizes, when the family has datasets.
    pub fn counts(&self) -> Option<&[u64]> {
        match self {
            TaskSetSpec::Regression { counts, .. } => Some(counts),
            _ => None,
        }
    }

    /// Instantiates the task set. Deterministic: regression data depends
    /// only on `data_seed`.
    pub fn build(&self) -> CliResult<Vec<Box<dyn Task>>> {
        let mut tasks: Vec<Box<dyn Task>> = Vec::with_capacity(self.len());
        match self {
            TaskSetSpec::Radial {
                centers,
                amplitude,
                rate,
            } => {
                for (i, c) in centers.iter().enumerate() {
                    let center = ParamVector::new(c.clone())
                        .map_err(|e| CliError::config(format!("tasks.centers[{i}]: {e}")))?;
                    tasks.push(Box::new(mtopt::SyntheticRadialTask::with_shape(
                        i, center, *amplitude, *rate,
                    )));
                }
            }
            TaskSetSpec::Quadratic { targets } => {
                for (i, t) in targets.iter().enumerate() {
                    let target = ParamVector::new(t.clone())
                        .map_err(|e| CliError::config(format!("tasks.targets[{i}]: {e}")))?;
                    tasks.push(Box::new(mtopt::QuadraticTask::new(i, target)));
                }
            }
            TaskSetSpec::Regression {
                counts,
                dim,
                noise,
                data_seed,
            } => {
                let root = RandomSource::new(*data_seed);
                for (i, &n) in counts.iter().enumerate() {
                    let mut rng = root.child(i as u64);
                    let task =
                        mtopt::RegressionTask::generate(i, n as usize, *dim, *noise, &mut rng)
                            .map_err(|e| CliError::config(format!("tasks.counts[{i}]: {e}")))?;
                    tasks.push(Box::new(task));
                }
            }
        }
        Ok(tasks)
    }
}

/// Task-choice distribution for inner steps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// Every task equally likely.
    #[default]
    Uniform,
    /// `p_t` proportional to the task's dataset size raised to `exponent`.
    SizeProportional {
        #[serde(default = "default_exponent")]
        exponent: f64,
    },
    /// Explicit positive weights, normalized to probabilities.
    Weights { weights: Vec<f64> },
}

fn default_exponent() -> f64 {
    mtopt::DEFAULT_SIZE_EXPONENT
}

impl SamplerSpec {
    /// Builds the sampler for the given task set.
    pub fn build(&self, tasks: &TaskSetSpec) -> CliResult<TaskSampler> {
        match self {
            SamplerSpec::Uniform => TaskSampler::uniform(tasks.len())
                .map_err(|e| CliError::config(format!("sampler: {e}"))),
            SamplerSpec::SizeProportional { exponent } => {
                let counts = tasks.counts().ok_or_else(|| {
                    CliError::config(
                        "sampler.mode: size-proportional needs a task family with dataset \
                         counts (regression)",
                    )
                })?;
                TaskSampler::from_counts(counts, *exponent)
                    .map_err(|e| CliError::config(format!("sampler: {e}")))
            }
            SamplerSpec::Weights { weights } => TaskSampler::from_weights(weights)
                .map_err(|e| CliError::config(format!("sampler.weights: {e}"))),
        }
    }
}

/// Initialization of the shared parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub phi0: Vec<f64>,
}

impl InitSpec {
    pub fn build(&self) -> CliResult<ParamVector> {
        ParamVector::new(self.phi0.clone()).map_err(|e| CliError::config(format!("init.phi0: {e}")))
    }
}

/// Fully-specified run settings (the serializable face of [`RunConfig`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub inner_steps: usize,
    pub outer_steps: usize,
    pub batch_size: usize,
    /// Strength of the optional L2 pull toward `phi0` in the joint
    /// objective; 0 disables it.
    pub l2_coeff: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        let base = RunConfig::default();
        RunSettings {
            inner_lr: base.inner_lr,
            outer_lr: base.outer_lr,
            inner_steps: base.inner_steps,
            outer_steps: base.outer_steps,
            batch_size: base.batch_size,
            l2_coeff: base.l2_coeff,
        }
    }
}

impl RunSettings {
    /// Converts to the library's run config for one seeded run.
    pub fn to_run_config(&self, seed: u64, phi0: &ParamVector) -> RunConfig {
        let mut cfg = RunConfig::default()
            .with_inner_lr(self.inner_lr)
            .with_outer_lr(self.outer_lr)
            .with_inner_steps(self.inner_steps)
            .with_outer_steps(self.outer_steps)
            .with_batch_size(self.batch_size)
            .with_seed(seed);
        if self.l2_coeff > 0.0 {
            cfg = cfg.with_l2(self.l2_coeff, phi0.clone());
        }
        cfg
    }

    fn overlay(&self, over: &RunOverrides) -> RunSettings {
        RunSettings {
            inner_lr: over.inner_lr.unwrap_or(self.inner_lr),
            outer_lr: over.outer_lr.unwrap_or(self.outer_lr),
            inner_steps: over.inner_steps.unwrap_or(self.inner_steps),
            outer_steps: over.outer_steps.unwrap_or(self.outer_steps),
            batch_size: over.batch_size.unwrap_or(self.batch_size),
            l2_coeff: over.l2_coeff.unwrap_or(self.l2_coeff),
        }
    }

    fn as_overrides(&self) -> RunOverrides {
        RunOverrides {
            inner_lr: Some(self.inner_lr),
            outer_lr: Some(self.outer_lr),
            inner_steps: Some(self.inner_steps),
            outer_steps: Some(self.outer_steps),
            batch_size: Some(self.batch_size),
            l2_coeff: Some(self.l2_coeff),
        }
    }
}

/// Per-optimizer overrides of the default run settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_coeff: Option<f64>,
}

/// Rectangle and resolution of the exported loss grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn bounds(&self) -> mtopt::GridBounds {
        mtopt::GridBounds {
            min_x: self.min_x,
            max_x: self.max_x,
            min_y: self.min_y,
            max_y: self.max_y,
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML config file, or the `config` field of a JSON run
    /// manifest (so a manifest can be re-run directly).
    pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: crate::runner::RunManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            Ok(manifest.config)
        } else {
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
    }

    /// Optimizers to run, in the library's canonical order.
    pub fn optimizer_kinds(&self) -> CliResult<Vec<OptimizerKind>> {
        for name in self.optimizers.keys() {
            name.parse::<OptimizerKind>()
                .map_err(|e| CliError::config(format!("optimizers.{name}: {e}")))?;
        }
        let kinds: Vec<OptimizerKind> = OptimizerKind::ALL
            .into_iter()
            .filter(|k| self.optimizers.is_empty() || self.optimizers.contains_key(k.name()))
            .collect();
        Ok(kinds)
    }

    /// Settings for one optimizer: defaults overlaid with its overrides.
    pub fn settings_for(&self, kind: OptimizerKind) -> RunSettings {
        match self.optimizers.get(kind.name()) {
            Some(over) => self.defaults.overlay(over),
            None => self.defaults.clone(),
        }
    }

    /// Checks every field, returning one message per problem.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            problems.push(format!(
                "name: must be non-empty and use only [A-Za-z0-9-_], got {:?}",
                self.name
            ));
        }
        if self.seeds.is_empty() {
            problems.push("seeds: must list at least one seed".into());
        }
        if self.metric_every == 0 {
            problems.push("metric_every: must be >= 1".into());
        }
        if self.tasks.is_empty() {
            problems.push("tasks: the task set is empty".into());
        }
        let dim = self.tasks.dim().unwrap_or(0);
        match &self.tasks {
            TaskSetSpec::Radial { centers, .. } => {
                for (i, c) in centers.iter().enumerate() {
                    if c.len() != dim {
                        problems.push(format!(
                            "tasks.centers[{i}]: dimension {} does not match {}",
                            c.len(),
                            dim
                        ));
                    }
                }
            }
            TaskSetSpec::Quadratic { targets } => {
                for (i, t) in targets.iter().enumerate() {
                    if t.len() != dim {
                        problems.push(format!(
                            "tasks.targets[{i}]: dimension {} does not match {}",
                            t.len(),
                            dim
                        ));
                    }
                }
            }
            TaskSetSpec::Regression { counts, dim, .. } => {
                if *dim == 0 {
                    problems.push("tasks.dim: must be >= 1".into());
                }
                for (i, &n) in counts.iter().enumerate() {
                    if n == 0 {
                        problems.push(format!("tasks.counts[{i}]: must be >= 1"));
                    }
                }
            }
        }
        if !self.tasks.is_empty() && self.init.phi0.len() != dim {
            problems.push(format!(
                "init.phi0: dimension {} does not match the task dimension {}",
                self.init.phi0.len(),
                dim
            ));
        }
        if let SamplerSpec::Weights { weights } = &self.sampler {
            if weights.len() != self.tasks.len() {
                problems.push(format!(
                    "sampler.weights: {} weights for {} tasks",
                    weights.len(),
                    self.tasks.len()
                ));
            }
        }
        if matches!(self.sampler, SamplerSpec::SizeProportional { .. })
            && self.tasks.counts().is_none()
        {
            problems
                .push("sampler.mode: size-proportional needs a task family with counts".into());
        }
        if let Some(grid) = &self.grid {
            if dim != 2 {
                problems.push(format!(
                    "grid: loss grids need 2-D parameters, tasks are {dim}-D"
                ));
            }
            let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo < hi;
            if !ordered(grid.min_x, grid.max_x) || !ordered(grid.min_y, grid.max_y) {
                problems.push(
                    "grid: bounds must be finite with min strictly below max".into(),
                );
            }
            if grid.nx < 2 || grid.ny < 2 {
                problems.push("grid: resolution must be at least 2 per axis".into());
            }
        }
        match self.optimizer_kinds() {
            Ok(kinds) => {
                if let Ok(phi0) = self.init.build() {
                    for kind in kinds {
                        let settings = self.settings_for(kind);
                        if let Err(e) = settings.to_run_config(0, &phi0).validate() {
                            problems.push(format!("optimizers.{}: {e}", kind.name()));
                        }
                    }
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
        problems
    }

    /// Returns a copy with every optimizer's settings fully materialized,
    /// suitable for embedding in a manifest.
    pub fn resolved(&self) -> CliResult<ExperimentConfig> {
        let mut resolved = self.clone();
        resolved.optimizers = BTreeMap::new();
        for kind in self.optimizer_kinds()? {
            resolved.optimizers.insert(
                kind.name().to_string(),
                self.settings_for(kind).as_overrides(),
            );
        }
        Ok(resolved)
    }

    /// Serializes the config as TOML.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::io(format!("serialize config: {e}")))
    }
}
