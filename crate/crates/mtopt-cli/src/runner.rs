//! Experiment execution and file emission.
//!
//! Every (optimizer, seed) pair runs in its own directory; all numeric
//! output uses shortest-roundtrip decimal rendering, so outputs are
//! byte-identical across repeated invocations and worker counts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use mtopt::{
    alignment_report, loss_grid, train, OptimizerKind, ParamVector, RandomSource, Task,
    TaskSampler, TrainRecord,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Record of one finished experiment: resolved config plus a checksum of
/// every file it produced. Re-running the manifest reproduces the files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Identifier of the random-generator algorithm stack.
    pub generator: String,
    /// Version of this crate.
    pub version: String,
    /// The experiment with every default materialized.
    pub config: ExperimentConfig,
    /// SHA-256 of each output file, keyed by path relative to the
    /// experiment directory. The manifest itself is excluded.
    pub files: BTreeMap<String, String>,
}

/// Final state of one (optimizer, seed) run; serialized as `final.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalReport {
    pub optimizer: String,
    pub seed: u64,
    pub requested_steps: usize,
    pub completed_steps: usize,
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub final_params: Vec<f64>,
    pub mtl_loss: f64,
    pub task_losses: Vec<f64>,
    /// Mean off-diagonal cosine of the task gradients at the final
    /// iterate; `null` when a task gradient is exactly zero there.
    pub mean_offdiag_cosine: Option<f64>,
    pub l2_from_init: f64,
    pub gradient_evaluations: u64,
    pub surgery_projections: u64,
}

/// Everything `run` produced, in deterministic run order.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub runs: Vec<FinalReport>,
}

impl ExperimentOutcome {
    /// Number of runs that stopped on divergence.
    pub fn diverged(&self) -> usize {
        self.runs.iter().filter(|r| r.diverged).count()
    }
}

/// Runs every (optimizer, seed) pair of the experiment into `out_dir`,
/// with up to `jobs` runs in parallel, then writes the grid and the
/// manifest. Returns the outcome even when some runs diverged; the
/// caller decides the exit code.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
) -> CliResult<ExperimentOutcome> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(CliError::Config(problems.join("\n")));
    }
    let resolved = cfg.resolved()?;
    let tasks = resolved.tasks.build()?;
    let sampler = resolved.sampler.build(&resolved.tasks)?;
    let phi0 = resolved.init.build()?;
    let kinds = resolved.optimizer_kinds()?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(format!("create {}: {e}", out_dir.display())))?;

    let mut planned: Vec<(OptimizerKind, u64)> = Vec::new();
    for &kind in &kinds {
        for &seed in &resolved.seeds {
            planned.push((kind, seed));
        }
    }

    let results: Mutex<Vec<Option<CliResult<FinalReport>>>> =
        Mutex::new((0..planned.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = jobs.max(1).min(planned.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= planned.len() {
                    break;
                }
                let (kind, seed) = planned[i];
                let settings = resolved.settings_for(kind);
                let run_dir = out_dir.join(kind.name()).join(format!("seed{seed}"));
                let report = execute_run(
                    kind,
                    seed,
                    &settings.to_run_config(seed, &phi0),
                    &phi0,
                    &tasks,
                    &sampler,
                    resolved.metric_every,
                    &run_dir,
                );
                results.lock().expect("runner mutex")[i] = Some(report);
            });
        }
    });

    let mut runs = Vec::with_capacity(planned.len());
    for slot in results.into_inner().expect("runner mutex") {
        runs.push(slot.expect("every planned run executes")?);
    }

    if let Some(grid_spec) = &resolved.grid {
        let grid = loss_grid(&tasks, grid_spec.bounds(), (grid_spec.nx, grid_spec.ny))
            .map_err(|e| CliError::io(format!("loss grid: {e}")))?;
        let mut csv = String::from("x,y,mtl_loss\n");
        for iy in 0..grid.ny() {
            for ix in 0..grid.nx() {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    grid.x_at(ix),
                    grid.y_at(iy),
                    grid.value(ix, iy)
                ));
            }
        }
        write_file(&out_dir.join("grid.csv"), csv.as_bytes())?;
    }

    let manifest = RunManifest {
        generator: mtopt::GENERATOR_ID.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: resolved,
        files: hash_tree(out_dir)?,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::io(format!("serialize manifest: {e}")))?;
    text.push('\n');
    write_file(&out_dir.join("manifest.json"), text.as_bytes())?;

    Ok(ExperimentOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest,
        runs,
    })
}

/// Steps at which metrics are recorded: every `every` steps, plus the
/// final completed step.
pub fn metric_steps(completed: usize, every: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=completed).step_by(every.max(1)).collect();
    if *steps.last().expect("step 0 always present") != completed {
        steps.push(completed);
    }
    steps
}

#[allow(clippy::too_many_arguments)]
fn execute_run(
    kind: OptimizerKind,
    seed: u64,
    run_cfg: &mtopt::RunConfig,
    phi0: &ParamVector,
    tasks: &[Box<dyn Task>],
    sampler: &TaskSampler,
    metric_every: usize,
    run_dir: &Path,
) -> CliResult<FinalReport> {
    std::fs::create_dir_all(run_dir)
        .map_err(|e| CliError::io(format!("create {}: {e}", run_dir.display())))?;
    let mut rng = RandomSource::new(seed);
    let (record, error) = match train(kind, phi0, tasks, sampler, run_cfg, &mut rng) {
        Ok(record) => (record, None),
        Err(failure) => {
            let failure = *failure;
            (failure.partial, Some(failure.error.to_string()))
        }
    };

    write_file(
        &run_dir.join("trajectory.csv"),
        trajectory_csv(&record).as_bytes(),
    )?;
    write_file(
        &run_dir.join("metrics.csv"),
        metrics_csv(&record, tasks, phi0, metric_every).as_bytes(),
    )?;
    write_file(
        &run_dir.join("alignment.csv"),
        alignment_csv(record.final_params(), tasks).as_bytes(),
    )?;

    let final_params = record.final_params();
    let report = FinalReport {
        optimizer: kind.name().to_string(),
        seed,
        requested_steps: run_cfg.outer_steps,
        completed_steps: record.completed_steps(),
        diverged: error.is_some(),
        error,
        final_params: final_params.values().to_vec(),
        mtl_loss: record.mtl_losses.last().copied().unwrap_or(f64::NAN),
        task_losses: record.task_losses.last().cloned().unwrap_or_default(),
        mean_offdiag_cosine: alignment_report(final_params, tasks)
            .ok()
            .and_then(|r| r.mean_offdiagonal()),
        l2_from_init: final_params.l2_distance(phi0).unwrap_or(f64::NAN),
        gradient_evaluations: record.gradient_evaluations,
        surgery_projections: record.surgery_projections,
    };
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::io(format!("serialize final report: {e}")))?;
    text.push('\n');
    write_file(&run_dir.join("final.json"), text.as_bytes())?;
    Ok(report)
}

fn trajectory_csv(record: &TrainRecord) -> String {
    let dim = record.snapshots[0].dim();
    let mut out = String::from("step");
    for i in 0..dim {
        out.push_str(&format!(",phi_{i}"));
    }
    out.push('\n');
    for (step, snapshot) in record.snapshots.iter().enumerate() {
        out.push_str(&step.to_string());
        for v in snapshot.values() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn metrics_csv(
    record: &TrainRecord,
    tasks: &[Box<dyn Task>],
    phi0: &ParamVector,
    metric_every: usize,
) -> String {
    let mut out = String::from("step,mtl_loss");
    for t in 1..=tasks.len() {
        out.push_str(&format!(",task_loss_{t}"));
    }
    out.push_str(",mean_offdiag_cosine,l2_from_init\n");
    for step in metric_steps(record.completed_steps(), metric_every) {
        let snapshot = &record.snapshots[step];
        let cosine = alignment_report(snapshot, tasks)
            .ok()
            .and_then(|r| r.mean_offdiagonal())
            .unwrap_or(f64::NAN);
        let l2 = snapshot.l2_distance(phi0).unwrap_or(f64::NAN);
        out.push_str(&format!("{step},{}", record.mtl_losses[step]));
        for loss in &record.task_losses[step] {
            out.push_str(&format!(",{loss}"));
        }
        out.push_str(&format!(",{cosine},{l2}\n"));
    }
    out
}

fn alignment_csv(phi: &ParamVector, tasks: &[Box<dyn Task>]) -> String {
    let t = tasks.len();
    let mut out = String::new();
    for i in 1..=t {
        if i > 1 {
            out.push(',');
        }
        out.push_str(&format!("task_{i}"));
    }
    out.push('\n');
    let matrix = alignment_report(phi, tasks).ok();
    for row in 0..t {
        for col in 0..t {
            if col > 0 {
                out.push(',');
            }
            let v = matrix
                .as_ref()
                .map(|m| m.matrix()[row][col])
                .unwrap_or(f64::NAN);
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("write {}: {e}", path.display())))
}

/// SHA-256 of every regular file under `root` except the manifest,
/// keyed by `/`-separated relative path.
pub fn hash_tree(root: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| CliError::io(format!("read {}: {e}", dir.display())))?;
        for entry in entries {
            let entry = entry.map_err(|e| CliError::io(format!("read {}: {e}", dir.display())))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                if rel == "manifest.json" {
                    continue;
                }
                let bytes = std::fs::read(&path)
                    .map_err(|e| CliError::io(format!("read {}: {e}", path.display())))?;
                files.insert(rel, hex::encode(Sha256::digest(&bytes)));
            }
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_schedule_includes_endpoints() {
        assert_eq!(metric_steps(500, 10).len(), 51);
        assert_eq!(metric_steps(500, 10).first(), Some(&0));
        assert_eq!(metric_steps(500, 10).last(), Some(&500));
        assert_eq!(metric_steps(7, 3), vec![0, 3, 6, 7]);
        assert_eq!(metric_steps(0, 10), vec![0]);
    }
}
