//! Built-in experiment presets.

use std::collections::BTreeMap;

use crate::config::{
    ExperimentConfig, GridSpec, InitSpec, RunOverrides, RunSettings, SamplerSpec, TaskSetSpec,
};
use crate::error::{CliError, CliResult};

/// Names and one-line descriptions of the built-in presets.
pub const PRESETS: [(&str, &str); 4] = [
    (
        "synthetic3",
        "three radial wells from (20, 5): the optimizer comparison on the 2-D toy landscape",
    ),
    (
        "quad2",
        "two quadratic bowls: the verification substrate for expectation and alignment checks",
    ),
    (
        "quad3",
        "three quadratic bowls: a small non-symmetric companion to quad2",
    ),
    (
        "regress4",
        "four linear-regression datasets of sizes 100/400/1600/3200 with size-proportional sampling",
    ),
];

/// Builds a preset by name.
pub fn build(name: &str) -> CliResult<ExperimentConfig> {
    match name {
        "synthetic3" => Ok(synthetic3()),
        "quad2" => Ok(quad2()),
        "quad3" => Ok(quad3()),
        "regress4" => Ok(regress4()),
        other => Err(CliError::config(format!(
            "unknown preset '{other}' (expected one of: {})",
            PRESETS
                .iter()
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

/// Whether `name` names a built-in preset.
pub fn is_preset(name: &str) -> bool {
    PRESETS.iter().any(|(n, _)| *n == name)
}

fn override_lr(inner_lr: f64) -> RunOverrides {
    RunOverrides {
        inner_lr: Some(inner_lr),
        ..RunOverrides::default()
    }
}

/// The three-well comparison: joint descent and gradient surgery settle
/// into a well; the meta-optimizers hover between wells.
///
/// Step sizes are per-optimizer: the joint methods need a small step to
/// descend the stiff exponential walls stably, while the meta-optimizers
/// keep the larger step that makes their trajectory mixing visible.
fn synthetic3() -> ExperimentConfig {
    let mut optimizers = BTreeMap::new();
    optimizers.insert("mtl".into(), override_lr(0.006));
    optimizers.insert("pcgrad".into(), override_lr(0.006));
    optimizers.insert("reptile".into(), RunOverrides::default());
    optimizers.insert("seq-reptile".into(), RunOverrides::default());
    ExperimentConfig {
        name: "synthetic3".into(),
        seeds: (0..10).collect(),
        metric_every: 10,
        tasks: TaskSetSpec::Radial {
            centers: vec![vec![0.0, 10.0], vec![0.0, 0.0], vec![10.0, 0.0]],
            amplitude: 200.0,
            rate: 0.2,
        },
        sampler: SamplerSpec::Uniform,
        init: InitSpec {
            phi0: vec![20.0, 5.0],
        },
        defaults: RunSettings {
            inner_lr: 0.1,
            outer_lr: 0.5,
            inner_steps: 10,
            outer_steps: 500,
            batch_size: 16,
            l2_coeff: 0.0,
        },
        optimizers,
        grid: Some(GridSpec {
            min_x: -5.0,
            max_x: 25.0,
            min_y: -5.0,
            max_y: 25.0,
            nx: 301,
            ny: 301,
        }),
        output_dir: None,
    }
}

fn all_default_optimizers() -> BTreeMap<String, RunOverrides> {
    ["mtl", "reptile", "seq-reptile", "pcgrad"]
        .into_iter()
        .map(|n| (n.to_string(), RunOverrides::default()))
        .collect()
}

/// Two quadratic bowls with targets (1,0) and (0,1) from (2,2): small
/// enough for exact expectation enumeration, and the substrate for the
/// step-size alignment sweep.
fn quad2() -> ExperimentConfig {
    ExperimentConfig {
        name: "quad2".into(),
        seeds: vec![0],
        metric_every: 10,
        tasks: TaskSetSpec::Quadratic {
            targets: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        sampler: SamplerSpec::Uniform,
        init: InitSpec {
            phi0: vec![2.0, 2.0],
        },
        defaults: RunSettings {
            inner_lr: 0.05,
            outer_lr: 0.5,
            inner_steps: 5,
            outer_steps: 400,
            batch_size: 16,
            l2_coeff: 0.0,
        },
        optimizers: all_default_optimizers(),
        grid: Some(GridSpec {
            min_x: -1.0,
            max_x: 3.0,
            min_y: -1.0,
            max_y: 3.0,
            nx: 161,
            ny: 161,
        }),
        output_dir: None,
    }
}

/// Three quadratic bowls, deliberately not symmetric about the start.
fn quad3() -> ExperimentConfig {
    ExperimentConfig {
        name: "quad3".into(),
        seeds: vec![0],
        metric_every: 10,
        tasks: TaskSetSpec::Quadratic {
            targets: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]],
        },
        sampler: SamplerSpec::Uniform,
        init: InitSpec {
            phi0: vec![2.0, 2.0],
        },
        defaults: RunSettings {
            inner_lr: 0.05,
            outer_lr: 0.5,
            inner_steps: 5,
            outer_steps: 400,
            batch_size: 16,
            l2_coeff: 0.0,
        },
        optimizers: all_default_optimizers(),
        grid: Some(GridSpec {
            min_x: -3.0,
            max_x: 3.0,
            min_y: -3.0,
            max_y: 3.0,
            nx: 151,
            ny: 151,
        }),
        output_dir: None,
    }
}

/// Four stochastic regression tasks with dataset sizes 100..3200 and
/// sampling probabilities proportional to size^0.2.
fn regress4() -> ExperimentConfig {
    ExperimentConfig {
        name: "regress4".into(),
        seeds: vec![0, 1, 2],
        metric_every: 10,
        tasks: TaskSetSpec::Regression {
            counts: vec![100, 400, 1600, 3200],
            dim: 8,
            noise: 0.1,
            data_seed: 7,
        },
        sampler: SamplerSpec::SizeProportional { exponent: 0.2 },
        init: InitSpec { phi0: vec![0.0; 8] },
        defaults: RunSettings {
            inner_lr: 0.01,
            outer_lr: 0.5,
            inner_steps: 10,
            outer_steps: 200,
            batch_size: 16,
            l2_coeff: 0.0,
        },
        optimizers: all_default_optimizers(),
        grid: None,
        output_dir: None,
    }
}
