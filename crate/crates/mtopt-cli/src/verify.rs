//! Verification suites: gradient checks, expectation-oracle consistency,
//! and surrogate order measurements, with a machine-readable report.

use std::path::Path;

use mtopt::{
    expected_meta_gradient_exact, expected_meta_gradient_mc, finite_difference_gradient,
    taylor_order_check, ParamVector, RandomSource, ResidualTable, RunConfig, Task, TaskSampler,
};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};

/// One assertion of a suite, with what was measured and the bound it was
/// held to.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub tolerance: String,
    pub measured: serde_json::Value,
}

/// A whole suite run; serialized as the report file.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub generator: String,
    pub version: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Runs the named suite (`taylor`, `oracle`, `gradcheck`, or `all`) and
/// writes the report to `report_path`. Returns the report; the caller
/// turns `passed == false` into exit 1 after the file is on disk.
pub fn run_suite(suite: &str, report_path: &Path) -> CliResult<VerifyReport> {
    let checks = match suite {
        "taylor" => taylor_checks(),
        "oracle" => oracle_checks(),
        "gradcheck" => gradcheck_checks(),
        "all" => {
            let mut all = taylor_checks();
            all.extend(oracle_checks());
            all.extend(gradcheck_checks());
            all
        }
        other => {
            return Err(CliError::config(format!(
                "unknown suite '{other}' (expected taylor, oracle, gradcheck, or all)"
            )))
        }
    };
    let report = VerifyReport {
        suite: suite.to_string(),
        generator: mtopt::GENERATOR_ID.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::io(format!("serialize report: {e}")))?;
    text.push('\n');
    if let Some(parent) = report_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(format!("create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(report_path, text)
        .map_err(|e| CliError::io(format!("write {}: {e}", report_path.display())))?;
    Ok(report)
}

fn quad_tasks(targets: &[[f64; 2]]) -> Vec<Box<dyn Task>> {
    targets
        .iter()
        .enumerate()
        .map(|(i, t)| Box::new(mtopt::QuadraticTask::new(i, pv(&t[..]))) as Box<dyn Task>)
        .collect()
}

fn pv(values: &[f64]) -> ParamVector {
    ParamVector::new(values.to_vec()).expect("finite literals")
}

fn table_json(table: &ResidualTable) -> serde_json::Value {
    json!({
        "alphas": table.rows.iter().map(|r| r.alpha).collect::<Vec<_>>(),
        "residuals": table.rows.iter().map(|r| r.residual).collect::<Vec<_>>(),
        "noise_floors": table.rows.iter().map(|r| r.noise_floor).collect::<Vec<_>>(),
        "ratios": table.ratios,
        "all_below_floor": table.all_below_floor(),
    })
}

/// Surrogate order measurements. Constant-Hessian two-step ladders are
/// exact (below floor); the three-step and curved-well ladders measure a
/// third-order residual, ratio about 8 per halving.
fn taylor_checks() -> Vec<CheckResult> {
    let mut checks = Vec::new();
    let small_alphas = [1e-2, 5e-3, 2.5e-3];

    let two = quad_tasks(&[[1.0, 0.0], [0.0, 1.0]]);
    let uniform2 = TaskSampler::uniform(2).expect("two tasks");
    let phi = pv(&[2.0, 2.0]);

    let table = taylor_order_check(&phi, &two, &uniform2, 2, &small_alphas)
        .expect("enumerable ladder");
    checks.push(CheckResult {
        name: "two-quadratics-two-inner-steps".into(),
        passed: table.passes(5.5, 10.5),
        tolerance: "consecutive residual ratios in [5.5, 10.5], or all residuals below the \
                    round-off floor (two-step constant-Hessian ladders are exact)"
            .into(),
        measured: table_json(&table),
    });

    let one = quad_tasks(&[[1.0, 0.0]]);
    let uniform1 = TaskSampler::uniform(1).expect("one task");
    let table = taylor_order_check(&phi, &one, &uniform1, 2, &small_alphas)
        .expect("enumerable ladder");
    checks.push(CheckResult {
        name: "single-quadratic-two-inner-steps".into(),
        passed: table.passes(5.5, 10.5),
        tolerance: "same band; the single-task ladder isolates the within-task expansion".into(),
        measured: table_json(&table),
    });

    let table = taylor_order_check(&phi, &two, &uniform2, 3, &small_alphas)
        .expect("enumerable ladder");
    checks.push(CheckResult {
        name: "two-quadratics-three-inner-steps".into(),
        passed: table.passes(5.5, 10.5) && !table.all_below_floor(),
        tolerance: "measurable residuals with consecutive ratios in [5.5, 10.5]".into(),
        measured: table_json(&table),
    });

    let wells: Vec<Box<dyn Task>> = vec![
        Box::new(mtopt::SyntheticRadialTask::new(0, pv(&[0.0, 10.0]))),
        Box::new(mtopt::SyntheticRadialTask::new(1, pv(&[0.0, 0.0]))),
    ];
    let table = taylor_order_check(&pv(&[20.0, 5.0]), &wells, &uniform2, 2, &[0.04, 0.02, 0.01])
        .expect("enumerable ladder");
    checks.push(CheckResult {
        name: "two-radial-wells-two-inner-steps".into(),
        passed: table.passes(5.5, 10.5) && !table.all_below_floor(),
        tolerance: "measurable residuals with consecutive ratios in [5.5, 10.5]; the \
                    second-order terms cancel on radial pairs, leaving a cubic remainder"
            .into(),
        measured: table_json(&table),
    });

    checks
}

/// Monte Carlo expected meta-gradient against exact enumeration.
fn oracle_checks() -> Vec<CheckResult> {
    let cases: [(&str, Vec<Box<dyn Task>>); 2] = [
        ("two-quadratics", quad_tasks(&[[1.0, 0.0], [0.0, 1.0]])),
        (
            "three-quadratics",
            quad_tasks(&[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]),
        ),
    ];
    let phi = pv(&[2.0, 2.0]);
    let cfg = RunConfig::default().with_inner_lr(0.05).with_inner_steps(5);
    let samples = 10_000;
    let mut checks = Vec::new();
    for (name, tasks) in cases {
        let sampler = TaskSampler::uniform(tasks.len()).expect("tasks present");
        let exact = expected_meta_gradient_exact(&phi, &tasks, &sampler, &cfg)
            .expect("enumerable task set");
        let mut rng = RandomSource::new(424_242);
        let mc = expected_meta_gradient_mc(&phi, &tasks, &sampler, &cfg, samples, &mut rng)
            .expect("sampling succeeds");
        let se = mc.standard_error.as_ref().expect("MC reports errors");
        let mut max_sigma: f64 = 0.0;
        let mut passed = true;
        for i in 0..phi.dim() {
            let diff = (mc.mean[i] - exact.mean[i]).abs();
            // The tiny absolute guard covers coordinates whose sampling
            // variance collapses to summation round-off.
            if diff > 4.0 * se[i] + 1e-13 {
                passed = false;
            }
            if se[i] > 0.0 {
                max_sigma = max_sigma.max(diff / se[i]);
            }
        }
        checks.push(CheckResult {
            name: format!("mc-matches-enumeration-{name}"),
            passed,
            tolerance: "per-coordinate |MC - exact| <= 4 standard errors (10000 samples)".into(),
            measured: json!({
                "exact": exact.mean.values(),
                "mc": mc.mean.values(),
                "standard_error": se.values(),
                "max_abs_z": max_sigma,
            }),
        });
    }
    checks
}

/// Central finite differences against the analytic gradients of every
/// task family, at 100 random points per family.
fn gradcheck_checks() -> Vec<CheckResult> {
    let mut checks = Vec::new();
    let mut rng = RandomSource::new(20_260_825);
    let tol = 1e-5;

    let radial: Vec<Box<dyn Task>> = vec![
        Box::new(mtopt::SyntheticRadialTask::new(0, pv(&[0.0, 10.0]))),
        Box::new(mtopt::SyntheticRadialTask::new(1, pv(&[0.0, 0.0]))),
        Box::new(mtopt::SyntheticRadialTask::new(2, pv(&[10.0, 0.0]))),
    ];
    let mut worst: f64 = 0.0;
    let mut points = 0;
    while points < 100 {
        let x = -5.0 + 30.0 * rng.u01();
        let y = -5.0 + 30.0 * rng.u01();
        let phi = pv(&[x, y]);
        // The loss has a cusp at each well center; stay off it so the
        // finite-difference stencil is valid.
        let too_close = [[0.0, 10.0], [0.0, 0.0], [10.0, 0.0]]
            .iter()
            .any(|c| ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt() < 0.05);
        if too_close {
            continue;
        }
        points += 1;
        for task in &radial {
            worst = worst.max(relative_gradient_error(task.as_ref(), &phi));
        }
    }
    checks.push(CheckResult {
        name: "gradcheck-radial-wells".into(),
        passed: worst <= tol,
        tolerance: format!("relative error <= {tol} at 100 random points"),
        measured: json!({ "max_relative_error": worst }),
    });

    let quads = quad_tasks(&[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let phi = pv(&[-3.0 + 6.0 * rng.u01(), -3.0 + 6.0 * rng.u01()]);
        for task in &quads {
            worst = worst.max(relative_gradient_error(task.as_ref(), &phi));
        }
    }
    checks.push(CheckResult {
        name: "gradcheck-quadratics".into(),
        passed: worst <= tol,
        tolerance: format!("relative error <= {tol} at 100 random points"),
        measured: json!({ "max_relative_error": worst }),
    });

    let mut data_rng = RandomSource::new(99);
    let regression: Vec<Box<dyn Task>> = vec![
        Box::new(mtopt::RegressionTask::generate(0, 64, 4, 0.1, &mut data_rng).expect("data")),
        Box::new(mtopt::RegressionTask::generate(1, 128, 4, 0.1, &mut data_rng).expect("data")),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let phi = ParamVector::new(rng.normal_vec(4)).expect("finite draws");
        for task in &regression {
            worst = worst.max(relative_gradient_error(task.as_ref(), &phi));
        }
    }
    checks.push(CheckResult {
        name: "gradcheck-regression".into(),
        passed: worst <= tol,
        tolerance: format!("relative error <= {tol} at 100 random points"),
        measured: json!({ "max_relative_error": worst }),
    });

    checks
}

fn relative_gradient_error(task: &dyn Task, phi: &ParamVector) -> f64 {
    let analytic = task.gradient(phi).expect("gradient defined off the cusp");
    let numeric = finite_difference_gradient(|p| task.loss(p), phi, 1e-6)
        .expect("loss evaluates near phi");
    let diff = numeric.sub(&analytic).expect("same dimension").norm();
    diff / analytic.norm().max(1.0)
}
