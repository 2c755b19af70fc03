//! Geometry of the three-well demo landscape plus derivative checks
//! across every task family.

use mtopt::{
    finite_difference_gradient, loss_grid, taylor_order_check, GridBounds, ParamVector,
    QuadraticTask, RandomSource, RegressionTask, SyntheticRadialTask, Task, TaskSampler,
};

fn pv(values: &[f64]) -> ParamVector {
    ParamVector::new(values.to_vec()).unwrap()
}

fn demo_wells() -> Vec<Box<dyn Task>> {
    vec![
        Box::new(SyntheticRadialTask::new(0, pv(&[0.0, 10.0]))),
        Box::new(SyntheticRadialTask::new(1, pv(&[0.0, 0.0]))),
        Box::new(SyntheticRadialTask::new(2, pv(&[10.0, 0.0]))),
    ]
}

const CENTERS: [[f64; 2]; 3] = [[0.0, 10.0], [0.0, 0.0], [10.0, 0.0]];

fn total_loss(tasks: &[Box<dyn Task>], phi: &ParamVector) -> f64 {
    tasks.iter().map(|t| t.loss(phi).unwrap()).sum()
}

#[test]
fn grid_reveals_exactly_three_interior_minima() {
    let tasks = demo_wells();
    let bounds = GridBounds {
        min_x: -5.0,
        max_x: 25.0,
        min_y: -5.0,
        max_y: 25.0,
    };
    // 0.2 spacing puts every well center on a node.
    let grid = loss_grid(&tasks, bounds, (151, 151)).unwrap();
    let mut minima = Vec::new();
    for iy in 1..grid.ny() - 1 {
        for ix in 1..grid.nx() - 1 {
            let v = grid.value(ix, iy);
            let mut strict = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n =
                        grid.value((ix as i64 + dx) as usize, (iy as i64 + dy) as usize);
                    if n <= v {
                        strict = false;
                    }
                }
            }
            if strict {
                minima.push((grid.x_at(ix), grid.y_at(iy)));
            }
        }
    }
    minima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(minima.len(), 3, "found {minima:?}");
    let mut expected: Vec<(f64, f64)> = CENTERS.iter().map(|c| (c[0], c[1])).collect();
    expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (found, want) in minima.iter().zip(&expected) {
        assert!((found.0 - want.0).abs() < 1e-9 && (found.1 - want.1).abs() < 1e-9);
    }
}

#[test]
fn well_centers_are_strict_minima_down_to_micro_scale() {
    // The summed landscape keeps a cone point at each center: the pull of
    // the local well beats the combined pull of the far wells in every
    // direction, so the center value is strictly below any nearby point.
    let tasks = demo_wells();
    for center in CENTERS {
        let c = pv(&center);
        let base = total_loss(&tasks, &c);
        for &radius in &[1e-6, 1e-4, 1e-2, 0.1, 1.0] {
            for k in 0..24 {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / 24.0;
                let probe = pv(&[
                    center[0] + radius * angle.cos(),
                    center[1] + radius * angle.sin(),
                ]);
                let value = total_loss(&tasks, &probe);
                assert!(
                    value > base,
                    "center {center:?} radius {radius} angle {k}: {value} <= {base}"
                );
            }
        }
    }
}

#[test]
fn well_depth_orders_the_grid_extremes() {
    let tasks = demo_wells();
    let grid = loss_grid(
        &tasks,
        GridBounds {
            min_x: -5.0,
            max_x: 25.0,
            min_y: -5.0,
            max_y: 25.0,
        },
        (151, 151),
    )
    .unwrap();
    // The deepest node sits on a center; far corners are nearly free.
    let center_value = total_loss(&tasks, &pv(&[0.0, 0.0]));
    assert!((grid.min_value() - center_value).abs() < 1e-9);
    assert!(grid.value(150, 150) > -5.0);
}

#[test]
fn gradients_match_finite_differences_across_families() {
    let mut rng = RandomSource::new(2024);
    let radial_tasks = demo_wells();
    let quad_tasks: Vec<Box<dyn Task>> = vec![
        Box::new(QuadraticTask::new(0, pv(&[1.0, 0.0]))),
        Box::new(QuadraticTask::new(1, pv(&[0.0, 1.0]))),
        Box::new(QuadraticTask::new(2, pv(&[-1.0, -1.0]))),
    ];
    let regression: Vec<Box<dyn Task>> = vec![
        Box::new(RegressionTask::generate(0, 50, 4, 0.1, &mut rng).unwrap()),
        Box::new(RegressionTask::generate(1, 30, 4, 0.0, &mut rng).unwrap()),
    ];

    let mut checked = 0usize;
    let mut check = |task: &dyn Task, phi: &ParamVector| {
        let analytic = task.gradient(phi).unwrap();
        let numeric = finite_difference_gradient(|p| task.loss(p), phi, 1e-6).unwrap();
        let err = numeric.sub(&analytic).unwrap().norm() / analytic.norm().max(1.0);
        assert!(
            err <= 1e-5,
            "task {} at {phi}: relative error {err}",
            task.id()
        );
        checked += 1;
    };

    for _ in 0..100 {
        // Radial points live in the plotting box, kept off the cusps.
        let phi = loop {
            let candidate = pv(&[
                -5.0 + 30.0 * rng.u01(),
                -5.0 + 30.0 * rng.u01(),
            ]);
            if CENTERS
                .iter()
                .all(|c| candidate.sub(&pv(c)).unwrap().norm() > 0.05)
            {
                break candidate;
            }
        };
        for task in &radial_tasks {
            check(task.as_ref(), &phi);
        }
        for task in &quad_tasks {
            check(task.as_ref(), &phi);
        }
        let phi4 = pv(&rng.normal_vec(4));
        for task in &regression {
            check(task.as_ref(), &phi4);
        }
    }
    assert_eq!(checked, 100 * 8);
}

#[test]
fn mixed_run_meta_gradient_shows_cubic_remainder_on_curved_wells() {
    // Two-step mixed runs over non-quadratic wells: the first- and
    // second-order terms of the expected update cancel against the
    // interaction-penalty gradient, leaving a remainder that shrinks by
    // about 8x per halving of the step size.
    let tasks: Vec<Box<dyn Task>> = vec![
        Box::new(SyntheticRadialTask::new(0, pv(&[0.0, 10.0]))),
        Box::new(SyntheticRadialTask::new(1, pv(&[0.0, 0.0]))),
    ];
    let sampler = TaskSampler::uniform(2).unwrap();
    let phi = pv(&[20.0, 5.0]);
    let table =
        taylor_order_check(&phi, &tasks, &sampler, 2, &[0.04, 0.02, 0.01]).unwrap();
    for row in &table.rows {
        eprintln!(
            "alpha {:>6}: residual {:.6e} (floor {:.1e})",
            row.alpha, row.residual, row.noise_floor
        );
        assert!(row.is_measurable(), "residual fell below the noise floor");
    }
    for ratio in &table.ratios {
        eprintln!("ratio {:?}", ratio);
    }
    assert!(
        table.ratios_within(5.5, 10.5),
        "ratios {:?} outside the cubic band",
        table.ratios
    );
}
