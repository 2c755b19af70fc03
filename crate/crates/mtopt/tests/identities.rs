//! Exact reduction identities between the optimizers.
//!
//! These assert bitwise equality, not approximate agreement: the update
//! rules are written so that the degenerate corners (one task, one inner
//! step, zero learning rates, unit outer rate) collapse onto each other
//! with no floating-point slack.

use mtopt::{
    inner_loop_single_task, joint_mtl_step, pcgrad_step, sequential_reptile_meta_step, train,
    MiniBatch, OptimizerKind, ParamVector, QuadraticTask, RandomSource, RegressionTask, RunConfig,
    SyntheticRadialTask, Task, TaskSampler,
};

fn pv(values: &[f64]) -> ParamVector {
    ParamVector::new(values.to_vec()).unwrap()
}

fn bits(v: &ParamVector) -> Vec<u64> {
    v.values().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn single_task_schedule_makes_both_reptiles_identical() {
    // With one task every schedule draw lands on it, so the mixed inner
    // loop and the per-task inner loop walk the same trajectory from the
    // same batch stream.
    let mut gen_rng = RandomSource::new(7);
    let tasks: Vec<Box<dyn Task>> = vec![Box::new(
        RegressionTask::generate(0, 64, 3, 0.05, &mut gen_rng).unwrap(),
    )];
    let sampler = TaskSampler::uniform(1).unwrap();
    let cfg = RunConfig::default()
        .with_inner_lr(0.02)
        .with_outer_lr(0.7)
        .with_inner_steps(6)
        .with_outer_steps(20)
        .with_batch_size(8);
    let phi0 = pv(&[1.0, -2.0, 0.5]);

    let mut rng_a = RandomSource::new(123);
    let plain = train(
        OptimizerKind::Reptile,
        &phi0,
        &tasks,
        &sampler,
        &cfg,
        &mut rng_a,
    )
    .unwrap();
    let mut rng_b = RandomSource::new(123);
    let mixed = train(
        OptimizerKind::SequentialReptile,
        &phi0,
        &tasks,
        &sampler,
        &cfg,
        &mut rng_b,
    )
    .unwrap();

    assert_eq!(plain.snapshots.len(), mixed.snapshots.len());
    for (a, b) in plain.snapshots.iter().zip(&mixed.snapshots) {
        assert_eq!(bits(a), bits(b));
    }
    assert_eq!(plain.mtl_losses, mixed.mtl_losses);
    assert_eq!(plain.task_losses, mixed.task_losses);
    assert_eq!(plain.gradient_evaluations, mixed.gradient_evaluations);
}

#[test]
fn single_task_identity_holds_for_deterministic_tasks_too() {
    let tasks: Vec<Box<dyn Task>> =
        vec![Box::new(SyntheticRadialTask::new(0, pv(&[0.0, 10.0])))];
    let sampler = TaskSampler::uniform(1).unwrap();
    let cfg = RunConfig::default()
        .with_inner_lr(0.005)
        .with_outer_lr(0.5)
        .with_inner_steps(10)
        .with_outer_steps(30);
    let phi0 = pv(&[20.0, 5.0]);

    let mut rng_a = RandomSource::new(9);
    let plain = train(
        OptimizerKind::Reptile,
        &phi0,
        &tasks,
        &sampler,
        &cfg,
        &mut rng_a,
    )
    .unwrap();
    let mut rng_b = RandomSource::new(9);
    let mixed = train(
        OptimizerKind::SequentialReptile,
        &phi0,
        &tasks,
        &sampler,
        &cfg,
        &mut rng_b,
    )
    .unwrap();
    for (a, b) in plain.snapshots.iter().zip(&mixed.snapshots) {
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn one_inner_step_meta_gradient_is_the_scaled_gradient() {
    let task = SyntheticRadialTask::new(0, pv(&[0.0, 0.0]));
    let phi = pv(&[20.0, 5.0]);
    let cfg = RunConfig::default().with_inner_lr(0.01).with_inner_steps(1);
    let mut rng = RandomSource::new(0);
    let traj = inner_loop_single_task(&phi, &task, 0, &cfg, &mut rng).unwrap();
    let expected = task.gradient(&phi).unwrap().scale(0.01);
    assert_eq!(bits(&traj.meta_gradient().direction), bits(&expected));
}

#[test]
fn zero_inner_lr_freezes_every_optimizer() {
    let tasks: Vec<Box<dyn Task>> = vec![
        Box::new(QuadraticTask::new(0, pv(&[1.0, 0.0]))),
        Box::new(QuadraticTask::new(1, pv(&[0.0, 1.0]))),
    ];
    let sampler = TaskSampler::uniform(2).unwrap();
    let cfg = RunConfig::default()
        .with_inner_lr(0.0)
        .with_outer_lr(0.5)
        .with_inner_steps(4)
        .with_outer_steps(12);
    let phi0 = pv(&[20.0, 5.0]);
    for kind in OptimizerKind::ALL {
        let mut rng = RandomSource::new(3);
        let record = train(kind, &phi0, &tasks, &sampler, &cfg, &mut rng).unwrap();
        for snapshot in &record.snapshots {
            assert_eq!(bits(snapshot), bits(&phi0), "{kind} moved at alpha = 0");
        }
    }
}

#[test]
fn zero_outer_lr_freezes_the_meta_iterate() {
    let tasks: Vec<Box<dyn Task>> = vec![
        Box::new(QuadraticTask::new(0, pv(&[1.0, 0.0]))),
        Box::new(QuadraticTask::new(1, pv(&[0.0, 1.0]))),
    ];
    let sampler = TaskSampler::uniform(2).unwrap();
    let cfg = RunConfig::default()
        .with_inner_lr(0.05)
        .with_outer_lr(0.0)
        .with_inner_steps(4)
        .with_outer_steps(12);
    let phi0 = pv(&[3.0, -1.5]);
    for kind in [OptimizerKind::Reptile, OptimizerKind::SequentialReptile] {
        let mut rng = RandomSource::new(5);
        let record = train(kind, &phi0, &tasks, &sampler, &cfg, &mut rng).unwrap();
        for snapshot in &record.snapshots {
            assert_eq!(bits(snapshot), bits(&phi0), "{kind} moved at eta = 0");
        }
    }
}

#[test]
fn unit_outer_lr_adopts_the_inner_endpoint() {
    let tasks: Vec<Box<dyn Task>> = vec![
        Box::new(QuadraticTask::new(0, pv(&[1.0, 0.0]))),
        Box::new(QuadraticTask::new(1, pv(&[0.0, 1.0]))),
    ];
    let sampler = TaskSampler::uniform(2).unwrap();
    let cfg = RunConfig::default()
        .with_inner_lr(0.1)
        .with_outer_lr(1.0)
        .with_inner_steps(5);
    let phi = pv(&[4.0, -2.0]);
    let mut rng = RandomSource::new(11);
    let (next, traj) =
        sequential_reptile_meta_step(&phi, &tasks, &sampler, &cfg, &mut rng).unwrap();
    assert_eq!(bits(&next), bits(traj.final_params()));
}

#[test]
fn conflict_free_surgery_matches_the_joint_step() {
    // Gradients (4, 3) and (3, 3) at (5, 3) point the same way, so
    // surgery leaves them alone and the two steps coincide bit for bit.
    let tasks: Vec<Box<dyn Task>> = vec![
        Box::new(QuadraticTask::new(0, pv(&[1.0, 0.0]))),
        Box::new(QuadraticTask::new(1, pv(&[2.0, 0.0]))),
    ];
    let cfg = RunConfig::default().with_inner_lr(0.03);
    let phi = pv(&[5.0, 3.0]);
    let mut rng_a = RandomSource::new(21);
    let joint = joint_mtl_step(&phi, &tasks, &cfg, &mut rng_a).unwrap();
    let mut rng_b = RandomSource::new(21);
    let (surgical, report) = pcgrad_step(&phi, &tasks, &cfg, &mut rng_b).unwrap();
    assert!(report.events.is_empty());
    assert!(report.skipped.is_empty());
    assert_eq!(bits(&joint), bits(&surgical));
}

#[test]
fn full_batch_request_consumes_no_randomness() {
    // Deterministic tasks ignore the batch stream entirely, so two
    // different seeds produce the same trajectory.
    let task = SyntheticRadialTask::new(0, pv(&[0.0, 0.0]));
    let phi = pv(&[20.0, 5.0]);
    let cfg = RunConfig::default().with_inner_lr(0.01).with_inner_steps(8);
    let mut rng_a = RandomSource::new(1);
    let mut rng_b = RandomSource::new(2);
    let a = inner_loop_single_task(&phi, &task, 0, &cfg, &mut rng_a).unwrap();
    let b = inner_loop_single_task(&phi, &task, 0, &cfg, &mut rng_b).unwrap();
    for (x, y) in a.iterates().iter().zip(b.iterates()) {
        assert_eq!(bits(x), bits(y));
    }
    assert_eq!(a.batches()[0], MiniBatch::full(task.dataset_size()));
}
