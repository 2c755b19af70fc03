//! End-to-end tests of the `mtopt` binary: exit codes, file contracts,
//! determinism, and plot output shapes.

use std::path::Path;
use std::process::{Command, Output};

use mtopt_cli::runner::{hash_tree, RunManifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mtopt"))
}

fn run_args(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary launches")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn presets_lists_all_builtins() {
    let out = run_args(&["presets"]);
    assert_exit(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    for name in ["synthetic3", "quad2", "quad3", "regress4"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn dumped_preset_runs_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let dump = run_args(&["presets", "--dump", "quad2"]);
    assert_exit(&dump, 0);
    let config_path = dir.path().join("quad2.toml");
    std::fs::write(&config_path, &dump.stdout).unwrap();
    let out_dir = dir.path().join("out");
    let run = run_args(&[
        "run",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&run, 0);
    assert!(out_dir.join("manifest.json").is_file());
    assert!(out_dir.join("grid.csv").is_file());
}

#[test]
fn repeated_runs_are_byte_identical_including_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let run = run_args(&["run", "quad3", "--out", out.to_str().unwrap()]);
        assert_exit(&run, 0);
    }
    assert_eq!(hash_tree(&a).unwrap(), hash_tree(&b).unwrap());
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap()
    );
}

#[test]
fn rerunning_a_manifest_reproduces_every_byte() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_exit(&run_args(&["run", "quad2", "--out", a.to_str().unwrap()]), 0);
    let b = dir.path().join("b");
    let rerun = run_args(&[
        "run",
        a.join("manifest.json").to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_exit(&rerun, 0);
    assert_eq!(hash_tree(&a).unwrap(), hash_tree(&b).unwrap());
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap()
    );
}

#[test]
fn parallel_workers_do_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    assert_exit(
        &run_args(&["run", "quad3", "--out", serial.to_str().unwrap(), "--jobs", "1"]),
        0,
    );
    assert_exit(
        &run_args(&["run", "quad3", "--out", parallel.to_str().unwrap(), "--jobs", "8"]),
        0,
    );
    assert_eq!(hash_tree(&serial).unwrap(), hash_tree(&parallel).unwrap());
}

#[test]
fn metric_schedule_yields_51_rows_for_500_steps_every_10() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_exit(
        &run_args(&[
            "run",
            "synthetic3",
            "--seed-override",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let metrics = read(&out.join("mtl/seed3/metrics.csv"));
    assert_eq!(metrics.lines().count(), 52, "header plus steps 0,10,..,500");
    assert!(metrics.lines().next().unwrap().starts_with("step,mtl_loss,task_loss_1"));
}

#[test]
fn csv_headers_match_the_published_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_exit(&run_args(&["run", "quad3", "--out", out.to_str().unwrap()]), 0);
    let trajectory = read(&out.join("seq-reptile/seed0/trajectory.csv"));
    assert_eq!(trajectory.lines().next().unwrap(), "step,phi_0,phi_1");
    let metrics = read(&out.join("seq-reptile/seed0/metrics.csv"));
    assert_eq!(
        metrics.lines().next().unwrap(),
        "step,mtl_loss,task_loss_1,task_loss_2,task_loss_3,mean_offdiag_cosine,l2_from_init"
    );
    let grid = read(&out.join("grid.csv"));
    assert_eq!(grid.lines().next().unwrap(), "x,y,mtl_loss");
}

#[test]
fn gradient_evaluation_counts_follow_the_published_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_exit(
        &run_args(&[
            "run",
            "synthetic3",
            "--seed-override",
            "0",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let seq: serde_json::Value =
        serde_json::from_str(&read(&out.join("seq-reptile/seed0/final.json"))).unwrap();
    // One gradient per inner step of the single mixed trajectory.
    assert_eq!(seq["gradient_evaluations"], 500 * 10);
    let reptile: serde_json::Value =
        serde_json::from_str(&read(&out.join("reptile/seed0/final.json"))).unwrap();
    // One inner trajectory per task per outer step.
    assert_eq!(reptile["gradient_evaluations"], 500 * 10 * 3);
}

#[test]
fn invalid_config_exits_2_with_field_messages() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(
        &config,
        "name = \"bad\"\nseeds = []\n[tasks]\nfamily = \"quadratic\"\ntargets = [[1.0, 0.0]]\n\
         [init]\nphi0 = [0.0]\n",
    )
    .unwrap();
    let out = run_args(&["run", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(stderr.contains("seeds:"), "{stderr}");
    assert!(stderr.contains("init.phi0"), "{stderr}");
}

#[test]
fn unknown_config_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("typo.toml");
    std::fs::write(
        &config,
        "name = \"typo\"\nseeds = [0]\nmetric_evry = 5\n[tasks]\nfamily = \"quadratic\"\n\
         targets = [[1.0, 0.0], [0.0, 1.0]]\n[init]\nphi0 = [2.0, 2.0]\n",
    )
    .unwrap();
    let out = run_args(&["run", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("metric_evry"));
}

#[test]
fn divergence_exits_3_and_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("diverge.toml");
    std::fs::write(
        &config,
        "name = \"diverge\"\nseeds = [0]\n[tasks]\nfamily = \"quadratic\"\n\
         targets = [[1.0, 0.0], [0.0, 1.0]]\n[init]\nphi0 = [2.0, 2.0]\n[defaults]\n\
         inner_lr = 1e8\nouter_lr = 1.0\ninner_steps = 10\nouter_steps = 50\n\
         batch_size = 16\nl2_coeff = 0.0\n[optimizers.mtl]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run_args(&["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_exit(&out, 3);
    let final_json: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("mtl/seed0/final.json"))).unwrap();
    assert_eq!(final_json["diverged"], true);
    assert!(final_json["error"].as_str().unwrap().contains("divergence"));
    let completed = final_json["completed_steps"].as_u64().unwrap();
    assert!(completed < 50, "stopped early, got {completed}");
    let trajectory = read(&out_dir.join("mtl/seed0/trajectory.csv"));
    assert_eq!(trajectory.lines().count() as u64, completed + 2, "header + snapshots");
    assert!(out_dir.join("manifest.json").is_file());
}

#[test]
fn env_var_sets_the_default_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "quad2"])
        .env("MTOPT_OUT", dir.path())
        .current_dir(dir.path())
        .output()
        .expect("binary launches");
    assert_exit(&out, 0);
    assert!(dir.path().join("quad2/manifest.json").is_file());
}

#[test]
fn verify_writes_a_machine_readable_report() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let out = run_args(&["verify", "gradcheck", "--out", report_path.to_str().unwrap()]);
    assert_exit(&out, 0);
    let report: serde_json::Value = serde_json::from_str(&read(&report_path)).unwrap();
    assert_eq!(report["suite"], "gradcheck");
    assert_eq!(report["passed"], true);
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    for check in checks {
        assert_eq!(check["passed"], true, "{check}");
        assert!(check["measured"]["max_relative_error"].as_f64().unwrap() <= 1e-5);
    }
}

#[test]
fn unknown_verify_suite_exits_2() {
    let out = run_args(&["verify", "nonsense"]);
    assert_exit(&out, 2);
}

#[test]
fn plots_have_the_contracted_shapes_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    // One outer step: the trajectory has exactly two points.
    std::fs::write(
        &config,
        "name = \"tiny\"\nseeds = [0]\n[tasks]\nfamily = \"quadratic\"\n\
         targets = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]\n[init]\nphi0 = [2.0, 2.0]\n\
         [defaults]\ninner_lr = 0.05\nouter_lr = 0.5\ninner_steps = 5\nouter_steps = 1\n\
         batch_size = 16\nl2_coeff = 0.0\n[optimizers.seq-reptile]\n[grid]\nmin_x = -3.0\n\
         max_x = 3.0\nmin_y = -3.0\nmax_y = 3.0\nnx = 41\nny = 41\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    assert_exit(
        &run_args(&["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]),
        0,
    );
    assert_exit(&run_args(&["plot", out_dir.to_str().unwrap()]), 0);

    let contour = read(&out_dir.join("plots/seq-reptile-seed0.svg"));
    assert_eq!(contour.matches("traj-marker").count(), 2);
    assert!(contour.contains("<path"), "contour levels are drawn");

    let heatmap = read(&out_dir.join("plots/seq-reptile-seed0-alignment.svg"));
    assert_eq!(heatmap.matches("heat-cell").count(), 9, "3x3 colored cells");
    assert_eq!(heatmap.matches("text-anchor=\"middle\"").count(), 9 + 3, "cell values + labels");

    let first = std::fs::read(out_dir.join("plots/seq-reptile-seed0.svg")).unwrap();
    assert_exit(&run_args(&["plot", out_dir.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read(out_dir.join("plots/seq-reptile-seed0.svg")).unwrap(), first);
}

#[test]
fn plot_without_grid_exits_2_naming_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    assert_exit(
        &run_args(&[
            "run",
            "regress4",
            "--seed-override",
            "0",
            "--out",
            out_dir.to_str().unwrap(),
        ]),
        0,
    );
    let out = run_args(&["plot", out_dir.to_str().unwrap()]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.csv"));
}

#[test]
fn seed_override_replaces_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    assert_exit(
        &run_args(&[
            "run",
            "quad2",
            "--seed-override",
            "5,9",
            "--out",
            out_dir.to_str().unwrap(),
        ]),
        0,
    );
    let manifest: RunManifest =
        serde_json::from_str(&read(&out_dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest.config.seeds, vec![5, 9]);
    assert!(out_dir.join("mtl/seed5/final.json").is_file());
    assert!(out_dir.join("mtl/seed9/final.json").is_file());
    assert!(!out_dir.join("mtl/seed0").exists());
}
