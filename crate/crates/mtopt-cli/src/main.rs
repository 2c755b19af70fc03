//! Command-line front end: `run`, `verify`, `plot`, and `presets`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtopt_cli::config::ExperimentConfig;
use mtopt_cli::error::{CliError, CliResult};
use mtopt_cli::{plot, presets, runner, verify, OUTPUT_ROOT_ENV};

#[derive(Parser)]
#[command(
    name = "mtopt",
    version,
    about = "Multi-task meta-optimization experiments: run, verify, plot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config, a JSON run manifest, or a
    /// built-in preset name.
    Run {
        /// Config path, manifest path, or preset name (see `presets`).
        config: String,
        /// Output directory; overrides the config and the environment.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds replacing the config's seed list.
        #[arg(long, value_delimiter = ',', value_name = "SEEDS")]
        seed_override: Option<Vec<u64>>,
        /// Maximum number of runs executed in parallel.
        #[arg(long, default_value_t = 1, value_name = "N")]
        jobs: usize,
    },
    /// Run a verification suite: taylor, oracle, gradcheck, or all.
    Verify {
        suite: String,
        /// Report file to write (default: verify-<suite>.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG plots for a finished run directory.
    Plot {
        /// Directory containing manifest.json, grid.csv, and the runs.
        run_dir: PathBuf,
    },
    /// List built-in presets, or dump one as a TOML config.
    Presets {
        /// Print the named preset's full config as TOML.
        #[arg(long, value_name = "NAME")]
        dump: Option<String>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run {
            config,
            out,
            seed_override,
            jobs,
        } => run(&config, out, seed_override, jobs),
        Command::Verify { suite, out } => {
            let report_path =
                out.unwrap_or_else(|| PathBuf::from(format!("verify-{suite}.json")));
            let report = verify::run_suite(&suite, &report_path)?;
            for check in &report.checks {
                println!(
                    "{} {}",
                    if check.passed { "pass" } else { "FAIL" },
                    check.name
                );
            }
            println!(
                "suite {}: {} ({} checks, report {})",
                report.suite,
                if report.passed { "pass" } else { "FAIL" },
                report.checks.len(),
                report_path.display()
            );
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "suite {} failed; see {}",
                    report.suite,
                    report_path.display()
                )))
            }
        }
        Command::Plot { run_dir } => {
            let written = plot::plot_run_dir(&run_dir)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            println!("{} plots", written.len());
            Ok(())
        }
        Command::Presets { dump } => match dump {
            Some(name) => {
                let cfg = presets::build(&name)?;
                print!("{}", cfg.to_toml()?);
                Ok(())
            }
            None => {
                for (name, description) in presets::PRESETS {
                    println!("{name:12} {description}");
                }
                Ok(())
            }
        },
    }
}

fn run(
    config: &str,
    out: Option<PathBuf>,
    seed_override: Option<Vec<u64>>,
    jobs: usize,
) -> CliResult<()> {
    let path = Path::new(config);
    let mut cfg = if presets::is_preset(config) && !path.exists() {
        presets::build(config)?
    } else {
        ExperimentConfig::load(path)?
    };
    if let Some(seeds) = seed_override {
        cfg.seeds = seeds;
    }
    let out_dir = out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| {
            std::env::var(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|_| PathBuf::from("runs"))
                .join(&cfg.name)
        });
    let outcome = runner::run_experiment(&cfg, &out_dir, jobs)?;
    for report in &outcome.runs {
        let cosine = report
            .mean_offdiag_cosine
            .map(|c| format!("{c:.4}"))
            .unwrap_or_else(|| "n/a".to_string());
        println!(
            "{:12} seed {:2}: {} steps, loss {:.6}, mean cosine {}, moved {:.4}{}",
            report.optimizer,
            report.seed,
            report.completed_steps,
            report.mtl_loss,
            cosine,
            report.l2_from_init,
            if report.diverged { "  [DIVERGED]" } else { "" }
        );
    }
    println!("manifest {}", outcome.out_dir.join("manifest.json").display());
    let diverged = outcome.diverged();
    if diverged > 0 {
        Err(CliError::Divergence(format!(
            "{diverged} of {} runs stopped early; partial outputs kept under {}",
            outcome.runs.len(),
            outcome.out_dir.display()
        )))
    } else {
        Ok(())
    }
}
