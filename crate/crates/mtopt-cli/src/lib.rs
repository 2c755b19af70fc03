//! Experiment harness around the `mtopt` library.
//!
//! The crate drives complete optimizer-comparison experiments from TOML
//! configs or built-in presets, writes deterministic CSV/JSON outputs
//! with a checksummed manifest, renders SVG plots from those files, and
//! bundles numeric verification suites behind one binary.

pub mod config;
pub mod error;
pub mod plot;
pub mod presets;
pub mod runner;
pub mod verify;

/// Environment variable naming the default output root for runs.
pub const OUTPUT_ROOT_ENV: &str = "MTOPT_OUT";
