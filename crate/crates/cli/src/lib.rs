//! Experiment drivers for the `deeptv` command: configuration, task runners and
//! plot-data extraction.

pub mod config;
pub mod output;
pub mod tasks;

pub use config::{Overrides, Preset, RunConfig, Rung, Task};
pub use output::emit_plots;
pub use tasks::{run_task, RunReport};
