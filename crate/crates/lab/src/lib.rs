//! File formats, experiment sweeps and figures for the `cellfree` core.
//!
//! Everything that touches the filesystem lives here: the binary dataset
//! format, JSON checkpoints, CSV records, SVG line charts and the sweep
//! runner behind the `cellfree` command line tool.

pub mod checkpoint;
pub mod dataset;
pub mod experiment;
pub mod records;
pub mod svg;

pub use checkpoint::Checkpoint;
pub use experiment::{run, ExperimentConfig, NetSettings, SweepVariable};
pub use records::MetricsRow;
