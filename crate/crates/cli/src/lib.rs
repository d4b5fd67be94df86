//! Command-line front end: configuration resolution, presets, artifact
//! writers, and batch sweeps over the simulator in the core crate.

pub mod config;
pub mod csv_out;
pub mod presets;
pub mod runner;
pub mod svg_out;
pub mod sweep;
