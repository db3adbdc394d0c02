//! File formats and the command-line pipeline around `pivotroute-core`.

pub mod cli;
pub mod io;

pub use pivotroute_core as core;
