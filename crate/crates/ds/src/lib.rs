//! Command-line front end, state directory, file formats and scenario
//! runner for `ds-core`.

pub mod cli;
pub mod files;
pub mod framing;
pub mod scenario;
pub mod state;
