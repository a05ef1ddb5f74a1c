//! Filesystem, configuration, and command-line layer over `stega-core`:
//! PGM image I/O, dataset manifests and splits, run configuration,
//! the model container format, diagnostic exports, and the subcommand
//! implementations behind the `stega` binary.

pub mod commands;
pub mod config;
pub mod export;
pub mod manifest;
pub mod model_file;
pub mod pgm;
