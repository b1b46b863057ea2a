//! Library surface of the CLI: the run-configuration schema, exposed so
//! tests and downstream tooling can parse and validate config files.

pub mod config;
