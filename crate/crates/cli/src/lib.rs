//! Command-line harness for PIDAL deconvolution: synthetic observation
//! generation, single restoration runs, and full benchmark replication.

pub mod bench;
pub mod commands;
pub mod io;
pub mod runspec;
