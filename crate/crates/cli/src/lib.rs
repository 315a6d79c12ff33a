//! Driver for the `lp-lab` command line tool: configuration, pipelines and
//! run bookkeeping.

pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod run;
