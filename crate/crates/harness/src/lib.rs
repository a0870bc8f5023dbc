//! Experiment pipeline behind the `autolfd` command line tool.

pub mod commands;
pub mod config;
pub mod report;
pub mod scenario;
pub mod svg;
