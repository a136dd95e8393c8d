//! Configuration, task orchestration and reporting for the `multidiv` binary.

pub mod config;
pub mod model;
pub mod run;

pub use config::Config;
pub use model::{ConfigError, Model};
pub use run::{load, run, Overrides, RunReport};
