//! Experiment runner for `taml-core`: flat key-value configs, seeded runs
//! with JSONL metrics and text checkpoints, method comparison tables,
//! adaptation curves and Omniglot-layout ingest.

pub mod checkpoint;
pub mod config;
pub mod omniglot;
pub mod records;
pub mod runner;

pub use config::{parse_config, ConfigError, ExperimentConfig, Method, ParsedConfig};
pub use runner::{compare, curve, measures, run, CurveInit, RunError, RunRecord};
