//! Experiment orchestration: configuration, run campaigns, the two study
//! analysis batteries, CSV artifacts, and the command-line interface.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod data;
pub mod report;
pub mod runs;
pub mod study1;
pub mod study2;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{load_config, ExperimentConfig};

/// Top-level command failure, split by exit code: validation problems
/// (bad config, bad input data, drifted stores) exit 1, backend and I/O
/// failures exit 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<crate::persona::PersonaError> for CliError {
    fn from(e: crate::persona::PersonaError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<crate::datasets::DatasetError> for CliError {
    fn from(e: crate::datasets::DatasetError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<crate::prompting::PromptError> for CliError {
    fn from(e: crate::prompting::PromptError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<crate::store::StoreError> for CliError {
    fn from(e: crate::store::StoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::backend::BackendError> for CliError {
    fn from(e: crate::backend::BackendError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::embedding::EmbeddingError> for CliError {
    fn from(e: crate::embedding::EmbeddingError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::stats::StatsError> for CliError {
    fn from(e: crate::stats::StatsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::crowd::CrowdError> for CliError {
    fn from(e: crate::crowd::CrowdError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::metrics::MetricsError> for CliError {
    fn from(e: crate::metrics::MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Where everything under `out_dir` lives.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(config: &ExperimentConfig) -> OutputLayout {
        OutputLayout { root: config.experiment.out_dir.clone() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_store(&self, campaign: &str) -> PathBuf {
        self.runs_dir().join(format!("{campaign}.jsonl"))
    }

    pub fn run_manifest(&self, campaign: &str) -> PathBuf {
        self.runs_dir().join(format!("{campaign}.manifest.json"))
    }

    pub fn study1_dir(&self) -> PathBuf {
        self.root.join("study1")
    }

    pub fn study2_dir(&self) -> PathBuf {
        self.root.join("study2")
    }

    pub fn personas_dir(&self) -> PathBuf {
        self.root.join("personas")
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join("report.md")
    }

    pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(path)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
    }
}
