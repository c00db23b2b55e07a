//! One TOML file drives every subcommand. Each section maps to the module
//! it configures; all fields have defaults, so a minimal config only names
//! the data files it wants to use.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendConfig, BackendKind, SimulatorParams};
use crate::crowd::TieRule;
use crate::persona::CorpusFormat;
use crate::stats::StatConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub backend: BackendConfig,
    pub simulator: SimulatorParams,
    pub data: DataSection,
    pub seeds: SeedsSection,
    pub study1: Study1Section,
    pub study2: Study2Section,
    pub stats: StatConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// Root for everything the pipeline writes: run stores, CSVs, summaries.
    pub out_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { name: "experiment".into(), out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Persona corpus; one persona per line.
    pub personas: PathBuf,
    pub persona_format: CorpusFormat,
    /// Placeholder-bearing templates for marker-injection variants.
    pub templates: PathBuf,
    /// Binary-labeled instances (gold = human majority).
    pub single_label: PathBuf,
    /// Long-format CSV of per-annotator Likert ratings.
    pub multi_label: PathBuf,
    /// Below this reported certainty, a non-English verdict is not trusted
    /// and the persona is kept.
    pub language_certainty_floor: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            personas: PathBuf::from("personas.jsonl"),
            persona_format: CorpusFormat::Jsonl,
            templates: PathBuf::from("templates.jsonl"),
            single_label: PathBuf::from("single_label.jsonl"),
            multi_label: PathBuf::from("multi_label.csv"),
            language_certainty_floor: 0.5,
        }
    }
}

/// Every stochastic step draws from its own named seed so that stages can
/// be varied independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsSection {
    /// Persona corpus subsampling.
    pub sampling: u64,
    /// Crowd partitioning.
    pub partition: u64,
    /// Crowd order permutations.
    pub permutation: u64,
    /// Simulator noise streams (one lineage per run id).
    pub simulator: u64,
    /// k-means initialization.
    pub clustering: u64,
}

impl Default for SeedsSection {
    fn default() -> Self {
        SeedsSection { sampling: 11, partition: 13, permutation: 17, simulator: 19, clustering: 29 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study1Section {
    /// Personas sampled from the corpus for the diversity arm.
    pub n_personas: usize,
    /// Persona-free runs in the baseline arm.
    pub n_baseline_runs: usize,
    /// Stratum size s: lowest s, median s, highest s personas by macro-F1.
    pub stability_strata_size: usize,
    /// Re-annotation repeats per selected persona.
    pub stability_repeats: usize,
    pub num_crowds: usize,
    pub crowd_size: usize,
    /// Orderings of the designated crowd in the permutation study.
    pub n_permutations: usize,
    pub tie_rule: TieRule,
}

impl Default for Study1Section {
    fn default() -> Self {
        Study1Section {
            n_personas: 1000,
            n_baseline_runs: 1000,
            stability_strata_size: 30,
            stability_repeats: 30,
            num_crowds: 10,
            crowd_size: 100,
            n_permutations: 1000,
            tie_rule: TieRule::Positive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProviderKind {
    /// Built-in deterministic feature-hashing embedder; fully offline.
    Hash,
    /// Remote embedding service.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study2Section {
    /// Leader-clustering similarity threshold over the persona space.
    pub cluster_threshold: f64,
    /// Clusters smaller than this dissolve into `unassigned`.
    pub cluster_min_size: usize,
    /// k for label-space k-means.
    pub label_kmeans_k: usize,
    pub kmeans_max_iters: usize,
    /// Rows kept per subset in the per-instance difference table.
    pub top_k_diff: usize,
    pub embedding_provider: EmbeddingProviderKind,
    pub embedding_dim: usize,
    pub embedding_url: Option<String>,
    pub embedding_timeout_secs: u64,
}

impl Default for Study2Section {
    fn default() -> Self {
        Study2Section {
            cluster_threshold: 0.6,
            cluster_min_size: 25,
            label_kmeans_k: 11,
            kmeans_max_iters: 100,
            top_k_diff: 3,
            embedding_provider: EmbeddingProviderKind::Hash,
            embedding_dim: crate::embedding::DEFAULT_EMBEDDING_DIM,
            embedding_url: None,
            embedding_timeout_secs: 30,
        }
    }
}

/// Parse and validate a config from TOML text. `origin` names the source in
/// error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&str, usize); 9] = [
            ("study1.n_personas", self.study1.n_personas),
            ("study1.n_baseline_runs", self.study1.n_baseline_runs),
            ("study1.stability_strata_size", self.study1.stability_strata_size),
            ("study1.stability_repeats", self.study1.stability_repeats),
            ("study1.num_crowds", self.study1.num_crowds),
            ("study1.crowd_size", self.study1.crowd_size),
            ("study2.cluster_min_size", self.study2.cluster_min_size),
            ("study2.label_kmeans_k", self.study2.label_kmeans_k),
            ("study2.embedding_dim", self.study2.embedding_dim),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if !(self.study2.cluster_threshold > 0.0 && self.study2.cluster_threshold < 1.0) {
            return Err(ConfigError::Invalid(
                "study2.cluster_threshold must be in (0,1)".into(),
            ));
        }
        for (name, alpha) in [
            ("stats.alpha_variance", self.stats.alpha_variance),
            ("stats.alpha_shift", self.stats.alpha_shift),
        ] {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(ConfigError::Invalid(format!("{name} must be in (0,1)")));
            }
        }
        if self.study2.embedding_provider == EmbeddingProviderKind::Http
            && self.study2.embedding_url.is_none()
        {
            return Err(ConfigError::Invalid(
                "study2.embedding_url is required when embedding_provider = \"http\"".into(),
            ));
        }
        self.backend.validate().map_err(ConfigError::Invalid)?;
        self.simulator.validate().map_err(ConfigError::Invalid)?;
        if self.backend.kind == BackendKind::Http && self.backend.endpoint_url.is_none() {
            return Err(ConfigError::Invalid(
                "backend.endpoint_url is required when backend.kind = \"http\"".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SubsetTag;

    #[test]
    fn defaults_match_documented_values() {
        let config = ExperimentConfig::default();
        assert_eq!(config.study1.n_personas, 1000);
        assert_eq!(config.study1.n_baseline_runs, 1000);
        assert_eq!(config.study1.stability_strata_size, 30);
        assert_eq!(config.study1.stability_repeats, 30);
        assert_eq!(config.study1.num_crowds, 10);
        assert_eq!(config.study1.crowd_size, 100);
        assert_eq!(config.study1.n_permutations, 1000);
        assert_eq!(config.study2.cluster_threshold, 0.6);
        assert_eq!(config.study2.cluster_min_size, 25);
        assert_eq!(config.study2.label_kmeans_k, 11);
        assert_eq!(config.study2.top_k_diff, 3);
        assert_eq!(config.study2.embedding_dim, 384);
        assert_eq!(config.stats.alpha_variance, 0.001);
        assert_eq!(config.stats.alpha_shift, 0.05);
        assert_eq!(config.stats.wilcoxon_exact_threshold, 8);
        assert_eq!(config.backend.temperature, 1.0);
        assert_eq!(config.backend.max_retries, 3);
        config.validate().unwrap();
    }

    #[test]
    fn minimal_toml_parses_with_defaults() {
        let config: ExperimentConfig = toml::from_str(
            r#"
            [experiment]
            name = "desk"
            out_dir = "/tmp/desk"

            [data]
            personas = "p.jsonl"
            "#,
        )
        .unwrap();
        assert_eq!(config.experiment.name, "desk");
        assert_eq!(config.data.personas, PathBuf::from("p.jsonl"));
        assert_eq!(config.data.persona_format, CorpusFormat::Jsonl);
        assert_eq!(config.study1.n_personas, 1000);
    }

    #[test]
    fn full_toml_round_trips_group_effects_and_tie_rule() {
        let config: ExperimentConfig = toml::from_str(
            r#"
            [backend]
            kind = "simulator"
            model_name = "sim"

            [simulator]
            persona_bias_scale = 0.8
            noise_scale = 0.2
            base_source = { kind = "constant", value = 3.0 }

            [simulator.group_effects.black]
            aae = -1.0

            [study1]
            tie_rule = { mode = "seeded_random", seed = 7 }
            "#,
        )
        .unwrap();
        assert_eq!(config.simulator.group_effects["black"][&SubsetTag::Aae], -1.0);
        assert_eq!(config.study1.tie_rule, TieRule::SeededRandom { seed: 7 });
        assert_eq!(config.simulator.persona_bias_scale, 0.8);
        let text = toml::to_string(&config).unwrap();
        let reparsed: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(reparsed, config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ExperimentConfig>("[study1]\nn_personaz = 5\n").unwrap_err();
        assert!(err.to_string().contains("n_personaz"));
    }

    #[test]
    fn validation_catches_zero_counts_and_bad_thresholds() {
        let mut config = ExperimentConfig::default();
        config.study1.n_personas = 0;
        assert!(matches!(config.validate(), Err(ConfigError::Invalid(m)) if m.contains("n_personas")));
        let mut config = ExperimentConfig::default();
        config.study2.cluster_threshold = 1.0;
        assert!(config.validate().is_err());
        let mut config = ExperimentConfig::default();
        config.study2.embedding_provider = EmbeddingProviderKind::Http;
        assert!(config.validate().is_err());
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = load_config(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cfg.toml"));
    }
}
