//! Persona-conditioned annotation pipelines.
//!
//! The crate is organised around a small number of stages that compose into
//! reproducible experiments:
//!
//! * [`persona`]: load, clean, sample, and template-expand persona corpora.
//! * [`datasets`]: annotation instances and gold labels, plus raw rating tables.
//! * [`prompting`]: deterministic prompt rendering and label schemas.
//! * [`backend`]: pluggable annotators (seeded simulator, HTTP endpoint).
//! * [`store`]: append-only JSONL run persistence with resume support.
//! * [`metrics`]: agreement and classification metrics.
//! * [`crowd`]: crowd assembly, aggregation, and performance trajectories.
//! * [`stats`]: the small statistical battery the experiments rely on.
//! * [`embedding`]: embedding providers, k-means, and cluster summaries.
//! * [`experiments`]: config, orchestration, and the CLI surface.
//!
//! Everything that consumes randomness takes an explicit seed and is
//! deterministic across platforms; see [`hashing`] for the stable mixer.

pub mod backend;
pub mod crowd;
pub mod datasets;
pub mod embedding;
pub mod experiments;
pub mod hashing;
pub mod metrics;
pub mod persona;
pub mod prompting;
pub mod stats;
pub mod store;
