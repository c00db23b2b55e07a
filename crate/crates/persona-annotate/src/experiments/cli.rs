//! Argument parsing and command dispatch. Every command resolves one config,
//! applies the global overrides, and returns a short human-readable summary
//! for stdout; errors carry their exit code.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::config::load_config;
use super::{data, report, runs, study1, study2, CliError, ExperimentConfig, OutputLayout};
use crate::backend::BackendKind;
use crate::persona::{filter_non_english, sample_personas, save_personas, StopwordDetector};

#[derive(Debug, Parser)]
#[command(
    name = "persona-annotate",
    version,
    about = "Persona-prompted annotation campaigns and their analyses"
)]
pub struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true, default_value = "config.toml")]
    pub config: PathBuf,
    /// Override the configured annotation backend.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendChoice>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Simulator,
    Http,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Persona corpus maintenance.
    Personas {
        #[command(subcommand)]
        action: PersonasAction,
    },
    /// Run whatever annotation calls the configured campaigns still need.
    Annotate {
        /// Continue into existing non-empty run stores instead of refusing.
        #[arg(long)]
        resume: bool,
        /// Which campaigns to run.
        #[arg(long, value_enum, default_value = "all")]
        campaign: CampaignChoice,
    },
    /// Diversity, stability, and crowd analyses over binary annotations.
    Study1 {
        #[command(subcommand)]
        analysis: Study1Analysis,
    },
    /// Embedding, clustering, correlation, and marker analyses.
    Study2 {
        #[command(subcommand)]
        analysis: Study2Analysis,
    },
    /// Render a markdown report from existing analysis outputs.
    Report,
}

#[derive(Debug, Subcommand)]
pub enum PersonasAction {
    /// Drop confidently non-English personas and write the cleaned corpus.
    Clean {
        /// Corpus to clean; defaults to the configured corpus.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Cleaned corpus destination (JSONL).
        #[arg(long)]
        output: PathBuf,
    },
    /// Draw the seeded study sample and write it.
    Sample {
        /// Sample size; defaults to the configured study size.
        #[arg(long)]
        n: Option<usize>,
        /// Sample destination (JSONL).
        #[arg(long)]
        output: PathBuf,
    },
    /// Expand identity-marker templates into persona variants.
    Variants {
        /// Variant destination (JSONL).
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CampaignChoice {
    /// Every campaign below.
    All,
    /// Persona, baseline, and stability binary-annotation campaigns.
    Study1,
    /// The likert rating campaign behind the embedding analyses.
    Study2,
    /// The marker-variant likert campaign.
    Markers,
}

#[derive(Debug, Subcommand)]
pub enum Study1Analysis {
    /// Compare macro-F1 spread between persona and baseline runs.
    Diversity,
    /// Re-run selected personas and rank-correlate against their first run.
    Stability,
    /// Grow majority-vote crowds and track their trajectories.
    Crowds,
}

#[derive(Debug, Subcommand)]
pub enum Study2Analysis {
    /// Write description-space and rating-space vectors.
    Embed,
    /// Cluster both spaces and cross-measure the clusters.
    Cluster,
    /// Per-persona rank correlation between the two spaces.
    Correlate,
    /// Identity-marker injection shifts with significance tests.
    Markers,
    /// Largest per-instance rating gaps between marked groups.
    Difftable,
}

/// Load the config named on the command line and fold in the global
/// overrides, re-validating afterwards since an override can invalidate an
/// otherwise good file.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = load_config(&cli.config)?;
    if let Some(choice) = cli.backend {
        config.backend.kind = match choice {
            BackendChoice::Simulator => BackendKind::Simulator,
            BackendChoice::Http => BackendKind::Http,
        };
    }
    if let Some(out_dir) = &cli.out_dir {
        config.experiment.out_dir = out_dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn cmd_personas(config: &ExperimentConfig, action: &PersonasAction) -> Result<String, CliError> {
    match action {
        PersonasAction::Clean { input, output } => {
            let corpus = match input {
                Some(path) => {
                    crate::persona::load_personas(path, config.data.persona_format)
                        .map_err(CliError::from)?
                }
                None => data::load_corpus(config)?,
            };
            let (retained, stats) = filter_non_english(
                &corpus,
                &StopwordDetector,
                config.data.language_certainty_floor,
            );
            save_personas(output, &retained)?;
            Ok(format!(
                "personas clean: kept {} of {} ({} removed as non-English, {} detector warnings) \
                 -> {}",
                stats.retained_after_language_filter,
                stats.total,
                stats.removed_ids.len(),
                stats.warnings.len(),
                output.display()
            ))
        }
        PersonasAction::Sample { n, output } => {
            let corpus = data::load_corpus(config)?;
            let n = n.unwrap_or(config.study1.n_personas);
            let sampled = sample_personas(&corpus, n, config.seeds.sampling)?;
            save_personas(output, &sampled)?;
            Ok(format!(
                "personas sample: {} of {} (seed {}) -> {}",
                sampled.len(),
                corpus.len(),
                config.seeds.sampling,
                output.display()
            ))
        }
        PersonasAction::Variants { output } => {
            let sets = data::variant_sets(config)?;
            let personas: Vec<crate::persona::Persona> = sets
                .iter()
                .flat_map(|s| {
                    [s.neutral.clone(), s.black.clone(), s.conservative.clone()]
                })
                .collect();
            save_personas(output, &personas)?;
            Ok(format!(
                "personas variants: {} templates -> {} variants -> {}",
                sets.len(),
                personas.len(),
                output.display()
            ))
        }
    }
}

fn cmd_annotate(
    config: &ExperimentConfig,
    resume: bool,
    choice: CampaignChoice,
) -> Result<String, CliError> {
    let mut campaigns = Vec::new();
    let study1_selected = matches!(choice, CampaignChoice::All | CampaignChoice::Study1);
    if study1_selected {
        let sampled = data::sampled_personas(config)?;
        let single = data::load_single(config)?;
        campaigns.push(runs::diversity_persona_campaign(&sampled, &single));
        campaigns.push(runs::baseline_campaign(config.study1.n_baseline_runs, &single));
    }
    if matches!(choice, CampaignChoice::All | CampaignChoice::Study2) {
        let sampled = data::sampled_personas(config)?;
        let multi = data::load_multi(config)?;
        campaigns.push(runs::likert_campaign(&sampled, &multi));
    }
    if matches!(choice, CampaignChoice::All | CampaignChoice::Markers) {
        let sets = data::variant_sets(config)?;
        let single = data::load_single(config)?;
        let markers = data::marker_instances(&single);
        campaigns.push(runs::marker_campaign(&sets, &markers));
    }

    let layout = OutputLayout::new(config);
    if !resume {
        for campaign in &campaigns {
            let path = layout.run_store(&campaign.name);
            if path.metadata().map(|m| m.len() > 0).unwrap_or(false) {
                return Err(CliError::Validation(format!(
                    "run store {} is not empty; pass --resume to continue into it",
                    path.display()
                )));
            }
        }
    }

    let mut lines = Vec::new();
    for campaign in &campaigns {
        let world = annotate_world(config, campaign)?;
        let backend = data::build_backend(config, world)?;
        let outcome = runs::ensure_runs(config, campaign, backend.as_ref())?;
        lines.push(study1::describe_outcome(campaign, &outcome));
    }

    // The stability campaign's persona selection needs the scored persona
    // arm, so it can only run once that campaign is complete.
    if study1_selected {
        let sampled = data::sampled_personas(config)?;
        let single = data::load_single(config)?;
        let persona_campaign = runs::diversity_persona_campaign(&sampled, &single);
        let store = crate::store::RunStore::open(&layout.run_store(&persona_campaign.name))?;
        let scores = study1::run_scores(&store, &persona_campaign.run_ids(), &single)?;
        let members = study1::select_strata(&scores, config.study1.stability_strata_size)?;
        let by_id: std::collections::HashMap<&str, &crate::persona::Persona> =
            sampled.iter().map(|p| (p.id.as_str(), p)).collect();
        let selected: Vec<crate::persona::Persona> = members
            .iter()
            .map(|m| (*by_id.get(m.persona_id.as_str()).expect("selected from sampled")).clone())
            .collect();
        let campaign =
            runs::stability_campaign(&selected, config.study1.stability_repeats, &single);
        let world = data::build_world(&selected, Some(&single), None);
        let backend = data::build_backend(config, world)?;
        let outcome = runs::ensure_runs(config, &campaign, backend.as_ref())?;
        lines.push(study1::describe_outcome(&campaign, &outcome));
    }
    Ok(lines.join("\n"))
}

/// Simulator world for one campaign: its personas plus the dataset its
/// instances come from.
fn annotate_world(
    config: &ExperimentConfig,
    campaign: &runs::Campaign,
) -> Result<crate::backend::SimulatorWorld, CliError> {
    let personas: Vec<crate::persona::Persona> =
        campaign.runs.iter().filter_map(|(_, p)| p.clone()).collect();
    match campaign.name.as_str() {
        "s2_likert" => {
            let multi = data::load_multi(config)?;
            Ok(data::build_world(&personas, None, Some(&multi)))
        }
        "markers" => {
            let single = data::load_single(config)?;
            let markers = data::marker_instances(&single);
            Ok(data::build_world(&personas, Some(&markers), None))
        }
        _ => {
            let single = data::load_single(config)?;
            Ok(data::build_world(&personas, Some(&single), None))
        }
    }
}

/// Dispatch a parsed command line. Returns the summary text for stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let config = effective_config(cli)?;
    match &cli.command {
        Command::Personas { action } => cmd_personas(&config, action),
        Command::Annotate { resume, campaign } => cmd_annotate(&config, *resume, *campaign),
        Command::Study1 { analysis } => match analysis {
            Study1Analysis::Diversity => study1::cmd_diversity(&config),
            Study1Analysis::Stability => study1::cmd_stability(&config),
            Study1Analysis::Crowds => study1::cmd_crowds(&config),
        },
        Command::Study2 { analysis } => match analysis {
            Study2Analysis::Embed => study2::cmd_embed(&config),
            Study2Analysis::Cluster => study2::cmd_cluster(&config),
            Study2Analysis::Correlate => study2::cmd_correlate(&config),
            Study2Analysis::Markers => study2::cmd_markers(&config),
            Study2Analysis::Difftable => study2::cmd_difftable(&config),
        },
        Command::Report => report::cmd_report(&config),
    }
}
