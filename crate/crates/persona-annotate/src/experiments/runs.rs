//! Run campaigns: the cartesian products of runs and instances each study
//! needs, executed against a backend into resumable append-only stores.
//!
//! A campaign is fully described by its manifest; `ensure_runs` only sends
//! requests for pairs the store does not hold yet, so an interrupted
//! campaign picks up where it stopped. Stored records are checked against
//! freshly rendered prompts so silent input drift cannot poison a resume.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SeedsSection};
use super::{CliError, OutputLayout};
use crate::backend::{run_batch, AnnotationRequest, Annotator, BackendKind, SimulatorParams};
use crate::datasets::Instance;
use crate::embedding::LikertTable;
use crate::hashing::mix_seed;
use crate::persona::{Persona, PersonaVariantSet};
use crate::prompting::{render, RenderedPrompt, TemplateId};
use crate::store::{RunManifest, RunRecord, RunStore};

/// Work that fits in memory comfortably while still flushing often enough
/// that an interrupt loses little.
const BATCH_SIZE: usize = 512;

#[derive(Debug, Clone)]
pub struct Campaign {
    /// Store file stem; stable across resumes.
    pub name: String,
    pub template: TemplateId,
    /// (run id, persona behind it). Baseline runs carry no persona.
    pub runs: Vec<(String, Option<Persona>)>,
    /// Annotated instances, order fixed and recorded.
    pub instances: Vec<Instance>,
}

/// The slice of config that determines run content. Changing any of this
/// invalidates an existing store; analysis-only settings do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProvenanceSnapshot {
    campaign: String,
    template: String,
    backend_kind: BackendKind,
    model: String,
    seeds: SeedsSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulator: Option<SimulatorParams>,
    n_runs: usize,
    n_instances: usize,
}

fn snapshot(config: &ExperimentConfig, campaign: &Campaign) -> String {
    let snap = ProvenanceSnapshot {
        campaign: campaign.name.clone(),
        template: campaign.template.to_string(),
        backend_kind: config.backend.kind,
        model: config.backend.model_name.clone(),
        seeds: config.seeds,
        simulator: match config.backend.kind {
            BackendKind::Simulator => Some(config.simulator.clone()),
            BackendKind::Http => None,
        },
        n_runs: campaign.runs.len(),
        n_instances: campaign.instances.len(),
    };
    serde_json::to_string(&snap).expect("snapshot serialization cannot fail")
}

impl Campaign {
    pub fn manifest(&self, config: &ExperimentConfig) -> RunManifest {
        RunManifest {
            experiment: config.experiment.name.clone(),
            config_snapshot: snapshot(config, self),
            run_ids: self.runs.iter().map(|(id, _)| id.clone()).collect(),
            instance_ids: self.instances.iter().map(|i| i.instance_id.clone()).collect(),
        }
    }

    pub fn run_ids(&self) -> Vec<String> {
        self.runs.iter().map(|(id, _)| id.clone()).collect()
    }
}

/// Renders each distinct (persona, instance) prompt once; baseline
/// campaigns share one prompt per instance across all runs.
struct PromptCache<'a> {
    template: TemplateId,
    rendered: HashMap<(String, String), RenderedPrompt>,
    instances: HashMap<&'a str, &'a Instance>,
}

impl<'a> PromptCache<'a> {
    fn new(campaign: &'a Campaign) -> PromptCache<'a> {
        PromptCache {
            template: campaign.template,
            rendered: HashMap::new(),
            instances: campaign
                .instances
                .iter()
                .map(|i| (i.instance_id.as_str(), i))
                .collect(),
        }
    }

    fn prompt(
        &mut self,
        persona: Option<&Persona>,
        instance_id: &str,
    ) -> Result<&RenderedPrompt, CliError> {
        let persona_key = persona.map(|p| p.id.clone()).unwrap_or_default();
        let key = (persona_key, instance_id.to_string());
        if !self.rendered.contains_key(&key) {
            let instance = self.instances.get(instance_id).ok_or_else(|| {
                CliError::Validation(format!("instance {instance_id} not in campaign"))
            })?;
            let rendered = render(self.template, persona, instance)?;
            self.rendered.insert(key.clone(), rendered);
        }
        Ok(&self.rendered[&key])
    }
}

#[derive(Debug)]
pub struct EnsureOutcome {
    pub store: RunStore,
    /// (run, instance) pairs absent before this invocation.
    pub missing_before: usize,
    pub appended: usize,
}

/// Bring a campaign's store to completeness against the backend. Safe to
/// call repeatedly; a complete store is a no-op.
pub fn ensure_runs(
    config: &ExperimentConfig,
    campaign: &Campaign,
    backend: &dyn Annotator,
) -> Result<EnsureOutcome, CliError> {
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.runs_dir())?;
    let manifest = campaign.manifest(config);
    let manifest_path = layout.run_manifest(&campaign.name);
    if manifest_path.exists() {
        let on_disk = RunManifest::load(&manifest_path)?;
        if on_disk.run_ids != manifest.run_ids || on_disk.instance_ids != manifest.instance_ids {
            return Err(CliError::Validation(format!(
                "campaign {} was planned with a different run or instance set; \
                 use a fresh out_dir or remove {}",
                campaign.name,
                layout.runs_dir().display()
            )));
        }
        if on_disk.config_snapshot != manifest.config_snapshot {
            return Err(CliError::Validation(format!(
                "campaign {} was built under a different backend/seed config; \
                 use a fresh out_dir or restore the original config",
                campaign.name
            )));
        }
    } else {
        manifest.save(&manifest_path)?;
    }

    let mut store = RunStore::open(&layout.run_store(&campaign.name))?;
    let personas_by_run: HashMap<&str, Option<&Persona>> = campaign
        .runs
        .iter()
        .map(|(id, p)| (id.as_str(), p.as_ref()))
        .collect();
    let mut cache = PromptCache::new(campaign);

    // Drift check: every record already on disk must match the prompt we
    // would send today for its key.
    for record in store.records() {
        let Some(persona) = personas_by_run.get(record.run_id.as_str()) else {
            return Err(CliError::Validation(format!(
                "store for campaign {} holds unexpected run id {}",
                campaign.name, record.run_id
            )));
        };
        let expected_hash = cache.prompt(*persona, &record.instance_id)?.fingerprint();
        if record.prompt_hash != expected_hash {
            return Err(CliError::Validation(format!(
                "prompt drift in campaign {}: record ({}, {}) was produced from a \
                 different prompt; personas, datasets, or templates changed since \
                 the store was created",
                campaign.name, record.run_id, record.instance_id
            )));
        }
    }

    let missing = store.missing(&manifest);
    let missing_before = missing.len();
    let mut appended = 0usize;
    for chunk in missing.chunks(BATCH_SIZE) {
        let mut requests = Vec::with_capacity(chunk.len());
        for (run_id, instance_id) in chunk {
            let persona = personas_by_run
                .get(run_id.as_str())
                .copied()
                .flatten();
            let prompt = cache.prompt(persona, instance_id)?.clone();
            requests.push(AnnotationRequest {
                prompt,
                run_id: run_id.clone(),
                sampling_seed: Some(mix_seed(config.seeds.simulator, &["run", run_id])),
            });
        }
        let results = run_batch(backend, &requests, config.backend.max_parallel);
        for result in results {
            let result = result?;
            store.append(RunRecord {
                run_id: result.run_id,
                model: config.backend.model_name.clone(),
                persona_id: result.persona_id,
                template: campaign.template,
                instance_id: result.instance_id,
                raw: result.raw_response,
                label: result.label,
                prompt_hash: result.prompt_hash,
            })?;
            appended += 1;
        }
    }
    Ok(EnsureOutcome { store, missing_before, appended })
}

/// Likert ratings per persona from a store, restricted to the given runs.
/// Run ids map to the persona that produced them via the record itself.
pub fn likert_table(store: &RunStore, run_ids: &[String]) -> Result<LikertTable, CliError> {
    let wanted: std::collections::HashSet<&str> = run_ids.iter().map(String::as_str).collect();
    let mut table = LikertTable::new();
    for record in store.records() {
        if !wanted.contains(record.run_id.as_str()) {
            continue;
        }
        let persona_id = record.persona_id.as_deref().ok_or_else(|| {
            CliError::Runtime(format!("run {} has no persona for likert analysis", record.run_id))
        })?;
        let rating = record.likert_label().ok_or_else(|| {
            CliError::Runtime(format!(
                "run {} instance {} label {:?} is not a likert rating",
                record.run_id, record.instance_id, record.label
            ))
        })?;
        table.insert(persona_id, &record.instance_id, rating);
    }
    Ok(table)
}

// Campaign constructors. Run-id prefixes keep stores self-describing:
// s1p = study-1 persona runs, s1b = study-1 baseline, st = stability
// repeats, s2 = study-2 likert runs, mk = marker-variant runs.

pub fn diversity_persona_campaign(
    sampled: &[Persona],
    single: &crate::datasets::SingleLabelDataset,
) -> Campaign {
    Campaign {
        name: "s1_personas".into(),
        template: TemplateId::T1,
        runs: sampled
            .iter()
            .map(|p| (format!("s1p:{}", p.id), Some(p.clone())))
            .collect(),
        instances: single.instances.iter().map(|(i, _)| i.clone()).collect(),
    }
}

pub fn baseline_campaign(
    n_baseline_runs: usize,
    single: &crate::datasets::SingleLabelDataset,
) -> Campaign {
    Campaign {
        name: "s1_baseline".into(),
        template: TemplateId::T2,
        runs: (0..n_baseline_runs).map(|i| (format!("s1b:{i}"), None)).collect(),
        instances: single.instances.iter().map(|(i, _)| i.clone()).collect(),
    }
}

pub fn stability_campaign(
    selected: &[Persona],
    repeats: usize,
    single: &crate::datasets::SingleLabelDataset,
) -> Campaign {
    Campaign {
        name: "s1_stability".into(),
        template: TemplateId::T1,
        runs: selected
            .iter()
            .flat_map(|p| {
                (0..repeats).map(move |rep| (format!("st:{}:{rep}", p.id), Some(p.clone())))
            })
            .collect(),
        instances: single.instances.iter().map(|(i, _)| i.clone()).collect(),
    }
}

pub fn likert_campaign(
    sampled: &[Persona],
    multi: &crate::datasets::MultiLabelDataset,
) -> Campaign {
    Campaign {
        name: "s2_likert".into(),
        template: TemplateId::T3,
        runs: sampled
            .iter()
            .map(|p| (format!("s2:{}", p.id), Some(p.clone())))
            .collect(),
        instances: multi.instances.clone(),
    }
}

pub fn marker_campaign(
    variant_sets: &[PersonaVariantSet],
    marker_instances: &crate::datasets::SingleLabelDataset,
) -> Campaign {
    let mut runs = Vec::with_capacity(variant_sets.len() * 3);
    for set in variant_sets {
        for persona in [&set.neutral, &set.black, &set.conservative] {
            runs.push((format!("mk:{}", persona.id), Some(persona.clone())));
        }
    }
    Campaign {
        name: "markers".into(),
        template: TemplateId::T3,
        runs,
        instances: marker_instances.instances.iter().map(|(i, _)| i.clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BaseSource, SimulatorBackend, SimulatorWorld};
    use crate::datasets::{BinaryLabel, SingleLabelDataset};
    use std::collections::BTreeSet;

    fn tiny_config(dir: &std::path::Path) -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.experiment.out_dir = dir.to_path_buf();
        config.backend.model_name = "sim-test".into();
        config.simulator.base_source = BaseSource::HumanMean;
        config
    }

    fn tiny_single(n: usize) -> SingleLabelDataset {
        SingleLabelDataset {
            instances: (0..n)
                .map(|i| {
                    (
                        Instance {
                            instance_id: format!("i{i}"),
                            text: format!("post number {i}"),
                            subsets: BTreeSet::new(),
                        },
                        if i % 2 == 0 { BinaryLabel::Toxic } else { BinaryLabel::NotToxic },
                    )
                })
                .collect(),
        }
    }

    fn personas(n: usize) -> Vec<Persona> {
        (0..n)
            .map(|i| Persona { id: format!("p{i}"), description: format!("a worker number {i}") })
            .collect()
    }

    fn simulator_for(campaign: &Campaign, config: &ExperimentConfig) -> SimulatorBackend {
        let mut world = SimulatorWorld::default();
        for instance in &campaign.instances {
            world.base_scores.insert(instance.instance_id.clone(), 3.0);
            world
                .instance_subsets
                .insert(instance.instance_id.clone(), instance.subsets.clone());
        }
        for (_, persona) in campaign.runs.iter() {
            if let Some(p) = persona {
                world.persona_descriptions.insert(p.id.clone(), p.description.clone());
            }
        }
        SimulatorBackend::new(config.simulator.clone(), world, &config.backend.model_name)
    }

    #[test]
    fn ensure_runs_completes_then_noops() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let single = tiny_single(4);
        let campaign = diversity_persona_campaign(&personas(3), &single);
        let backend = simulator_for(&campaign, &config);
        let outcome = ensure_runs(&config, &campaign, &backend).unwrap();
        assert_eq!(outcome.missing_before, 12);
        assert_eq!(outcome.appended, 12);
        let again = ensure_runs(&config, &campaign, &backend).unwrap();
        assert_eq!(again.missing_before, 0);
        assert_eq!(again.appended, 0);
        assert_eq!(again.store.records().len(), 12);
    }

    #[test]
    fn resumed_runs_produce_identical_labels_to_fresh_runs() {
        let fresh_dir = tempfile::tempdir().unwrap();
        let resumed_dir = tempfile::tempdir().unwrap();
        let single = tiny_single(5);
        let all = personas(4);
        let mut config = tiny_config(fresh_dir.path());
        config.simulator.noise_scale = 0.3;
        config.simulator.persona_bias_scale = 0.5;

        let campaign = diversity_persona_campaign(&all, &single);
        let backend = simulator_for(&campaign, &config);
        let fresh = ensure_runs(&config, &campaign, &backend).unwrap();

        // Interrupted variant: run only half the personas first, then all.
        let mut config2 = config.clone();
        config2.experiment.out_dir = resumed_dir.path().to_path_buf();
        let half_campaign = diversity_persona_campaign(&all[..2], &single);
        // Same name so the second pass extends the same store; rebuild the
        // manifest by removing it between passes (a different plan would
        // otherwise be rejected).
        ensure_runs(&config2, &half_campaign, &backend).unwrap();
        std::fs::remove_file(OutputLayout::new(&config2).run_manifest("s1_personas")).unwrap();
        let resumed = ensure_runs(&config2, &campaign, &backend).unwrap();
        // Half the personas (2 of 4) were already annotated on 5 instances.
        assert_eq!(resumed.missing_before, 10);

        let mut fresh_labels: Vec<(String, String, String)> = fresh
            .store
            .records()
            .iter()
            .map(|r| (r.run_id.clone(), r.instance_id.clone(), r.label.clone()))
            .collect();
        let mut resumed_labels: Vec<(String, String, String)> = resumed
            .store
            .records()
            .iter()
            .map(|r| (r.run_id.clone(), r.instance_id.clone(), r.label.clone()))
            .collect();
        fresh_labels.sort();
        resumed_labels.sort();
        assert_eq!(fresh_labels, resumed_labels);
    }

    #[test]
    fn changed_seed_config_is_rejected_on_resume() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let single = tiny_single(2);
        let campaign = baseline_campaign(3, &single);
        let backend = simulator_for(&campaign, &config);
        ensure_runs(&config, &campaign, &backend).unwrap();
        let mut drifted = config.clone();
        drifted.seeds.simulator = 999;
        let err = ensure_runs(&drifted, &campaign, &backend).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)), "got {err}");
        assert!(err.to_string().contains("different backend/seed config"));
    }

    #[test]
    fn changed_instance_text_is_caught_as_prompt_drift() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let single = tiny_single(3);
        let campaign = baseline_campaign(2, &single);
        let backend = simulator_for(&campaign, &config);
        ensure_runs(&config, &campaign, &backend).unwrap();
        let mut edited = campaign.clone();
        edited.instances[1].text = "someone edited this post".into();
        let backend2 = simulator_for(&edited, &config);
        let err = ensure_runs(&config, &edited, &backend2).unwrap_err();
        assert!(err.to_string().contains("prompt drift"), "got {err}");
    }

    #[test]
    fn campaign_run_id_conventions() {
        let single = tiny_single(1);
        let multi = crate::datasets::MultiLabelDataset::from_instances(
            single.instances.iter().map(|(i, _)| i.clone()).collect(),
        );
        let people = personas(2);
        assert_eq!(diversity_persona_campaign(&people, &single).runs[1].0, "s1p:p1");
        assert_eq!(baseline_campaign(2, &single).runs[0].0, "s1b:0");
        assert_eq!(stability_campaign(&people, 2, &single).runs[3].0, "st:p1:1");
        assert_eq!(likert_campaign(&people, &multi).runs[0].0, "s2:p0");
        let template = crate::persona::PersonaTemplate {
            id: "t1".into(),
            description_with_placeholders: "[ATOKEN] person who waves".into(),
        };
        let sets = vec![crate::persona::expand_variants(&template).unwrap()];
        let campaign = marker_campaign(&sets, &single);
        let ids: Vec<&str> = campaign.runs.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["mk:t1#neutral", "mk:t1#black", "mk:t1#conservative"]);
    }

    #[test]
    fn likert_table_extraction_checks_schema() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let multi = crate::datasets::MultiLabelDataset::from_instances(
            tiny_single(3).instances.iter().map(|(i, _)| i.clone()).collect(),
        );
        let campaign = likert_campaign(&personas(2), &multi);
        let backend = simulator_for(&campaign, &config);
        let outcome = ensure_runs(&config, &campaign, &backend).unwrap();
        let table = likert_table(&outcome.store, &campaign.run_ids()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.get("p0", "i0"), Some(3));
    }
}
