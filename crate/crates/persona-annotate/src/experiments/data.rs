//! Loading the corpus and datasets named in a config, and assembling the
//! pieces the simulator and embedding backends need from them.

use std::collections::BTreeSet;

use super::config::{EmbeddingProviderKind, ExperimentConfig};
use super::CliError;
use crate::backend::{Annotator, BackendKind, HttpBackend, SimulatorBackend, SimulatorWorld};
use crate::datasets::{
    load_long_csv, load_single_label, BinaryLabel, MultiLabelDataset, SingleLabelDataset, SubsetTag,
};
use crate::embedding::{EmbeddingProvider, HashEmbedder, HttpEmbedder};
use crate::persona::{
    expand_variants, load_personas, load_templates, sample_personas, Persona, PersonaTemplate,
    PersonaVariantSet,
};

/// Pseudo human-mean score for a gold-toxic instance when no Likert matrix
/// covers it. Sits far enough above the 2.5 decision boundary that moderate
/// persona bias flips only a minority of verdicts.
pub const TOXIC_BASE: f64 = 3.6;
/// Counterpart for gold-non-toxic instances, below the boundary.
pub const NOT_TOXIC_BASE: f64 = 1.8;

pub fn load_corpus(config: &ExperimentConfig) -> Result<Vec<Persona>, CliError> {
    Ok(load_personas(&config.data.personas, config.data.persona_format)?)
}

/// The study persona set: a seeded subsample of the corpus, in corpus order.
pub fn sampled_personas(config: &ExperimentConfig) -> Result<Vec<Persona>, CliError> {
    let corpus = load_corpus(config)?;
    Ok(sample_personas(&corpus, config.study1.n_personas, config.seeds.sampling)?)
}

pub fn load_template_file(config: &ExperimentConfig) -> Result<Vec<PersonaTemplate>, CliError> {
    Ok(load_templates(&config.data.templates)?)
}

pub fn variant_sets(config: &ExperimentConfig) -> Result<Vec<PersonaVariantSet>, CliError> {
    let templates = load_template_file(config)?;
    templates.iter().map(|t| expand_variants(t).map_err(CliError::from)).collect()
}

pub fn load_single(config: &ExperimentConfig) -> Result<SingleLabelDataset, CliError> {
    Ok(load_single_label(&config.data.single_label)?)
}

pub fn load_multi(config: &ExperimentConfig) -> Result<MultiLabelDataset, CliError> {
    Ok(load_long_csv(&config.data.multi_label)?)
}

/// Instances tagged AAE or anti-Black, in dataset order: the marker
/// experiment annotates exactly these.
pub fn marker_instances(single: &SingleLabelDataset) -> SingleLabelDataset {
    SingleLabelDataset {
        instances: single
            .instances
            .iter()
            .filter(|(inst, _)| {
                inst.subsets.contains(&SubsetTag::Aae) || inst.subsets.contains(&SubsetTag::AntiBlack)
            })
            .cloned()
            .collect(),
    }
}

/// Static facts the simulator consults. Base scores come from the human
/// Likert means where a matrix covers the instance, otherwise from the gold
/// binary label via the pseudo-mean constants above.
pub fn build_world(
    personas: &[Persona],
    single: Option<&SingleLabelDataset>,
    multi: Option<&MultiLabelDataset>,
) -> SimulatorWorld {
    let mut world = SimulatorWorld::default();
    if let Some(single) = single {
        for (instance, gold) in &single.instances {
            let base = match gold {
                BinaryLabel::Toxic => TOXIC_BASE,
                BinaryLabel::NotToxic => NOT_TOXIC_BASE,
            };
            world.base_scores.insert(instance.instance_id.clone(), base);
            world
                .instance_subsets
                .insert(instance.instance_id.clone(), instance.subsets.clone());
        }
    }
    if let Some(multi) = multi {
        for instance in &multi.instances {
            let ratings = multi.instance_ratings(&instance.instance_id);
            if !ratings.is_empty() {
                let mean = ratings.iter().map(|&r| f64::from(r)).sum::<f64>() / ratings.len() as f64;
                world.base_scores.insert(instance.instance_id.clone(), mean);
            }
            world
                .instance_subsets
                .insert(instance.instance_id.clone(), instance.subsets.clone());
        }
    }
    for persona in personas {
        world
            .persona_descriptions
            .insert(persona.id.clone(), persona.description.clone());
    }
    world
}

pub fn build_backend(
    config: &ExperimentConfig,
    world: SimulatorWorld,
) -> Result<Box<dyn Annotator>, CliError> {
    match config.backend.kind {
        BackendKind::Simulator => Ok(Box::new(SimulatorBackend::new(
            config.simulator.clone(),
            world,
            &config.backend.model_name,
        ))),
        BackendKind::Http => {
            Ok(Box::new(HttpBackend::from_config(&config.backend).map_err(CliError::Validation)?))
        }
    }
}

pub fn build_embedder(config: &ExperimentConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    match config.study2.embedding_provider {
        EmbeddingProviderKind::Hash => Ok(Box::new(HashEmbedder::new(config.study2.embedding_dim))),
        EmbeddingProviderKind::Http => {
            let url = config.study2.embedding_url.as_deref().ok_or_else(|| {
                CliError::Validation("embedding_url missing for http embedding provider".into())
            })?;
            Ok(Box::new(HttpEmbedder::new(
                url,
                config.study2.embedding_dim,
                config.study2.embedding_timeout_secs,
            )))
        }
    }
}

/// Subset tags present across a dataset, in tag order.
pub fn present_subsets(single: &SingleLabelDataset) -> Vec<SubsetTag> {
    let mut tags: BTreeSet<SubsetTag> = BTreeSet::new();
    for (instance, _) in &single.instances {
        tags.extend(instance.subsets.iter().copied());
    }
    tags.into_iter().collect()
}
