//! Deterministic annotation simulator.
//!
//! Labels come from an additive score model: a per-instance base level, a
//! persona-specific bias that is stable across runs, marker-word group
//! effects, and per-(persona, instance, run) noise. Every random draw is
//! seeded from string identity, so a given request always yields the same
//! label on any platform.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AnnotationRequest, AnnotationResult, Annotator, BackendError, BackendKind};
use crate::datasets::SubsetTag;
use crate::hashing::mix_seed;
use crate::prompting::SchemaKind;

/// Where the per-instance base score comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum BaseSource {
    /// Per-instance scores supplied by the world (e.g. human mean ratings).
    HumanMean,
    /// One fixed score for every instance.
    Constant(f64),
}

/// Tunable structure of the additive score model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorParams {
    /// Scale of the per-persona bias (σ_p).
    pub persona_bias_scale: f64,
    /// Scale of the per-request noise (σ_n).
    pub noise_scale: f64,
    /// marker word → subset tag → additive shift, applied when the persona
    /// description contains the marker and the instance carries the tag.
    pub group_effects: BTreeMap<String, BTreeMap<SubsetTag, f64>>,
    pub base_source: BaseSource,
}

impl Default for SimulatorParams {
    fn default() -> Self {
        SimulatorParams {
            persona_bias_scale: 0.0,
            noise_scale: 0.0,
            group_effects: BTreeMap::new(),
            base_source: BaseSource::HumanMean,
        }
    }
}

impl SimulatorParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.persona_bias_scale < 0.0 || self.noise_scale < 0.0 {
            return Err("simulator scales must be non-negative".into());
        }
        Ok(())
    }
}

/// Static facts the simulator consults per request: instance base scores and
/// subset tags, and persona descriptions for marker matching.
#[derive(Debug, Clone, Default)]
pub struct SimulatorWorld {
    pub base_scores: BTreeMap<String, f64>,
    pub instance_subsets: BTreeMap<String, BTreeSet<SubsetTag>>,
    pub persona_descriptions: BTreeMap<String, String>,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Persona bias deviate; a function of the persona id alone, so the same
/// persona pushes its annotations the same way in every run.
pub fn persona_bias(persona_id: &str) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(0, &["persona-bias", persona_id]));
    standard_normal(&mut rng)
}

/// Sum of group effects triggered by marker words in the persona description
/// against the instance's subset tags. Matching is on lowercase word tokens,
/// so "blacksmith" does not trigger the "black" marker.
pub fn group_shift(
    params: &SimulatorParams,
    persona_description: &str,
    subsets: &BTreeSet<SubsetTag>,
) -> f64 {
    if params.group_effects.is_empty() || subsets.is_empty() {
        return 0.0;
    }
    let tokens: BTreeSet<String> = persona_description
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect();
    let mut shift = 0.0;
    for (marker, effects) in &params.group_effects {
        if tokens.contains(&marker.to_lowercase()) {
            for (tag, delta) in effects {
                if subsets.contains(tag) {
                    shift += delta;
                }
            }
        }
    }
    shift
}

/// The raw additive score before schema mapping.
#[allow(clippy::too_many_arguments)]
pub fn simulate_score(
    params: &SimulatorParams,
    persona: Option<(&str, &str)>,
    instance_id: &str,
    subsets: &BTreeSet<SubsetTag>,
    base: f64,
    run_seed: u64,
) -> f64 {
    let mut score = base;
    if let Some((persona_id, description)) = persona {
        if params.persona_bias_scale > 0.0 {
            score += persona_bias(persona_id) * params.persona_bias_scale;
        }
        score += group_shift(params, description, subsets);
    }
    if params.noise_scale > 0.0 {
        let persona_part = persona.map(|(id, _)| id).unwrap_or("");
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
            run_seed,
            &["noise", persona_part, instance_id],
        ));
        score += standard_normal(&mut rng) * params.noise_scale;
    }
    score
}

/// Map a score onto a schema surface label: 1..=5 by rounding and clamping,
/// or TRUE when strictly above the binarization boundary 2.5.
pub fn score_to_label(score: f64, schema: SchemaKind) -> String {
    match schema {
        SchemaKind::Likert5 => {
            let level = score.round().clamp(1.0, 5.0) as i64;
            level.to_string()
        }
        SchemaKind::Binary => {
            if score > 2.5 {
                "TRUE".into()
            } else {
                "FALSE".into()
            }
        }
    }
}

/// One simulated label. Pure in (params, persona, instance, schema, run_seed).
#[allow(clippy::too_many_arguments)]
pub fn simulate_label(
    params: &SimulatorParams,
    persona: Option<(&str, &str)>,
    instance_id: &str,
    subsets: &BTreeSet<SubsetTag>,
    base: f64,
    schema: SchemaKind,
    run_seed: u64,
) -> String {
    score_to_label(
        simulate_score(params, persona, instance_id, subsets, base, run_seed),
        schema,
    )
}

/// Simulator wired as an [`Annotator`].
pub struct SimulatorBackend {
    pub params: SimulatorParams,
    pub world: SimulatorWorld,
    pub model_name: String,
}

impl SimulatorBackend {
    pub fn new(params: SimulatorParams, world: SimulatorWorld, model_name: &str) -> Self {
        SimulatorBackend {
            params,
            world,
            model_name: model_name.to_string(),
        }
    }

    fn base_for(&self, instance_id: &str) -> Result<f64, BackendError> {
        match self.params.base_source {
            BaseSource::Constant(value) => Ok(value),
            BaseSource::HumanMean => self
                .world
                .base_scores
                .get(instance_id)
                .copied()
                .ok_or_else(|| BackendError::MissingBaseScore {
                    instance_id: instance_id.to_string(),
                }),
        }
    }
}

impl Annotator for SimulatorBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Simulator
    }

    fn annotate(&self, request: &AnnotationRequest) -> Result<AnnotationResult, BackendError> {
        let run_seed = request.sampling_seed.ok_or_else(|| BackendError::MissingSeed {
            run_id: request.run_id.clone(),
        })?;
        let instance_id = request.instance_id();
        let base = self.base_for(instance_id)?;
        let empty = BTreeSet::new();
        let subsets = self
            .world
            .instance_subsets
            .get(instance_id)
            .unwrap_or(&empty);
        let persona = request.persona_id().map(|id| {
            let description = self
                .world
                .persona_descriptions
                .get(id)
                .map(|d| d.as_str())
                // Unknown persona: no marker effects, bias still applies.
                .unwrap_or("");
            (id, description)
        });
        let label = simulate_label(
            &self.params,
            persona,
            instance_id,
            subsets,
            base,
            request.prompt.schema.kind,
            run_seed,
        );
        Ok(AnnotationResult {
            run_id: request.run_id.clone(),
            persona_id: request.persona_id().map(|s| s.to_string()),
            instance_id: instance_id.to_string(),
            prompt_hash: request.prompt.fingerprint(),
            raw_response: label.clone(),
            label,
            attempts: 1,
            backend_kind: BackendKind::Simulator,
        })
    }
}
