//! Vector spaces over personas: description embeddings, annotation-behavior
//! embeddings, and the cross-space association between the two.
//!
//! Two providers are built in. The feature-hashing embedder is fully offline
//! and deterministic; the HTTP provider calls out to any service speaking the
//! simple `{texts} -> {vectors}` wire format.

pub mod cluster;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::MultiLabelDataset;
use crate::hashing::fnv1a64;
use crate::persona::Persona;
use crate::stats::{spearman, CorrelationResult, StatsError};

pub use cluster::{
    cluster_distance_matrix, cluster_top_terms, kmeans, threshold_cluster, Cluster,
    ClusterDistanceMatrix, Clustering, KmeansOutcome, Normalize,
};

/// Description-space point for one persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaEmbedding {
    pub persona_id: String,
    pub vector: Vec<f64>,
}

/// Behavior-space point: one Likert rating per instance, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVector {
    pub persona_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cosine distance undefined for an all-zero vector")]
    ZeroVector,
    #[error("embedding provider returned {got} vectors for {expected} texts")]
    ProviderShape { expected: usize, got: usize },
    #[error("embedding provider failed: {message}")]
    Provider { message: String },
    #[error("non-finite component in vector for {persona_id}")]
    NonFinite { persona_id: String },
    #[error("{count} missing likert labels, first: {first}")]
    MissingLabels { count: usize, first: String },
    #[error("no vector for persona {persona_id} in the requested space")]
    MissingVector { persona_id: String },
    #[error("k-means requires k in 1..=n, got k={k} with n={n}")]
    BadK { k: usize, n: usize },
    #[error("cross-space correlation needs the same personas in both spaces")]
    IdSetMismatch,
    #[error("cross-space correlation needs at least 4 personas, got {n}")]
    TooFewPersonas { n: usize },
}

/// Anything that can turn texts into fixed-dimension vectors.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// Offline feature-hashing embedder: lowercase word tokens are hashed into
/// `dim` buckets, counted, and the count vector is unit-normalized. Identical
/// texts always map to identical vectors, and shared vocabulary raises cosine
/// similarity, which is all the downstream geometry needs.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

pub const DEFAULT_EMBEDDING_DIM: usize = 384;

impl HashEmbedder {
    pub fn new(dim: usize) -> HashEmbedder {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut vector = vec![0.0; self.dim];
        let lowered = text.to_lowercase();
        for token in lowered.split(|c: char| !c.is_alphanumeric()) {
            if token.is_empty() {
                continue;
            }
            let bucket = (fnv1a64(token.as_bytes()) % self.dim as u64) as usize;
            vector[bucket] += 1.0;
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut vector {
                *x /= norm;
            }
        }
        vector
    }
}

impl Default for HashEmbedder {
    fn default() -> HashEmbedder {
        HashEmbedder::new(DEFAULT_EMBEDDING_DIM)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Remote embedding service speaking `POST {"texts": [...]}` and answering
/// `{"vectors": [[...], ...]}`.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    url: String,
    dim: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl HttpEmbedder {
    pub fn new(url: &str, dim: usize, timeout_secs: u64) -> HttpEmbedder {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs)))
            .build()
            .into();
        HttpEmbedder { agent, url: url.to_string(), dim }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| EmbeddingError::Provider { message: e.to_string() })?;
        let parsed: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError::Provider { message: e.to_string() })?;
        if parsed.vectors.len() != texts.len() {
            return Err(EmbeddingError::ProviderShape {
                expected: texts.len(),
                got: parsed.vectors.len(),
            });
        }
        for vector in &parsed.vectors {
            if vector.len() != self.dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: self.dim,
                    got: vector.len(),
                });
            }
        }
        Ok(parsed.vectors)
    }
}

/// Embed every persona description, preserving input order.
pub fn embed_personas(
    personas: &[Persona],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<PersonaEmbedding>, EmbeddingError> {
    let texts: Vec<String> = personas.iter().map(|p| p.description.clone()).collect();
    let vectors = provider.embed(&texts)?;
    if vectors.len() != personas.len() {
        return Err(EmbeddingError::ProviderShape {
            expected: personas.len(),
            got: vectors.len(),
        });
    }
    let expected = provider.dimension();
    let mut out = Vec::with_capacity(personas.len());
    for (persona, vector) in personas.iter().zip(vectors) {
        if vector.len() != expected {
            return Err(EmbeddingError::DimensionMismatch { expected, got: vector.len() });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite { persona_id: persona.id.clone() });
        }
        out.push(PersonaEmbedding { persona_id: persona.id.clone(), vector });
    }
    Ok(out)
}

/// Likert ratings collected per persona, keyed by instance.
#[derive(Debug, Clone, Default)]
pub struct LikertTable {
    ratings: BTreeMap<String, BTreeMap<String, u8>>,
}

impl LikertTable {
    pub fn new() -> LikertTable {
        LikertTable::default()
    }

    pub fn insert(&mut self, persona_id: &str, instance_id: &str, rating: u8) {
        self.ratings
            .entry(persona_id.to_string())
            .or_default()
            .insert(instance_id.to_string(), rating);
    }

    pub fn get(&self, persona_id: &str, instance_id: &str) -> Option<u8> {
        self.ratings.get(persona_id)?.get(instance_id).copied()
    }

    /// Persona ids present, in sorted order.
    pub fn persona_ids(&self) -> Vec<String> {
        self.ratings.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

/// Assemble one label vector per persona, components in dataset instance
/// order. Every (persona, instance) cell must be present.
pub fn label_vectors(
    table: &LikertTable,
    dataset: &MultiLabelDataset,
) -> Result<Vec<LabelVector>, EmbeddingError> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(table.len());
    for persona_id in table.persona_ids() {
        let mut vector = Vec::with_capacity(dataset.instances.len());
        for instance in &dataset.instances {
            match table.get(&persona_id, &instance.instance_id) {
                Some(rating) => vector.push(f64::from(rating)),
                None => missing.push(format!("({persona_id}, {})", instance.instance_id)),
            }
        }
        if missing.is_empty() {
            out.push(LabelVector { persona_id, vector });
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(EmbeddingError::MissingLabels {
            count: missing.len(),
            first: missing[0].clone(),
        })
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// 1 − cosine similarity, in [0, 2].
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    Ok(1.0 - cosine_similarity(u, v)?)
}

/// Per-persona association between two spaces over the same persona set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonaAssociation {
    pub persona_id: String,
    /// None when a distance profile is constant, which leaves the rank
    /// correlation undefined.
    pub correlation: Option<CorrelationResult>,
}

/// For each persona, correlate its distance profile to all other personas in
/// the description space against the same profile in the label space.
pub fn cross_space_correlations(
    persona_space: &[PersonaEmbedding],
    label_space: &[LabelVector],
) -> Result<Vec<PersonaAssociation>, EmbeddingError> {
    let mut desc: BTreeMap<&str, &[f64]> = BTreeMap::new();
    for e in persona_space {
        desc.insert(&e.persona_id, &e.vector);
    }
    let mut labels: BTreeMap<&str, &[f64]> = BTreeMap::new();
    for v in label_space {
        labels.insert(&v.persona_id, &v.vector);
    }
    if desc.len() != persona_space.len()
        || labels.len() != label_space.len()
        || !desc.keys().eq(labels.keys())
    {
        return Err(EmbeddingError::IdSetMismatch);
    }
    let ids: Vec<&str> = desc.keys().copied().collect();
    if ids.len() < 4 {
        return Err(EmbeddingError::TooFewPersonas { n: ids.len() });
    }
    let mut out = Vec::with_capacity(ids.len());
    for &id in &ids {
        let mut desc_profile = Vec::with_capacity(ids.len() - 1);
        let mut label_profile = Vec::with_capacity(ids.len() - 1);
        for &other in &ids {
            if other == id {
                continue;
            }
            desc_profile.push(cosine_distance(desc[id], desc[other])?);
            label_profile.push(cosine_distance(labels[id], labels[other])?);
        }
        let correlation = match spearman(&desc_profile, &label_profile) {
            Ok(result) => Some(result),
            Err(StatsError::ConstantInput) => None,
            Err(e) => {
                return Err(EmbeddingError::Provider {
                    message: format!("correlation failed for {id}: {e}"),
                })
            }
        };
        out.push(PersonaAssociation { persona_id: id.to_string(), correlation });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Instance;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn persona(id: &str, description: &str) -> Persona {
        Persona { id: id.into(), description: description.into() }
    }

    fn sim(provider: &HashEmbedder, a: &str, b: &str) -> f64 {
        let va = provider.embed_one(a);
        let vb = provider.embed_one(b);
        cosine_similarity(&va, &vb).unwrap()
    }

    #[test]
    fn identical_descriptions_get_identical_vectors() {
        let provider = HashEmbedder::default();
        let personas = vec![persona("p1", "a math teacher"), persona("p2", "a math teacher")];
        let out = embed_personas(&personas, &provider).unwrap();
        assert_eq!(out[0].vector, out[1].vector);
        assert_eq!(out[0].persona_id, "p1");
        assert_eq!(out[0].vector.len(), DEFAULT_EMBEDDING_DIM);
    }

    #[test]
    fn shared_vocabulary_raises_similarity() {
        let provider = HashEmbedder::default();
        let close = sim(&provider, "a math teacher", "a math professor");
        let far = sim(&provider, "a math teacher", "a jazz trumpeter");
        assert!(close > far, "expected {close} > {far}");
    }

    #[test]
    fn empty_persona_list_embeds_to_nothing() {
        let provider = HashEmbedder::default();
        assert!(embed_personas(&[], &provider).unwrap().is_empty());
    }

    #[test]
    fn hashing_is_case_and_punctuation_insensitive() {
        let provider = HashEmbedder::new(64);
        assert_eq!(provider.embed_one("A Math Teacher."), provider.embed_one("a math teacher"));
    }

    #[test]
    fn cosine_distance_endpoints() {
        let u = vec![1.0, 0.0];
        assert_eq!(cosine_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(
            cosine_distance(&[0.0, 0.0], &u),
            Err(EmbeddingError::ZeroVector)
        ));
        assert!(matches!(
            cosine_distance(&[1.0], &u),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    proptest! {
        // Cosine distance only sees direction, never magnitude.
        #[test]
        fn cosine_distance_is_scale_invariant(
            v in proptest::collection::vec(-5.0f64..5.0, 3),
            w in proptest::collection::vec(-5.0f64..5.0, 3),
            alpha in 0.01f64..50.0,
            beta in 0.01f64..50.0,
        ) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            prop_assume!(w.iter().any(|x| x.abs() > 1e-6));
            let scaled_v: Vec<f64> = v.iter().map(|x| x * alpha).collect();
            let scaled_w: Vec<f64> = w.iter().map(|x| x * beta).collect();
            let d1 = cosine_distance(&v, &w).unwrap();
            let d2 = cosine_distance(&scaled_v, &scaled_w).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-9);
        }
    }

    fn tiny_dataset(instance_ids: &[&str]) -> MultiLabelDataset {
        MultiLabelDataset::from_instances(
            instance_ids
                .iter()
                .map(|id| Instance {
                    instance_id: id.to_string(),
                    text: format!("text {id}"),
                    subsets: BTreeSet::new(),
                })
                .collect(),
        )
    }

    #[test]
    fn constant_rater_yields_constant_vector() {
        let dataset = tiny_dataset(&["i1", "i2", "i3"]);
        let mut table = LikertTable::new();
        for id in ["i1", "i2", "i3"] {
            table.insert("p1", id, 3);
        }
        let vectors = label_vectors(&table, &dataset).unwrap();
        assert_eq!(vectors.len(), 1);
        assert_eq!(vectors[0].vector, vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn label_vectors_follow_dataset_instance_order() {
        let dataset = tiny_dataset(&["b", "a"]);
        let mut table = LikertTable::new();
        table.insert("p1", "a", 1);
        table.insert("p1", "b", 5);
        let vectors = label_vectors(&table, &dataset).unwrap();
        assert_eq!(vectors[0].vector, vec![5.0, 1.0]);
    }

    #[test]
    fn missing_label_is_named() {
        let dataset = tiny_dataset(&["i1", "i2"]);
        let mut table = LikertTable::new();
        table.insert("p1", "i1", 2);
        match label_vectors(&table, &dataset).unwrap_err() {
            EmbeddingError::MissingLabels { count, first } => {
                assert_eq!(count, 1);
                assert_eq!(first, "(p1, i2)");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn full_grid_gives_one_vector_per_persona() {
        let dataset = tiny_dataset(&["i1", "i2", "i3", "i4"]);
        let mut table = LikertTable::new();
        for p in 0..7 {
            for (j, id) in ["i1", "i2", "i3", "i4"].iter().enumerate() {
                table.insert(&format!("p{p}"), id, ((p + j) % 5 + 1) as u8);
            }
        }
        let vectors = label_vectors(&table, &dataset).unwrap();
        assert_eq!(vectors.len(), 7);
        assert!(vectors.iter().all(|v| v.vector.len() == 4));
    }

    fn unit_circle_embeddings(n: usize, seed: u64) -> Vec<PersonaEmbedding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                PersonaEmbedding {
                    persona_id: format!("p{i:03}"),
                    vector: vec![theta.cos(), theta.sin(), rng.random_range(-0.2..0.2)],
                }
            })
            .collect()
    }

    #[test]
    fn identical_geometry_correlates_perfectly() {
        let space = unit_circle_embeddings(8, 42);
        let labels: Vec<LabelVector> = space
            .iter()
            .map(|e| LabelVector { persona_id: e.persona_id.clone(), vector: e.vector.clone() })
            .collect();
        let out = cross_space_correlations(&space, &labels).unwrap();
        assert_eq!(out.len(), 8);
        for assoc in out {
            let rho = assoc.correlation.expect("defined").rho;
            assert!((rho - 1.0).abs() < 1e-12, "rho = {rho}");
        }
    }

    #[test]
    fn permuted_labels_decorrelate_on_average() {
        // Null model: label vectors are persona vectors under a random
        // permutation, so profile ranks line up only by chance.
        let space = unit_circle_embeddings(24, 7);
        let mut sum = 0.0;
        let mut count = 0usize;
        for seed in 0..40u64 {
            let mut perm: Vec<usize> = (0..space.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(1000 + seed));
            let labels: Vec<LabelVector> = space
                .iter()
                .enumerate()
                .map(|(i, e)| LabelVector {
                    persona_id: e.persona_id.clone(),
                    vector: space[perm[i]].vector.clone(),
                })
                .collect();
            for assoc in cross_space_correlations(&space, &labels).unwrap() {
                if let Some(result) = assoc.correlation {
                    sum += result.rho;
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        assert!(mean.abs() < 0.1, "null-model mean rho = {mean}");
    }

    #[test]
    fn constant_profile_is_flagged_undefined() {
        // All label vectors identical except the probe's own, so every
        // distance from any persona to the others is the same constant.
        let space = unit_circle_embeddings(5, 3);
        let labels: Vec<LabelVector> = space
            .iter()
            .map(|e| LabelVector { persona_id: e.persona_id.clone(), vector: vec![1.0, 2.0, 3.0] })
            .collect();
        let out = cross_space_correlations(&space, &labels).unwrap();
        assert!(out.iter().all(|a| a.correlation.is_none()));
    }

    #[test]
    fn id_relabeling_leaves_correlations_unchanged() {
        let space = unit_circle_embeddings(9, 11);
        let labels: Vec<LabelVector> = space
            .iter()
            .rev()
            .map(|e| LabelVector {
                persona_id: e.persona_id.clone(),
                vector: e.vector.iter().map(|x| x * 2.0 + 0.01).collect(),
            })
            .collect();
        let base = cross_space_correlations(&space, &labels).unwrap();
        // Consistent rename in both spaces: p007 -> zz007 etc.
        let rename = |id: &str| format!("zz{}", &id[1..]);
        let renamed_space: Vec<PersonaEmbedding> = space
            .iter()
            .map(|e| PersonaEmbedding { persona_id: rename(&e.persona_id), vector: e.vector.clone() })
            .collect();
        let renamed_labels: Vec<LabelVector> = labels
            .iter()
            .map(|v| LabelVector { persona_id: rename(&v.persona_id), vector: v.vector.clone() })
            .collect();
        let renamed = cross_space_correlations(&renamed_space, &renamed_labels).unwrap();
        for (a, b) in base.iter().zip(&renamed) {
            assert_eq!(rename(&a.persona_id), b.persona_id);
            let (ra, rb) = (a.correlation.as_ref().unwrap(), b.correlation.as_ref().unwrap());
            assert_eq!(ra.rho, rb.rho);
            assert_eq!(ra.p_value, rb.p_value);
        }
    }

    #[test]
    fn mismatched_or_tiny_spaces_are_rejected() {
        let space = unit_circle_embeddings(4, 1);
        let mut labels: Vec<LabelVector> = space
            .iter()
            .map(|e| LabelVector { persona_id: e.persona_id.clone(), vector: e.vector.clone() })
            .collect();
        labels[0].persona_id = "stranger".into();
        assert!(matches!(
            cross_space_correlations(&space, &labels),
            Err(EmbeddingError::IdSetMismatch)
        ));
        let small = unit_circle_embeddings(3, 2);
        let small_labels: Vec<LabelVector> = small
            .iter()
            .map(|e| LabelVector { persona_id: e.persona_id.clone(), vector: e.vector.clone() })
            .collect();
        assert!(matches!(
            cross_space_correlations(&small, &small_labels),
            Err(EmbeddingError::TooFewPersonas { n: 3 })
        ));
    }
}
