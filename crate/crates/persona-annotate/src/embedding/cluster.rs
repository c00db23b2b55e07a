//! Clustering over embedding spaces: greedy leader clustering with a
//! similarity threshold, seeded k-means, inter-cluster distance matrices,
//! and TF-IDF term summaries for human inspection.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cosine_distance, cosine_similarity, EmbeddingError, PersonaEmbedding};
use crate::persona::ENGLISH_STOPWORDS;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: String,
    /// Members in the order they joined (input order for leader clustering).
    pub member_ids: Vec<String>,
    /// Leader vector for threshold clustering, centroid for k-means.
    pub representative: Vec<f64>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    /// Personas whose dissolved clusters fell below the size floor.
    pub unassigned: Vec<String>,
}

impl Clustering {
    pub fn retained(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }
}

/// Greedy leader clustering. Vectors are visited in input order; each joins
/// the first cluster whose leader is at least `threshold` cosine-similar,
/// otherwise it founds a new cluster. Clusters smaller than `min_size` are
/// dissolved into `unassigned` afterwards. The result depends on input
/// order, so callers should fix and record that order.
pub fn threshold_cluster(
    embeddings: &[PersonaEmbedding],
    threshold: f64,
    min_size: usize,
) -> Result<Clustering, EmbeddingError> {
    assert!(threshold > 0.0 && threshold < 1.0, "threshold must be in (0,1)");
    assert!(min_size >= 1, "min_size must be at least 1");
    // (leader index, member indices) per cluster, in creation order.
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, embedding) in embeddings.iter().enumerate() {
        let mut joined = false;
        for (leader, members) in &mut groups {
            if cosine_similarity(&embedding.vector, &embeddings[*leader].vector)? >= threshold {
                members.push(i);
                joined = true;
                break;
            }
        }
        if !joined {
            groups.push((i, vec![i]));
        }
    }
    let mut clusters = Vec::new();
    let mut unassigned = Vec::new();
    for (leader, members) in groups {
        if members.len() < min_size {
            unassigned.extend(members.iter().map(|&m| embeddings[m].persona_id.clone()));
        } else {
            clusters.push(Cluster {
                cluster_id: format!("c{}", clusters.len()),
                member_ids: members.iter().map(|&m| embeddings[m].persona_id.clone()).collect(),
                representative: embeddings[leader].vector.clone(),
            });
        }
    }
    Ok(Clustering { clusters, unassigned })
}

#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    pub clustering: Clustering,
    /// Cluster index per input vector.
    pub assignments: Vec<usize>,
    /// Euclidean objective after each assignment pass; never increases.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

fn squared_euclid(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Seeded k-means with k-means++ initialization and Lloyd iterations.
/// Converges when assignments stop changing or after `max_iters` passes.
/// Empty clusters are reseeded to the point farthest from its centroid.
pub fn kmeans(
    embeddings: &[PersonaEmbedding],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KmeansOutcome, EmbeddingError> {
    let n = embeddings.len();
    if k == 0 || k > n {
        return Err(EmbeddingError::BadK { k, n });
    }
    let dim = embeddings[0].vector.len();
    for e in embeddings {
        if e.vector.len() != dim {
            return Err(EmbeddingError::DimensionMismatch { expected: dim, got: e.vector.len() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding: first centroid uniform, the rest sampled with
    // probability proportional to squared distance from the nearest chosen
    // centroid.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(embeddings[rng.random_range(0..n)].vector.clone());
    let mut nearest_sq: Vec<f64> =
        embeddings.iter().map(|e| squared_euclid(&e.vector, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in nearest_sq.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // All points coincide with a centroid already; any point works.
            rng.random_range(0..n)
        };
        centroids.push(embeddings[next].vector.clone());
        for (i, e) in embeddings.iter().enumerate() {
            let d = squared_euclid(&e.vector, centroids.last().unwrap());
            if d < nearest_sq[i] {
                nearest_sq[i] = d;
            }
        }
    }

    let mut assignments = vec![0usize; n];
    let mut objective_trace = Vec::new();
    let mut iterations = 0usize;
    for _ in 0..max_iters.max(1) {
        // Assignment pass.
        let mut objective = 0.0;
        let mut changed = false;
        for (i, e) in embeddings.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_euclid(&e.vector, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                changed = true;
            }
            assignments[i] = best;
            objective += best_d;
        }
        objective_trace.push(objective);
        iterations += 1;
        if !changed && iterations > 1 {
            break;
        }
        // Update pass.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, e) in embeddings.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, x) in sums[assignments[i]].iter_mut().zip(&e.vector) {
                *s += x;
            }
        }
        let mut stolen: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an empty cluster to the point currently worst
                // served, which can only lower the next objective.
                let far = (0..n)
                    .filter(|i| !stolen.contains(i))
                    .max_by(|&a, &b| {
                        let da = squared_euclid(&embeddings[a].vector, &centroids[assignments[a]]);
                        let db = squared_euclid(&embeddings[b].vector, &centroids[assignments[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap_or(0);
                centroids[c] = embeddings[far].vector.clone();
                stolen.push(far);
            }
        }
    }

    let mut clusters: Vec<Cluster> = (0..k)
        .map(|c| Cluster {
            cluster_id: format!("k{c}"),
            member_ids: Vec::new(),
            representative: centroids[c].clone(),
        })
        .collect();
    for (i, e) in embeddings.iter().enumerate() {
        clusters[assignments[i]].member_ids.push(e.persona_id.clone());
    }
    Ok(KmeansOutcome {
        clustering: Clustering { clusters, unassigned: Vec::new() },
        assignments,
        objective_trace,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    None,
    RowMinmax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterDistanceMatrix {
    pub cluster_ids: Vec<String>,
    /// Row-major; values[i][j] averages cosine distances between members of
    /// cluster i and cluster j.
    pub values: Vec<Vec<f64>>,
    pub normalized: Normalize,
}

/// Average pairwise cosine distance between (and within) clusters. The
/// unnormalized matrix is exactly symmetric because each unordered cluster
/// pair is computed once and mirrored. Diagonal entries average unordered
/// distinct member pairs; a singleton cluster's self-distance is 0.
pub fn cluster_distance_matrix(
    clustering: &Clustering,
    space: &BTreeMap<String, Vec<f64>>,
    normalize: Normalize,
) -> Result<ClusterDistanceMatrix, EmbeddingError> {
    let members: Vec<Vec<&[f64]>> = clustering
        .clusters
        .iter()
        .map(|cluster| {
            cluster
                .member_ids
                .iter()
                .map(|id| {
                    space
                        .get(id)
                        .map(Vec::as_slice)
                        .ok_or_else(|| EmbeddingError::MissingVector { persona_id: id.clone() })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let k = members.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let mean = if i == j {
                let within = &members[i];
                if within.len() < 2 {
                    0.0
                } else {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for a in 0..within.len() {
                        for b in (a + 1)..within.len() {
                            sum += cosine_distance(within[a], within[b])?;
                            count += 1;
                        }
                    }
                    sum / count as f64
                }
            } else {
                let mut sum = 0.0;
                for a in &members[i] {
                    for b in &members[j] {
                        sum += cosine_distance(a, b)?;
                    }
                }
                sum / (members[i].len() * members[j].len()) as f64
            };
            values[i][j] = mean;
            values[j][i] = mean;
        }
    }
    if normalize == Normalize::RowMinmax {
        for row in &mut values {
            let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max > min {
                for x in row.iter_mut() {
                    *x = (*x - min) / (max - min);
                }
            } else {
                for x in row.iter_mut() {
                    *x = 0.0;
                }
            }
        }
    }
    Ok(ClusterDistanceMatrix {
        cluster_ids: clustering.clusters.iter().map(|c| c.cluster_id.clone()).collect(),
        values,
        normalized: normalize,
    })
}

/// TF-IDF summary terms per cluster, for eyeballing what a cluster is
/// about. Each cluster's document is its members' concatenated descriptions;
/// term weight is (1 + ln tf) · ln(N / df) over lowercase word tokens with
/// stopwords dropped. Terms appearing in every cluster weigh zero.
pub fn cluster_top_terms(
    clustering: &Clustering,
    descriptions: &BTreeMap<String, String>,
    top_k: usize,
) -> Vec<(String, Vec<(String, f64)>)> {
    let term_counts: Vec<BTreeMap<String, usize>> = clustering
        .clusters
        .iter()
        .map(|cluster| {
            let mut counts = BTreeMap::new();
            for id in &cluster.member_ids {
                let Some(description) = descriptions.get(id) else { continue };
                let lowered = description.to_lowercase();
                for token in lowered.split(|c: char| !c.is_alphanumeric()) {
                    if token.len() < 2 || ENGLISH_STOPWORDS.binary_search(&token).is_ok() {
                        continue;
                    }
                    *counts.entry(token.to_string()).or_insert(0) += 1;
                }
            }
            counts
        })
        .collect();
    let n_docs = term_counts.len();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for counts in &term_counts {
        for term in counts.keys() {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    clustering
        .clusters
        .iter()
        .zip(&term_counts)
        .map(|(cluster, counts)| {
            let mut weighted: Vec<(String, f64)> = counts
                .iter()
                .map(|(term, &tf)| {
                    let idf = (n_docs as f64 / df[term.as_str()] as f64).ln();
                    (term.clone(), (1.0 + (tf as f64).ln()) * idf)
                })
                .collect();
            weighted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            weighted.truncate(top_k);
            (cluster.cluster_id.clone(), weighted)
        })
        .collect()
}
