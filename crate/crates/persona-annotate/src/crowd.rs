//! Crowd assembly and majority-vote aggregation, plus the incremental
//! trajectory machinery for growing crowds one annotator at a time.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{BinaryLabel, SingleLabelDataset};
use crate::hashing::mix_seed;
use crate::metrics::{self, ClassificationReport};

/// How an exact vote tie is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TieRule {
    /// Ties count as toxic (the conservative default for a safety construct).
    Positive,
    /// Ties count as not toxic.
    Negative,
    /// Ties resolve by a deterministic coin that depends only on the seed and
    /// the number of voters, so the outcome is permutation-invariant.
    SeededRandom { seed: u64 },
}

impl Default for TieRule {
    fn default() -> Self {
        TieRule::Positive
    }
}

#[derive(Debug, Error)]
pub enum CrowdError {
    #[error("cannot take a majority vote over an empty label list")]
    EmptyVote,
    #[error("need {needed} run ids for {num_crowds} crowds of {crowd_size}, got {got}")]
    InsufficientRuns {
        needed: usize,
        num_crowds: usize,
        crowd_size: usize,
        got: usize,
    },
    #[error("store is missing {} labels, first: {}", missing.len(), format_first(missing))]
    MissingLabels { missing: Vec<(String, String)> },
    #[error("gold dataset is empty")]
    EmptyGold,
}

fn format_first(missing: &[(String, String)]) -> String {
    missing
        .first()
        .map(|(r, i)| format!("({r}, {i})"))
        .unwrap_or_default()
}

/// Majority vote with the given tie rule. Odd-sized votes can never tie, so
/// the rule only matters for even crowds.
pub fn majority_vote(labels: &[BinaryLabel], rule: TieRule) -> Result<BinaryLabel, CrowdError> {
    if labels.is_empty() {
        return Err(CrowdError::EmptyVote);
    }
    let toxic = labels.iter().filter(|&&l| l == BinaryLabel::Toxic).count();
    let not_toxic = labels.len() - toxic;
    Ok(if toxic > not_toxic {
        BinaryLabel::Toxic
    } else if toxic < not_toxic {
        BinaryLabel::NotToxic
    } else {
        break_tie(rule, labels.len())
    })
}

/// A tie at crowd size n resolves identically wherever it occurs, keeping
/// majority_vote permutation-invariant: the coin hashes only (seed, n).
fn break_tie(rule: TieRule, n: usize) -> BinaryLabel {
    match rule {
        TieRule::Positive => BinaryLabel::Toxic,
        TieRule::Negative => BinaryLabel::NotToxic,
        TieRule::SeededRandom { seed } => {
            if mix_seed(seed, &["tie", &n.to_string()]) & 1 == 0 {
                BinaryLabel::Toxic
            } else {
                BinaryLabel::NotToxic
            }
        }
    }
}

/// Disjoint random crowds of run ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrowdAssignment {
    pub crowds: Vec<Vec<String>>,
    pub crowd_size: usize,
    pub num_crowds: usize,
}

/// Partition run ids into `num_crowds` disjoint crowds of `crowd_size`,
/// uniformly at random and deterministically per seed. Leftover runs are
/// dropped.
pub fn partition_runs(
    run_ids: &[String],
    num_crowds: usize,
    crowd_size: usize,
    seed: u64,
) -> Result<CrowdAssignment, CrowdError> {
    let needed = num_crowds * crowd_size;
    if run_ids.len() < needed {
        return Err(CrowdError::InsufficientRuns {
            needed,
            num_crowds,
            crowd_size,
            got: run_ids.len(),
        });
    }
    let mut shuffled = run_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let crowds = shuffled[..needed]
        .chunks(crowd_size)
        .map(|c| c.to_vec())
        .collect();
    Ok(CrowdAssignment {
        crowds,
        crowd_size,
        num_crowds,
    })
}

/// Per-run binary labels, keyed (run_id, instance_id). The analysis side
/// works entirely from this table instead of re-querying any backend.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    labels: HashMap<(String, String), BinaryLabel>,
}

impl LabelTable {
    pub fn insert(&mut self, run_id: &str, instance_id: &str, label: BinaryLabel) {
        self.labels
            .insert((run_id.to_string(), instance_id.to_string()), label);
    }

    pub fn get(&self, run_id: &str, instance_id: &str) -> Option<BinaryLabel> {
        self.labels
            .get(&(run_id.to_string(), instance_id.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One growing-crowd score curve: entry s holds the report for the majority
/// vote of the first s annotators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub size: usize,
    pub report: ClassificationReport,
}

impl Trajectory {
    pub fn final_macro_f1(&self) -> f64 {
        self.points
            .last()
            .map(|p| p.report.macro_avg_f1)
            .expect("trajectory is non-empty")
    }
}

/// Score the growing crowd over every prefix of `crowd_order`.
///
/// Vote counts are maintained incrementally per instance; each added
/// annotator costs one pass over the gold instances.
pub fn trajectory(
    crowd_order: &[String],
    labels: &LabelTable,
    gold: &SingleLabelDataset,
    rule: TieRule,
) -> Result<Trajectory, CrowdError> {
    if gold.is_empty() {
        return Err(CrowdError::EmptyGold);
    }
    let mut missing = Vec::new();
    for run_id in crowd_order {
        for (inst, _) in &gold.instances {
            if labels.get(run_id, &inst.instance_id).is_none() {
                missing.push((run_id.clone(), inst.instance_id.clone()));
            }
        }
    }
    if !missing.is_empty() {
        return Err(CrowdError::MissingLabels { missing });
    }
    let gold_labels: Vec<BinaryLabel> = gold.instances.iter().map(|&(_, l)| l).collect();
    let mut toxic_counts = vec![0usize; gold.len()];
    let mut points = Vec::with_capacity(crowd_order.len());
    for (s, run_id) in crowd_order.iter().enumerate() {
        for (i, (inst, _)) in gold.instances.iter().enumerate() {
            if labels.get(run_id, &inst.instance_id) == Some(BinaryLabel::Toxic) {
                toxic_counts[i] += 1;
            }
        }
        let size = s + 1;
        let votes: Vec<BinaryLabel> = toxic_counts
            .iter()
            .map(|&toxic| {
                let not_toxic = size - toxic;
                if toxic > not_toxic {
                    BinaryLabel::Toxic
                } else if toxic < not_toxic {
                    BinaryLabel::NotToxic
                } else {
                    break_tie(rule, size)
                }
            })
            .collect();
        let report = metrics::score(&votes, &gold_labels).expect("equal non-empty lengths");
        points.push(TrajectoryPoint { size, report });
    }
    Ok(Trajectory { points })
}

/// Score `n_orders` random orderings of the same crowd. Order i is drawn from
/// a seed mixed per order, so a given (seed, i) pair always yields the same
/// permutation regardless of how many orders are requested.
pub fn permutation_study(
    crowd: &[String],
    n_orders: usize,
    seed: u64,
    labels: &LabelTable,
    gold: &SingleLabelDataset,
    rule: TieRule,
) -> Result<Vec<Trajectory>, CrowdError> {
    let mut trajectories = Vec::with_capacity(n_orders);
    for i in 0..n_orders {
        let mut order = crowd.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &["order", &i.to_string()]));
        order.shuffle(&mut rng);
        trajectories.push(trajectory(&order, labels, gold, rule)?);
    }
    Ok(trajectories)
}
