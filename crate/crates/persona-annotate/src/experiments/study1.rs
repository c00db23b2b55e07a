//! Study 1: does persona prompting widen the distribution of annotations,
//! is a persona's alignment stable across repeats, and how do aggregated
//! crowds behave as they grow?

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::csvio::{self, DiversityRow, StabilityRow, TrajectoryRow};
use super::data;
use super::runs::{self, Campaign};
use super::{CliError, OutputLayout};
use crate::crowd::{self, Trajectory};
use crate::datasets::{BinaryLabel, SingleLabelDataset};
use crate::hashing::mix_seed;
use crate::metrics::{self, ClassificationReport};
use crate::persona::Persona;
use crate::stats::{levene, spearman, CorrelationResult, TestResult};
use crate::store::RunStore;

/// One run scored against the gold labels.
#[derive(Debug, Clone)]
pub struct RunScore {
    pub run_id: String,
    pub persona_id: Option<String>,
    pub report: ClassificationReport,
}

/// Score every run in `run_ids` against the dataset's gold labels. Errors
/// list the first missing (run, instance) key, which signals an incomplete
/// store rather than bad inputs.
pub fn run_scores(
    store: &RunStore,
    run_ids: &[String],
    single: &SingleLabelDataset,
) -> Result<Vec<RunScore>, CliError> {
    let table = store.binary_label_table(run_ids);
    let gold: Vec<BinaryLabel> = single.instances.iter().map(|(_, g)| *g).collect();
    let persona_of: std::collections::HashMap<&str, Option<&str>> = store
        .records()
        .iter()
        .map(|r| (r.run_id.as_str(), r.persona_id.as_deref()))
        .collect();
    let mut scores = Vec::with_capacity(run_ids.len());
    for run_id in run_ids {
        let mut pred = Vec::with_capacity(single.instances.len());
        for (instance, _) in &single.instances {
            let label = table.get(run_id, &instance.instance_id).ok_or_else(|| {
                CliError::Runtime(format!(
                    "run store incomplete: no label for ({run_id}, {})",
                    instance.instance_id
                ))
            })?;
            pred.push(label);
        }
        scores.push(RunScore {
            run_id: run_id.clone(),
            persona_id: persona_of.get(run_id.as_str()).copied().flatten().map(str::to_string),
            report: metrics::score(&pred, &gold)?,
        });
    }
    Ok(scores)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two points.
fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmSummary {
    pub n: usize,
    pub mean_macro_f1: f64,
    pub variance_macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub levene: TestResult,
    pub alpha: f64,
    pub reject_equal_variances: bool,
    pub persona_arm: ArmSummary,
    pub baseline_arm: ArmSummary,
}

pub struct DiversityReport {
    pub persona_scores: Vec<RunScore>,
    pub baseline_scores: Vec<RunScore>,
    pub summary: DiversitySummary,
}

/// Compare macro-F1 spread between persona-prompted and baseline runs.
pub fn diversity_analysis(
    persona_scores: Vec<RunScore>,
    baseline_scores: Vec<RunScore>,
    config: &ExperimentConfig,
) -> Result<DiversityReport, CliError> {
    let persona_f1: Vec<f64> = persona_scores.iter().map(|s| s.report.macro_avg_f1).collect();
    let baseline_f1: Vec<f64> = baseline_scores.iter().map(|s| s.report.macro_avg_f1).collect();
    let test = levene(&persona_f1, &baseline_f1, config.stats.levene_center)?;
    let summary = DiversitySummary {
        reject_equal_variances: test.p_value < config.stats.alpha_variance,
        alpha: config.stats.alpha_variance,
        persona_arm: ArmSummary {
            n: persona_f1.len(),
            mean_macro_f1: mean(&persona_f1),
            variance_macro_f1: variance(&persona_f1),
        },
        baseline_arm: ArmSummary {
            n: baseline_f1.len(),
            mean_macro_f1: mean(&baseline_f1),
            variance_macro_f1: variance(&baseline_f1),
        },
        levene: test,
    };
    Ok(DiversityReport { persona_scores, baseline_scores, summary })
}

fn diversity_rows(report: &DiversityReport) -> Vec<DiversityRow> {
    let row = |arm: &str, score: &RunScore| DiversityRow {
        arm: arm.to_string(),
        run_id: score.run_id.clone(),
        persona_id: score.persona_id.clone().unwrap_or_default(),
        macro_f1: score.report.macro_avg_f1,
        accuracy: score.report.accuracy,
        weighted_f1: score.report.weighted_avg_f1,
    };
    report
        .persona_scores
        .iter()
        .map(|s| row("persona", s))
        .chain(report.baseline_scores.iter().map(|s| row("baseline", s)))
        .collect()
}

/// End-to-end `study1 diversity`: ensure both run campaigns, score, test,
/// and write artifacts. Returns a one-line human summary.
pub fn cmd_diversity(config: &ExperimentConfig) -> Result<String, CliError> {
    let sampled = data::sampled_personas(config)?;
    let single = data::load_single(config)?;
    let world = data::build_world(&sampled, Some(&single), None);
    let backend = data::build_backend(config, world)?;
    let persona_campaign = runs::diversity_persona_campaign(&sampled, &single);
    let baseline_campaign = runs::baseline_campaign(config.study1.n_baseline_runs, &single);
    let persona_store = runs::ensure_runs(config, &persona_campaign, backend.as_ref())?.store;
    let baseline_store = runs::ensure_runs(config, &baseline_campaign, backend.as_ref())?.store;

    let report = diversity_analysis(
        run_scores(&persona_store, &persona_campaign.run_ids(), &single)?,
        run_scores(&baseline_store, &baseline_campaign.run_ids(), &single)?,
        config,
    )?;
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.study1_dir())?;
    csvio::write_rows(&layout.study1_dir().join("diversity.csv"), &diversity_rows(&report))?;
    csvio::write_json(&layout.study1_dir().join("diversity_summary.json"), &report.summary)?;
    Ok(format!(
        "study1 diversity: {} persona + {} baseline runs; macro-F1 variance {:.6} vs {:.6}; \
         Levene W={:.4}, p={:.3e}{}",
        report.summary.persona_arm.n,
        report.summary.baseline_arm.n,
        report.summary.persona_arm.variance_macro_f1,
        report.summary.baseline_arm.variance_macro_f1,
        report.summary.levene.statistic,
        report.summary.levene.p_value,
        if report.summary.reject_equal_variances {
            " (variances differ)"
        } else {
            " (no difference detected)"
        }
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumMember {
    /// "lowest", "median", or "highest".
    pub stratum: String,
    pub persona_id: String,
    pub first_run_macro_f1: f64,
}

/// Pick the three strata for the stability rerun: the s weakest personas by
/// macro-F1, the s personas whose ranks sit closest to the median rank, and
/// the s strongest. Ranks are over (macro-F1, persona id), so selection is
/// deterministic under F1 ties.
pub fn select_strata(
    persona_scores: &[RunScore],
    stratum_size: usize,
) -> Result<Vec<StratumMember>, CliError> {
    let n = persona_scores.len();
    let s = stratum_size;
    if 3 * s > n {
        return Err(CliError::Validation(format!(
            "stability strata need 3 x stratum_size <= n_personas, got 3 x {s} > {n}"
        )));
    }
    let mut ranked: Vec<(&RunScore, &str)> = persona_scores
        .iter()
        .map(|score| {
            (score, score.persona_id.as_deref().unwrap_or(score.run_id.as_str()))
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.report
            .macro_avg_f1
            .partial_cmp(&b.0.report.macro_avg_f1)
            .unwrap()
            .then_with(|| a.1.cmp(b.1))
    });
    let member = |stratum: &str, (score, pid): (&RunScore, &str)| StratumMember {
        stratum: stratum.to_string(),
        persona_id: pid.to_string(),
        first_run_macro_f1: score.report.macro_avg_f1,
    };
    let mut selected: Vec<StratumMember> =
        ranked[..s].iter().map(|&r| member("lowest", r)).collect();
    // Median stratum: the s ranks nearest the central rank. Comparing
    // |2i - (n-1)| keeps the distance integral and exact.
    let mut by_center: Vec<(usize, &(&RunScore, &str))> = ranked.iter().enumerate().collect();
    by_center.sort_by_key(|(i, r)| (((2 * *i) as i64 - (n - 1) as i64).unsigned_abs(), r.1));
    let mut median: Vec<(usize, &(&RunScore, &str))> = by_center[..s].to_vec();
    median.sort_by_key(|(i, _)| *i);
    selected.extend(median.into_iter().map(|(_, &r)| member("median", r)));
    selected.extend(ranked[n - s..].iter().map(|&r| member("highest", r)));
    Ok(selected)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub stratum_size: usize,
    pub repeats: usize,
    /// First-run F1 ranking vs mean-of-repeats ranking across all selected
    /// personas.
    pub rank_correlation: CorrelationResult,
}

pub struct StabilityReport {
    pub members: Vec<StratumMember>,
    /// Per selected persona, macro-F1 of each repeat, in repeat order.
    pub repeat_scores: Vec<Vec<f64>>,
    pub summary: StabilitySummary,
}

pub fn stability_analysis(
    members: Vec<StratumMember>,
    stability_store: &RunStore,
    repeats: usize,
    single: &SingleLabelDataset,
    stratum_size: usize,
) -> Result<StabilityReport, CliError> {
    let mut repeat_scores = Vec::with_capacity(members.len());
    for member in &members {
        let run_ids: Vec<String> =
            (0..repeats).map(|rep| format!("st:{}:{rep}", member.persona_id)).collect();
        let scores = run_scores(stability_store, &run_ids, single)?;
        repeat_scores.push(scores.iter().map(|s| s.report.macro_avg_f1).collect::<Vec<f64>>());
    }
    let first: Vec<f64> = members.iter().map(|m| m.first_run_macro_f1).collect();
    let means: Vec<f64> = repeat_scores.iter().map(|r| mean(r)).collect();
    let rank_correlation = spearman(&first, &means)?;
    Ok(StabilityReport {
        members,
        repeat_scores,
        summary: StabilitySummary { stratum_size, repeats, rank_correlation },
    })
}

pub fn cmd_stability(config: &ExperimentConfig) -> Result<String, CliError> {
    let sampled = data::sampled_personas(config)?;
    let single = data::load_single(config)?;
    let world = data::build_world(&sampled, Some(&single), None);
    let backend = data::build_backend(config, world)?;

    // The selection baseline is the diversity persona arm; it must be
    // complete first (and is created here when absent).
    let persona_campaign = runs::diversity_persona_campaign(&sampled, &single);
    let persona_store = runs::ensure_runs(config, &persona_campaign, backend.as_ref())?.store;
    let persona_scores = run_scores(&persona_store, &persona_campaign.run_ids(), &single)?;
    let members = select_strata(&persona_scores, config.study1.stability_strata_size)?;

    let by_id: std::collections::HashMap<&str, &Persona> =
        sampled.iter().map(|p| (p.id.as_str(), p)).collect();
    let selected: Vec<Persona> = members
        .iter()
        .map(|m| (*by_id.get(m.persona_id.as_str()).expect("selected from sampled")).clone())
        .collect();
    let stability_campaign =
        runs::stability_campaign(&selected, config.study1.stability_repeats, &single);
    let stability_store = runs::ensure_runs(config, &stability_campaign, backend.as_ref())?.store;

    let report = stability_analysis(
        members,
        &stability_store,
        config.study1.stability_repeats,
        &single,
        config.study1.stability_strata_size,
    )?;
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.study1_dir())?;
    let mut rows = Vec::new();
    for (member, scores) in report.members.iter().zip(&report.repeat_scores) {
        for (rep, &macro_f1) in scores.iter().enumerate() {
            rows.push(StabilityRow {
                stratum: member.stratum.clone(),
                persona_id: member.persona_id.clone(),
                repeat: rep,
                macro_f1,
            });
        }
    }
    csvio::write_rows(&layout.study1_dir().join("stability.csv"), &rows)?;
    csvio::write_json(&layout.study1_dir().join("stability_summary.json"), &report.summary)?;
    Ok(format!(
        "study1 stability: {} personas x {} repeats; first-run vs mean-of-repeats \
         rank correlation rho={:.4} (p={:.3e})",
        report.members.len(),
        report.summary.repeats,
        report.summary.rank_correlation.rho,
        report.summary.rank_correlation.p_value
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrowdsSummary {
    pub num_crowds: usize,
    pub crowd_size: usize,
    pub n_permutations: usize,
    /// Sizes over which early-trajectory variance is compared.
    pub early_size_cap: usize,
    /// Mean over early sizes of the across-crowd variance of macro-F1.
    pub persona_early_variance: f64,
    pub baseline_early_variance: f64,
    pub persona_final_mean_f1: f64,
    pub baseline_final_mean_f1: f64,
}

pub struct CrowdsReport {
    pub persona_trajectories: Vec<Trajectory>,
    pub baseline_trajectories: Vec<Trajectory>,
    pub permutations: Vec<Trajectory>,
    pub summary: CrowdsSummary,
}

/// Across-crowd variance of macro-F1 at each size up to `cap`, averaged.
fn early_variance(trajectories: &[Trajectory], cap: usize) -> f64 {
    let sizes = trajectories
        .iter()
        .map(|t| t.points.len())
        .min()
        .unwrap_or(0)
        .min(cap);
    if sizes == 0 {
        return 0.0;
    }
    let per_size: Vec<f64> = (0..sizes)
        .map(|i| {
            let f1s: Vec<f64> =
                trajectories.iter().map(|t| t.points[i].report.macro_avg_f1).collect();
            variance(&f1s)
        })
        .collect();
    mean(&per_size)
}

pub fn crowds_analysis(
    persona_store: &RunStore,
    persona_run_ids: &[String],
    baseline_store: &RunStore,
    baseline_run_ids: &[String],
    single: &SingleLabelDataset,
    config: &ExperimentConfig,
) -> Result<CrowdsReport, CliError> {
    let s1 = &config.study1;
    let persona_assignment = crowd::partition_runs(
        persona_run_ids,
        s1.num_crowds,
        s1.crowd_size,
        mix_seed(config.seeds.partition, &["persona"]),
    )?;
    let baseline_assignment = crowd::partition_runs(
        baseline_run_ids,
        s1.num_crowds,
        s1.crowd_size,
        mix_seed(config.seeds.partition, &["baseline"]),
    )?;
    let persona_labels = persona_store.binary_label_table(persona_run_ids);
    let baseline_labels = baseline_store.binary_label_table(baseline_run_ids);
    let mut persona_trajectories = Vec::with_capacity(s1.num_crowds);
    for members in &persona_assignment.crowds {
        persona_trajectories.push(crowd::trajectory(members, &persona_labels, single, s1.tie_rule)?);
    }
    let mut baseline_trajectories = Vec::with_capacity(s1.num_crowds);
    for members in &baseline_assignment.crowds {
        baseline_trajectories.push(crowd::trajectory(
            members,
            &baseline_labels,
            single,
            s1.tie_rule,
        )?);
    }
    // The permutation study reorders the first persona crowd.
    let permutations = crowd::permutation_study(
        &persona_assignment.crowds[0],
        s1.n_permutations,
        config.seeds.permutation,
        &persona_labels,
        single,
        s1.tie_rule,
    )?;
    let early_size_cap = 10usize.min(s1.crowd_size);
    let summary = CrowdsSummary {
        num_crowds: s1.num_crowds,
        crowd_size: s1.crowd_size,
        n_permutations: s1.n_permutations,
        early_size_cap,
        persona_early_variance: early_variance(&persona_trajectories, early_size_cap),
        baseline_early_variance: early_variance(&baseline_trajectories, early_size_cap),
        persona_final_mean_f1: mean(
            &persona_trajectories.iter().map(|t| t.final_macro_f1()).collect::<Vec<f64>>(),
        ),
        baseline_final_mean_f1: mean(
            &baseline_trajectories.iter().map(|t| t.final_macro_f1()).collect::<Vec<f64>>(),
        ),
    };
    Ok(CrowdsReport { persona_trajectories, baseline_trajectories, permutations, summary })
}

fn trajectory_rows(crowd_id: &str, order_id: usize, trajectory: &Trajectory) -> Vec<TrajectoryRow> {
    trajectory
        .points
        .iter()
        .map(|point| TrajectoryRow {
            crowd_id: crowd_id.to_string(),
            order_id,
            size: point.size,
            mavg_f1: point.report.macro_avg_f1,
            accuracy: point.report.accuracy,
            precision_toxic: point.report.toxic.precision,
            recall_toxic: point.report.toxic.recall,
            f1_toxic: point.report.toxic.f1,
            precision_not_toxic: point.report.not_toxic.precision,
            recall_not_toxic: point.report.not_toxic.recall,
            f1_not_toxic: point.report.not_toxic.f1,
            weighted_f1: point.report.weighted_avg_f1,
        })
        .collect()
}

pub fn cmd_crowds(config: &ExperimentConfig) -> Result<String, CliError> {
    let sampled = data::sampled_personas(config)?;
    let single = data::load_single(config)?;
    let world = data::build_world(&sampled, Some(&single), None);
    let backend = data::build_backend(config, world)?;
    let persona_campaign = runs::diversity_persona_campaign(&sampled, &single);
    let baseline_campaign = runs::baseline_campaign(config.study1.n_baseline_runs, &single);
    let persona_store = runs::ensure_runs(config, &persona_campaign, backend.as_ref())?.store;
    let baseline_store = runs::ensure_runs(config, &baseline_campaign, backend.as_ref())?.store;

    let report = crowds_analysis(
        &persona_store,
        &persona_campaign.run_ids(),
        &baseline_store,
        &baseline_campaign.run_ids(),
        &single,
        config,
    )?;
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.study1_dir())?;
    let mut rows = Vec::new();
    for (i, trajectory) in report.persona_trajectories.iter().enumerate() {
        rows.extend(trajectory_rows(&format!("persona:{i}"), 0, trajectory));
    }
    for (i, trajectory) in report.baseline_trajectories.iter().enumerate() {
        rows.extend(trajectory_rows(&format!("baseline:{i}"), 0, trajectory));
    }
    csvio::write_rows(&layout.study1_dir().join("trajectories.csv"), &rows)?;
    let mut perm_rows = Vec::new();
    for (order, trajectory) in report.permutations.iter().enumerate() {
        perm_rows.extend(trajectory_rows("persona:0", order, trajectory));
    }
    csvio::write_rows(&layout.study1_dir().join("permutations.csv"), &perm_rows)?;
    csvio::write_json(&layout.study1_dir().join("crowds_summary.json"), &report.summary)?;
    Ok(format!(
        "study1 crowds: {} + {} trajectories of size {}, {} permutations; early-size \
         variance persona {:.6} vs baseline {:.6}",
        report.persona_trajectories.len(),
        report.baseline_trajectories.len(),
        report.summary.crowd_size,
        report.permutations.len(),
        report.summary.persona_early_variance,
        report.summary.baseline_early_variance
    ))
}

/// Used by both `annotate` and the study commands to describe a campaign's
/// backing store state.
pub fn describe_outcome(campaign: &Campaign, outcome: &runs::EnsureOutcome) -> String {
    format!(
        "campaign {}: {} missing, {} appended, {} records total",
        campaign.name,
        outcome.missing_before,
        outcome.appended,
        outcome.store.records().len()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(pid: &str, f1: f64) -> RunScore {
        RunScore {
            run_id: format!("s1p:{pid}"),
            persona_id: Some(pid.to_string()),
            report: ClassificationReport {
                toxic: crate::metrics::ClassScores { precision: f1, recall: f1, f1, support: 1 },
                not_toxic: crate::metrics::ClassScores {
                    precision: f1,
                    recall: f1,
                    f1,
                    support: 1,
                },
                accuracy: f1,
                macro_avg_f1: f1,
                weighted_avg_f1: f1,
            },
        }
    }

    #[test]
    fn strata_are_disjoint_and_centered() {
        let scores: Vec<RunScore> =
            (0..90).map(|i| score(&format!("p{i:02}"), i as f64 / 100.0)).collect();
        let members = select_strata(&scores, 30).unwrap();
        assert_eq!(members.len(), 90);
        let lowest: Vec<&str> = members
            .iter()
            .filter(|m| m.stratum == "lowest")
            .map(|m| m.persona_id.as_str())
            .collect();
        let median: Vec<&str> = members
            .iter()
            .filter(|m| m.stratum == "median")
            .map(|m| m.persona_id.as_str())
            .collect();
        let highest: Vec<&str> = members
            .iter()
            .filter(|m| m.stratum == "highest")
            .map(|m| m.persona_id.as_str())
            .collect();
        assert_eq!(lowest.len(), 30);
        assert_eq!(median.len(), 30);
        assert_eq!(highest.len(), 30);
        // With 90 personas and strata of 30 the split is exact thirds.
        assert_eq!(lowest[0], "p00");
        assert_eq!(median[0], "p30");
        assert_eq!(median[29], "p59");
        assert_eq!(highest[29], "p89");
        let mut all: Vec<&str> = members.iter().map(|m| m.persona_id.as_str()).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 90, "strata overlap");
    }

    #[test]
    fn strata_selection_rejects_oversized_request() {
        let scores: Vec<RunScore> = (0..8).map(|i| score(&format!("p{i}"), 0.5)).collect();
        assert!(matches!(select_strata(&scores, 3), Err(CliError::Validation(_))));
        assert!(select_strata(&scores, 2).is_ok());
    }

    #[test]
    fn tied_f1_breaks_by_persona_id() {
        let scores: Vec<RunScore> = vec![
            score("pz", 0.5),
            score("pa", 0.5),
            score("pm", 0.5),
            score("pb", 0.1),
            score("pc", 0.9),
            score("pd", 0.5),
        ];
        let members = select_strata(&scores, 2).unwrap();
        let lowest: Vec<&str> = members
            .iter()
            .filter(|m| m.stratum == "lowest")
            .map(|m| m.persona_id.as_str())
            .collect();
        // pb has the lowest F1; among the 0.5 ties pa sorts first by id.
        assert_eq!(lowest, vec!["pb", "pa"]);
    }

    #[test]
    fn variance_of_near_constant_input_is_tiny() {
        // Two-pass variance leaves only rounding dust on constant input.
        assert!(variance(&[0.4, 0.4, 0.4]) < 1e-30);
        assert_eq!(variance(&[0.7]), 0.0);
        assert!((variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-12);
    }
}
