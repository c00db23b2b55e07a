//! Study 2: compare what personas say about themselves (description
//! embeddings) with how they annotate (likert rating vectors), then probe
//! identity-marker injection on templated personas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::csvio::{self, CorrelationRow, DiffRow, MemberRow, ShiftRow, TermRow};
use super::data;
use super::runs;
use super::{CliError, OutputLayout};
use crate::datasets::{Instance, MultiLabelDataset, SingleLabelDataset, SubsetTag};
use crate::embedding::cluster::{
    cluster_distance_matrix, cluster_top_terms, kmeans, threshold_cluster, ClusterDistanceMatrix,
    Clustering, KmeansOutcome, Normalize,
};
use crate::embedding::{
    cross_space_correlations, embed_personas, label_vectors, LabelVector, LikertTable,
    PersonaEmbedding,
};
use crate::persona::{Persona, PersonaVariantSet};
use crate::stats::{
    significance_summary, wilcoxon_rank_sum, SignificanceSummary, StatConfig, TestResult,
};
use crate::store::RunStore;

/// How many distinguishing terms the cluster summaries list per cluster.
const TOP_TERMS_PER_CLUSTER: usize = 10;

/// The two vector views of one persona sample.
pub struct Spaces {
    /// Description embeddings, in sampled-persona order.
    pub persona_space: Vec<PersonaEmbedding>,
    /// Per-persona likert vectors over the shared instance set, sorted by
    /// persona id.
    pub label_space: Vec<LabelVector>,
}

/// Everything the likert-rating commands share: the sample, the dataset, and
/// a complete run store.
struct LikertData {
    sampled: Vec<Persona>,
    multi: MultiLabelDataset,
    store: RunStore,
    run_ids: Vec<String>,
}

fn ensure_likert(config: &ExperimentConfig) -> Result<LikertData, CliError> {
    let sampled = data::sampled_personas(config)?;
    let multi = data::load_multi(config)?;
    let world = data::build_world(&sampled, None, Some(&multi));
    let backend = data::build_backend(config, world)?;
    let campaign = runs::likert_campaign(&sampled, &multi);
    let store = runs::ensure_runs(config, &campaign, backend.as_ref())?.store;
    Ok(LikertData { run_ids: campaign.run_ids(), sampled, multi, store })
}

fn build_spaces(config: &ExperimentConfig, likert: &LikertData) -> Result<Spaces, CliError> {
    let provider = data::build_embedder(config)?;
    let persona_space = embed_personas(&likert.sampled, provider.as_ref())?;
    let table = runs::likert_table(&likert.store, &likert.run_ids)?;
    let label_space = label_vectors(&table, &likert.multi)?;
    Ok(Spaces { persona_space, label_space })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub n_personas: usize,
    pub persona_dim: usize,
    pub label_dim: usize,
}

pub fn cmd_embed(config: &ExperimentConfig) -> Result<String, CliError> {
    let likert = ensure_likert(config)?;
    let spaces = build_spaces(config, &likert)?;
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.study2_dir())?;

    let persona_dim = spaces.persona_space.first().map_or(0, |e| e.vector.len());
    let dim_names: Vec<String> = (0..persona_dim).map(|i| format!("d{i}")).collect();
    let persona_rows: Vec<(String, Vec<f64>)> = spaces
        .persona_space
        .iter()
        .map(|e| (e.persona_id.clone(), e.vector.clone()))
        .collect();
    csvio::write_vector_table(
        &layout.study2_dir().join("persona_space.csv"),
        "persona_id",
        &dim_names,
        &persona_rows,
    )?;

    let instance_names: Vec<String> =
        likert.multi.instances.iter().map(|i| i.instance_id.clone()).collect();
    let label_rows: Vec<(String, Vec<f64>)> = spaces
        .label_space
        .iter()
        .map(|v| (v.persona_id.clone(), v.vector.clone()))
        .collect();
    csvio::write_vector_table(
        &layout.study2_dir().join("label_space.csv"),
        "persona_id",
        &instance_names,
        &label_rows,
    )?;

    let summary = EmbedSummary {
        n_personas: spaces.persona_space.len(),
        persona_dim,
        label_dim: instance_names.len(),
    };
    csvio::write_json(&layout.study2_dir().join("embed_summary.json"), &summary)?;
    Ok(format!(
        "study2 embed: {} personas into {}-dim description space and {}-dim rating space",
        summary.n_personas, summary.persona_dim, summary.label_dim
    ))
}

/// Raw-matrix contrast between within-cluster and between-cluster distances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixContrast {
    pub mean_diagonal: f64,
    /// None when there are fewer than two clusters.
    pub mean_off_diagonal: Option<f64>,
    /// True when within-cluster distances average lower than between-cluster
    /// ones, the signature of structure that survives the space swap.
    pub within_lower_than_between: Option<bool>,
}

fn matrix_contrast(matrix: &ClusterDistanceMatrix) -> MatrixContrast {
    let k = matrix.cluster_ids.len();
    let mut diag = Vec::with_capacity(k);
    let mut off = Vec::new();
    for (i, row) in matrix.values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i == j {
                diag.push(v);
            } else {
                off.push(v);
            }
        }
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mean_diagonal = if diag.is_empty() { 0.0 } else { mean(&diag) };
    let mean_off_diagonal = if off.is_empty() { None } else { Some(mean(&off)) };
    MatrixContrast {
        mean_diagonal,
        mean_off_diagonal,
        within_lower_than_between: mean_off_diagonal.map(|m| mean_diagonal < m),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub n_personas: usize,
    pub persona_cluster_count: usize,
    pub persona_retained: usize,
    pub persona_unassigned: usize,
    pub persona_cluster_sizes: Vec<usize>,
    pub label_k: usize,
    pub label_iterations: usize,
    pub label_final_objective: f64,
    /// Description clusters measured by rating-vector distances.
    pub persona_clusters_in_label_space: MatrixContrast,
    /// Rating clusters measured by description-vector distances.
    pub label_clusters_in_persona_space: MatrixContrast,
}

fn member_rows(clustering: &Clustering) -> Vec<MemberRow> {
    let mut rows = Vec::new();
    for cluster in &clustering.clusters {
        for member in &cluster.member_ids {
            rows.push(MemberRow {
                cluster_id: cluster.cluster_id.clone(),
                persona_id: member.clone(),
            });
        }
    }
    for member in &clustering.unassigned {
        rows.push(MemberRow { cluster_id: "unassigned".into(), persona_id: member.clone() });
    }
    rows
}

fn term_rows(terms: &[(String, Vec<(String, f64)>)]) -> Vec<TermRow> {
    let mut rows = Vec::new();
    for (cluster_id, ranked) in terms {
        for (rank, (term, weight)) in ranked.iter().enumerate() {
            rows.push(TermRow {
                cluster_id: cluster_id.clone(),
                rank,
                term: term.clone(),
                weight: *weight,
            });
        }
    }
    rows
}

fn space_map(ids: &[String], vectors: &[&Vec<f64>]) -> BTreeMap<String, Vec<f64>> {
    ids.iter().cloned().zip(vectors.iter().map(|v| (*v).clone())).collect()
}

pub fn cmd_cluster(config: &ExperimentConfig) -> Result<String, CliError> {
    let likert = ensure_likert(config)?;
    let spaces = build_spaces(config, &likert)?;
    let s2 = &config.study2;

    let persona_clustering =
        threshold_cluster(&spaces.persona_space, s2.cluster_threshold, s2.cluster_min_size)?;
    // The rating vectors reuse the clustering machinery's input type; only
    // the id and vector matter.
    let label_points: Vec<PersonaEmbedding> = spaces
        .label_space
        .iter()
        .map(|v| PersonaEmbedding { persona_id: v.persona_id.clone(), vector: v.vector.clone() })
        .collect();
    let label_outcome: KmeansOutcome = kmeans(
        &label_points,
        s2.label_kmeans_k,
        config.seeds.clustering,
        s2.kmeans_max_iters,
    )?;

    let persona_ids: Vec<String> =
        spaces.persona_space.iter().map(|e| e.persona_id.clone()).collect();
    let persona_vecs: Vec<&Vec<f64>> = spaces.persona_space.iter().map(|e| &e.vector).collect();
    let label_ids: Vec<String> = spaces.label_space.iter().map(|v| v.persona_id.clone()).collect();
    let label_vecs: Vec<&Vec<f64>> = spaces.label_space.iter().map(|v| &v.vector).collect();
    let persona_map = space_map(&persona_ids, &persona_vecs);
    let label_map = space_map(&label_ids, &label_vecs);

    // Each clustering is evaluated in the opposite space: if description
    // clusters stay tight under rating distances (and vice versa), the two
    // views agree about who resembles whom.
    let persona_in_label =
        cluster_distance_matrix(&persona_clustering, &label_map, Normalize::None)?;
    let persona_in_label_norm =
        cluster_distance_matrix(&persona_clustering, &label_map, Normalize::RowMinmax)?;
    let label_in_persona =
        cluster_distance_matrix(&label_outcome.clustering, &persona_map, Normalize::None)?;
    let label_in_persona_norm =
        cluster_distance_matrix(&label_outcome.clustering, &persona_map, Normalize::RowMinmax)?;

    let descriptions: BTreeMap<String, String> =
        likert.sampled.iter().map(|p| (p.id.clone(), p.description.clone())).collect();
    let persona_terms = cluster_top_terms(&persona_clustering, &descriptions, TOP_TERMS_PER_CLUSTER);
    let label_terms =
        cluster_top_terms(&label_outcome.clustering, &descriptions, TOP_TERMS_PER_CLUSTER);

    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.study2_dir())?;
    let dir = layout.study2_dir();
    csvio::write_rows(&dir.join("persona_clusters.csv"), &member_rows(&persona_clustering))?;
    csvio::write_rows(&dir.join("label_clusters.csv"), &member_rows(&label_outcome.clustering))?;
    csvio::write_rows(&dir.join("persona_cluster_terms.csv"), &term_rows(&persona_terms))?;
    csvio::write_rows(&dir.join("label_cluster_terms.csv"), &term_rows(&label_terms))?;
    csvio::write_matrix(&dir.join("persona_cluster_distances.csv"), &persona_in_label)?;
    csvio::write_matrix(
        &dir.join("persona_cluster_distances_rownorm.csv"),
        &persona_in_label_norm,
    )?;
    csvio::write_matrix(&dir.join("label_cluster_distances.csv"), &label_in_persona)?;
    csvio::write_matrix(&dir.join("label_cluster_distances_rownorm.csv"), &label_in_persona_norm)?;

    let summary = ClusterSummary {
        n_personas: spaces.persona_space.len(),
        persona_cluster_count: persona_clustering.clusters.len(),
        persona_retained: persona_clustering.retained(),
        persona_unassigned: persona_clustering.unassigned.len(),
        persona_cluster_sizes: persona_clustering.clusters.iter().map(|c| c.len()).collect(),
        label_k: s2.label_kmeans_k,
        label_iterations: label_outcome.iterations,
        label_final_objective: *label_outcome
            .objective_trace
            .last()
            .expect("kmeans records at least one pass"),
        persona_clusters_in_label_space: matrix_contrast(&persona_in_label),
        label_clusters_in_persona_space: matrix_contrast(&label_in_persona),
    };
    csvio::write_json(&dir.join("cluster_summary.json"), &summary)?;
    Ok(format!(
        "study2 cluster: {} description clusters ({} retained, {} unassigned) and k={} \
         rating clusters in {} iterations",
        summary.persona_cluster_count,
        summary.persona_retained,
        summary.persona_unassigned,
        summary.label_k,
        summary.label_iterations
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub n_personas: usize,
    pub n_defined: usize,
    /// Mean rho over personas with a defined correlation; None when none are.
    pub mean_rho: Option<f64>,
    pub alpha: f64,
    pub significance: SignificanceSummary,
}

pub fn correlation_rows(
    persona_space: &[PersonaEmbedding],
    label_space: &[LabelVector],
    stats: &StatConfig,
) -> Result<(Vec<CorrelationRow>, CorrelationSummary), CliError> {
    let associations = cross_space_correlations(persona_space, label_space)?;
    let profile_len = persona_space.len().saturating_sub(1);
    let rows: Vec<CorrelationRow> = associations
        .iter()
        .map(|a| match &a.correlation {
            Some(c) => CorrelationRow {
                persona_id: a.persona_id.clone(),
                defined: true,
                rho: Some(c.rho),
                p_value: Some(c.p_value),
                n: c.n,
            },
            None => CorrelationRow {
                persona_id: a.persona_id.clone(),
                defined: false,
                rho: None,
                p_value: None,
                n: profile_len,
            },
        })
        .collect();
    let defined: Vec<_> = associations.iter().filter_map(|a| a.correlation).collect();
    let summary = CorrelationSummary {
        n_personas: associations.len(),
        n_defined: defined.len(),
        mean_rho: if defined.is_empty() {
            None
        } else {
            Some(defined.iter().map(|c| c.rho).sum::<f64>() / defined.len() as f64)
        },
        alpha: stats.alpha_shift,
        significance: significance_summary(&defined, stats.alpha_shift),
    };
    Ok((rows, summary))
}

pub fn cmd_correlate(config: &ExperimentConfig) -> Result<String, CliError> {
    let likert = ensure_likert(config)?;
    let spaces = build_spaces(config, &likert)?;
    let (rows, summary) =
        correlation_rows(&spaces.persona_space, &spaces.label_space, &config.stats)?;
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.study2_dir())?;
    csvio::write_rows(&layout.study2_dir().join("correlations.csv"), &rows)?;
    csvio::write_json(&layout.study2_dir().join("correlations_summary.json"), &summary)?;
    Ok(format!(
        "study2 correlate: {}/{} defined; {:.1}% significant at alpha={}, mean rho {}",
        summary.n_defined,
        summary.n_personas,
        summary.significance.frac_significant * 100.0,
        summary.alpha,
        summary.mean_rho.map_or("undefined".to_string(), |r| format!("{r:.4}"))
    ))
}

/// Marker-experiment inputs: templated variants, the marker instances, and a
/// complete likert table over (variant, instance).
pub struct MarkerData {
    pub sets: Vec<PersonaVariantSet>,
    pub markers: SingleLabelDataset,
    pub subsets: Vec<SubsetTag>,
    pub table: LikertTable,
}

fn ensure_markers(config: &ExperimentConfig) -> Result<MarkerData, CliError> {
    let sets = data::variant_sets(config)?;
    if sets.is_empty() {
        return Err(CliError::Validation("no persona templates to expand".into()));
    }
    let single = data::load_single(config)?;
    let markers = data::marker_instances(&single);
    let subsets = data::present_subsets(&markers);
    if subsets.is_empty() {
        return Err(CliError::Validation(
            "no instances tagged aae or anti_black; marker analysis has nothing to measure".into(),
        ));
    }
    let variants: Vec<Persona> = sets
        .iter()
        .flat_map(|s| [s.neutral.clone(), s.black.clone(), s.conservative.clone()])
        .collect();
    let world = data::build_world(&variants, Some(&markers), None);
    let backend = data::build_backend(config, world)?;
    let campaign = runs::marker_campaign(&sets, &markers);
    let store = runs::ensure_runs(config, &campaign, backend.as_ref())?.store;
    let table = runs::likert_table(&store, &campaign.run_ids())?;
    Ok(MarkerData { sets, markers, subsets, table })
}

fn subset_instances<'d>(markers: &'d SingleLabelDataset, tag: SubsetTag) -> Vec<&'d Instance> {
    markers
        .instances
        .iter()
        .map(|(instance, _)| instance)
        .filter(|i| i.subsets.contains(&tag))
        .collect()
}

fn rating(table: &LikertTable, persona_id: &str, instance_id: &str) -> Result<f64, CliError> {
    table.get(persona_id, instance_id).map(f64::from).ok_or_else(|| {
        CliError::Runtime(format!(
            "run store incomplete: no likert rating for ({persona_id}, {instance_id})"
        ))
    })
}

/// Mean rating a persona gives the instances of one subset.
fn subset_level(
    table: &LikertTable,
    persona: &Persona,
    instances: &[&Instance],
) -> Result<f64, CliError> {
    let mut total = 0.0;
    for instance in instances {
        total += rating(table, &persona.id, &instance.instance_id)?;
    }
    Ok(total / instances.len() as f64)
}

/// Per template, group, and subset: the neutral level, the marked level, and
/// their difference.
pub fn marker_shift_rows(data: &MarkerData) -> Result<Vec<ShiftRow>, CliError> {
    let mut rows = Vec::new();
    for set in &data.sets {
        for subset in &data.subsets {
            let instances = subset_instances(&data.markers, *subset);
            if instances.is_empty() {
                continue;
            }
            let neutral_level = subset_level(&data.table, &set.neutral, &instances)?;
            for (group, persona) in [("black", &set.black), ("conservative", &set.conservative)] {
                let variant_level = subset_level(&data.table, persona, &instances)?;
                rows.push(ShiftRow {
                    template_id: set.template_id.clone(),
                    group: group.into(),
                    subset: subset.to_string(),
                    neutral_level,
                    variant_level,
                    shift: variant_level - neutral_level,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerEffect {
    pub group: String,
    pub subset: String,
    pub mean_shift: f64,
    /// Marked levels vs neutral levels, paired across templates.
    pub test: TestResult,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerContrast {
    pub subset: String,
    pub mean_black_shift: f64,
    pub mean_conservative_shift: f64,
    /// Black shifts vs conservative shifts across templates.
    pub test: TestResult,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkersSummary {
    pub n_templates: usize,
    pub n_marker_instances: usize,
    pub alpha: f64,
    pub effects: Vec<MarkerEffect>,
    pub contrasts: Vec<MarkerContrast>,
}

pub fn marker_summary(
    data: &MarkerData,
    rows: &[ShiftRow],
    stats: &StatConfig,
) -> Result<MarkersSummary, CliError> {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut effects = Vec::new();
    let mut contrasts = Vec::new();
    for subset in &data.subsets {
        let subset_name = subset.to_string();
        let mut shifts_by_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for group in ["black", "conservative"] {
            let group_rows: Vec<&ShiftRow> = rows
                .iter()
                .filter(|r| r.group == group && r.subset == subset_name)
                .collect();
            if group_rows.is_empty() {
                continue;
            }
            let variant: Vec<f64> = group_rows.iter().map(|r| r.variant_level).collect();
            let neutral: Vec<f64> = group_rows.iter().map(|r| r.neutral_level).collect();
            let shifts: Vec<f64> = group_rows.iter().map(|r| r.shift).collect();
            let test = wilcoxon_rank_sum(&variant, &neutral, stats.wilcoxon_exact_threshold)?;
            effects.push(MarkerEffect {
                group: group.into(),
                subset: subset_name.clone(),
                mean_shift: mean(&shifts),
                significant: test.p_value < stats.alpha_shift,
                test,
            });
            shifts_by_group.insert(group, shifts);
        }
        if let (Some(black), Some(conservative)) =
            (shifts_by_group.get("black"), shifts_by_group.get("conservative"))
        {
            let test = wilcoxon_rank_sum(black, conservative, stats.wilcoxon_exact_threshold)?;
            contrasts.push(MarkerContrast {
                subset: subset_name,
                mean_black_shift: mean(black),
                mean_conservative_shift: mean(conservative),
                significant: test.p_value < stats.alpha_shift,
                test,
            });
        }
    }
    Ok(MarkersSummary {
        n_templates: data.sets.len(),
        n_marker_instances: data.markers.instances.len(),
        alpha: stats.alpha_shift,
        effects,
        contrasts,
    })
}

pub fn cmd_markers(config: &ExperimentConfig) -> Result<String, CliError> {
    let data = ensure_markers(config)?;
    let rows = marker_shift_rows(&data)?;
    let summary = marker_summary(&data, &rows, &config.stats)?;
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.study2_dir())?;
    csvio::write_rows(&layout.study2_dir().join("shifts.csv"), &rows)?;
    csvio::write_json(&layout.study2_dir().join("markers_summary.json"), &summary)?;
    let headline = summary
        .effects
        .iter()
        .map(|e| {
            format!(
                "{}/{}: {}{:.3} (p={:.3})",
                e.group,
                e.subset,
                if e.mean_shift >= 0.0 { "+" } else { "" },
                e.mean_shift,
                e.test.p_value
            )
        })
        .collect::<Vec<String>>()
        .join(", ");
    Ok(format!(
        "study2 markers: {} templates x {} instances; {}",
        summary.n_templates, summary.n_marker_instances, headline
    ))
}

/// Per subset, the instances where black-marked and conservative-marked
/// variants disagree the most: mean rating per group (over templates), the
/// gap, and the text itself, strongest gaps first.
pub fn diff_rows(data: &MarkerData, top_k: usize) -> Result<Vec<DiffRow>, CliError> {
    let mut out = Vec::new();
    for subset in &data.subsets {
        let mut rows = Vec::new();
        for instance in subset_instances(&data.markers, *subset) {
            let mut black_total = 0.0;
            let mut conservative_total = 0.0;
            for set in &data.sets {
                black_total += rating(&data.table, &set.black.id, &instance.instance_id)?;
                conservative_total +=
                    rating(&data.table, &set.conservative.id, &instance.instance_id)?;
            }
            let n = data.sets.len() as f64;
            let mu_black = black_total / n;
            let mu_conservative = conservative_total / n;
            rows.push(DiffRow {
                subset: subset.to_string(),
                instance_id: instance.instance_id.clone(),
                text: instance.text.clone(),
                mu_black,
                mu_conservative,
                diff: mu_black - mu_conservative,
            });
        }
        rows.sort_by(|a, b| {
            b.diff
                .abs()
                .partial_cmp(&a.diff.abs())
                .unwrap()
                .then_with(|| a.instance_id.cmp(&b.instance_id))
        });
        rows.truncate(top_k);
        out.extend(rows);
    }
    Ok(out)
}

pub fn cmd_difftable(config: &ExperimentConfig) -> Result<String, CliError> {
    let data = ensure_markers(config)?;
    let rows = diff_rows(&data, config.study2.top_k_diff)?;
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(&layout.study2_dir())?;
    csvio::write_rows(&layout.study2_dir().join("difftable.csv"), &rows)?;
    Ok(format!(
        "study2 difftable: top {} divergent instances per subset ({} rows)",
        config.study2.top_k_diff,
        rows.len()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::BinaryLabel;
    use std::collections::BTreeSet;

    fn persona(id: &str) -> Persona {
        Persona { id: id.into(), description: format!("test persona {id}") }
    }

    fn variant_set(template_id: &str) -> PersonaVariantSet {
        PersonaVariantSet {
            template_id: template_id.into(),
            neutral: persona(&format!("{template_id}#neutral")),
            black: persona(&format!("{template_id}#black")),
            conservative: persona(&format!("{template_id}#conservative")),
        }
    }

    fn instance(id: &str, tag: SubsetTag) -> (Instance, BinaryLabel) {
        (
            Instance {
                instance_id: id.into(),
                text: format!("text of {id}"),
                subsets: BTreeSet::from([tag]),
            },
            BinaryLabel::Toxic,
        )
    }

    /// Two aae instances, one anti_black instance, 3 templates. Black
    /// variants rate aae exactly one point below neutral; conservative
    /// variants match neutral everywhere.
    fn fixture() -> MarkerData {
        let sets: Vec<PersonaVariantSet> = (0..3).map(|i| variant_set(&format!("t{i}"))).collect();
        let markers = SingleLabelDataset {
            instances: vec![
                instance("i1", SubsetTag::Aae),
                instance("i2", SubsetTag::Aae),
                instance("i3", SubsetTag::AntiBlack),
            ],
        };
        let mut table = LikertTable::new();
        for (t, set) in sets.iter().enumerate() {
            let base = 3 + (t as u8 % 2);
            for id in ["i1", "i2", "i3"] {
                table.insert(&set.neutral.id, id, base);
                table.insert(&set.conservative.id, id, base);
                let black = if id == "i3" { base } else { base - 1 };
                table.insert(&set.black.id, id, black);
            }
        }
        MarkerData {
            sets,
            markers,
            subsets: vec![SubsetTag::AntiBlack, SubsetTag::Aae],
            table,
        }
    }

    #[test]
    fn shift_rows_recover_injected_offsets() {
        let data = fixture();
        let rows = marker_shift_rows(&data).unwrap();
        // 3 templates x 2 subsets x 2 groups.
        assert_eq!(rows.len(), 12);
        for row in &rows {
            let expected = if row.group == "black" && row.subset == "aae" { -1.0 } else { 0.0 };
            assert!(
                (row.shift - expected).abs() < 1e-12,
                "{}/{}/{}: shift {}",
                row.template_id,
                row.group,
                row.subset,
                row.shift
            );
            assert!((row.variant_level - row.neutral_level - row.shift).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_flags_only_the_real_effect() {
        let data = fixture();
        let rows = marker_shift_rows(&data).unwrap();
        let summary = marker_summary(&data, &rows, &StatConfig::default()).unwrap();
        assert_eq!(summary.n_templates, 3);
        assert_eq!(summary.effects.len(), 4);
        for effect in &summary.effects {
            let is_real = effect.group == "black" && effect.subset == "aae";
            assert!(
                (effect.mean_shift - if is_real { -1.0 } else { 0.0 }).abs() < 1e-12,
                "{}/{}: mean shift {}",
                effect.group,
                effect.subset,
                effect.mean_shift
            );
            if !is_real {
                // Identical samples cannot look significant.
                assert!(!effect.significant, "{}/{} flagged", effect.group, effect.subset);
            }
        }
        // Three templates are too few for p < 0.05 even with perfect
        // separation (exact two-sided floor is 0.1), so the aae effect shows
        // up in the mean but not the flag.
        let aae_black =
            summary.effects.iter().find(|e| e.group == "black" && e.subset == "aae").unwrap();
        assert!(aae_black.test.p_value < 0.2);
        let aae_contrast = summary.contrasts.iter().find(|c| c.subset == "aae").unwrap();
        assert_eq!(aae_contrast.mean_black_shift, -1.0);
        assert_eq!(aae_contrast.mean_conservative_shift, 0.0);
    }

    #[test]
    fn diff_rows_rank_by_absolute_gap_and_flip_with_groups() {
        let mut data = fixture();
        // Make i2's gap larger than i1's: black rates i2 two lower instead
        // of one on every template.
        for set in data.sets.clone() {
            let neutral = data.table.get(&set.neutral.id, "i2").unwrap();
            data.table.insert(&set.black.id, "i2", neutral - 2);
        }
        let rows = diff_rows(&data, 5).unwrap();
        // anti_black first (subset order), then aae sorted by gap size.
        assert_eq!(rows[0].subset, "anti_black");
        assert_eq!(rows[0].instance_id, "i3");
        assert!((rows[0].diff - 0.0).abs() < 1e-12);
        assert_eq!(rows[1].instance_id, "i2");
        assert!((rows[1].diff - -2.0).abs() < 1e-12);
        assert_eq!(rows[2].instance_id, "i1");
        assert!((rows[2].diff - -1.0).abs() < 1e-12);
        assert_eq!(rows[1].text, "text of i2");

        // Swapping the two groups' ratings negates every gap.
        let mut swapped = fixture();
        for set in swapped.sets.clone() {
            for id in ["i1", "i2", "i3"] {
                let b = swapped.table.get(&set.black.id, id).unwrap();
                let c = swapped.table.get(&set.conservative.id, id).unwrap();
                swapped.table.insert(&set.black.id, id, c);
                swapped.table.insert(&set.conservative.id, id, b);
            }
        }
        let base = diff_rows(&fixture(), 5).unwrap();
        let flipped = diff_rows(&swapped, 5).unwrap();
        for (a, b) in base.iter().zip(&flipped) {
            assert_eq!(a.instance_id, b.instance_id);
            assert!((a.diff + b.diff).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_keeps_top_k_per_subset() {
        let data = fixture();
        let rows = diff_rows(&data, 1).unwrap();
        assert_eq!(rows.len(), 2, "one row per subset");
        assert_eq!(rows[0].subset, "anti_black");
        assert_eq!(rows[1].subset, "aae");
        // Among the aae ties (both gaps -1.0) the lower instance id wins.
        assert_eq!(rows[1].instance_id, "i1");
    }

    #[test]
    fn missing_rating_is_a_runtime_error() {
        let mut data = fixture();
        data.markers.instances.push(instance("i9", SubsetTag::Aae));
        let err = marker_shift_rows(&data).unwrap_err();
        assert!(matches!(err, CliError::Runtime(_)));
        assert!(err.to_string().contains("i9"));
    }

    #[test]
    fn matrix_contrast_prefers_tight_diagonals() {
        let matrix = ClusterDistanceMatrix {
            cluster_ids: vec!["c0".into(), "c1".into()],
            values: vec![vec![0.1, 0.9], vec![0.9, 0.2]],
            normalized: Normalize::None,
        };
        let contrast = matrix_contrast(&matrix);
        assert!((contrast.mean_diagonal - 0.15).abs() < 1e-12);
        assert!((contrast.mean_off_diagonal.unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(contrast.within_lower_than_between, Some(true));

        let single = ClusterDistanceMatrix {
            cluster_ids: vec!["c0".into()],
            values: vec![vec![0.3]],
            normalized: Normalize::None,
        };
        assert_eq!(matrix_contrast(&single).mean_off_diagonal, None);
    }
}
