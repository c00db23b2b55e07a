//! Renders a single markdown report from whatever analysis outputs exist in
//! the configured output directory. Purely a reader: it never triggers runs.

use std::fmt::Write as _;
use std::path::Path;

use super::config::ExperimentConfig;
use super::csvio::{self, DiffRow};
use super::study1::{CrowdsSummary, DiversitySummary, StabilitySummary};
use super::study2::{ClusterSummary, CorrelationSummary, EmbedSummary, MarkersSummary};
use super::{CliError, OutputLayout};

fn read_if_present<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>, CliError> {
    if path.exists() {
        csvio::read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

fn pct(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

pub fn render_report(config: &ExperimentConfig) -> Result<String, CliError> {
    let layout = OutputLayout::new(config);
    let s1 = layout.study1_dir();
    let s2 = layout.study2_dir();
    let mut sections = 0usize;
    let mut out = String::new();
    writeln!(out, "# Experiment report: {}\n", config.experiment.name).unwrap();

    if let Some(d) = read_if_present::<DiversitySummary>(&s1.join("diversity_summary.json"))? {
        sections += 1;
        writeln!(out, "## Annotation diversity\n").unwrap();
        writeln!(
            out,
            "| arm | n | mean macro-F1 | variance |\n|---|---|---|---|\n\
             | persona | {} | {:.4} | {:.6} |\n| baseline | {} | {:.4} | {:.6} |\n",
            d.persona_arm.n,
            d.persona_arm.mean_macro_f1,
            d.persona_arm.variance_macro_f1,
            d.baseline_arm.n,
            d.baseline_arm.mean_macro_f1,
            d.baseline_arm.variance_macro_f1,
        )
        .unwrap();
        writeln!(
            out,
            "Levene W = {:.4}, p = {:.3e} ({}): {}.\n",
            d.levene.statistic,
            d.levene.p_value,
            d.levene.method,
            if d.reject_equal_variances {
                format!("variances differ at alpha = {}", d.alpha)
            } else {
                format!("no variance difference at alpha = {}", d.alpha)
            }
        )
        .unwrap();
    }

    if let Some(s) = read_if_present::<StabilitySummary>(&s1.join("stability_summary.json"))? {
        sections += 1;
        writeln!(out, "## Persona stability\n").unwrap();
        writeln!(
            out,
            "{} personas per stratum, {} repeats each. First-run macro-F1 vs \
             mean-of-repeats rank correlation: rho = {:.4} (p = {:.3e}, n = {}).\n",
            s.stratum_size,
            s.repeats,
            s.rank_correlation.rho,
            s.rank_correlation.p_value,
            s.rank_correlation.n
        )
        .unwrap();
    }

    if let Some(c) = read_if_present::<CrowdsSummary>(&s1.join("crowds_summary.json"))? {
        sections += 1;
        writeln!(out, "## Crowd trajectories\n").unwrap();
        writeln!(
            out,
            "{} crowds of {} per arm, {} permutations of the first persona crowd.\n",
            c.num_crowds, c.crowd_size, c.n_permutations
        )
        .unwrap();
        writeln!(
            out,
            "| arm | final mean macro-F1 | early variance (sizes <= {}) |\n|---|---|---|\n\
             | persona | {:.4} | {:.6} |\n| baseline | {:.4} | {:.6} |\n",
            c.early_size_cap,
            c.persona_final_mean_f1,
            c.persona_early_variance,
            c.baseline_final_mean_f1,
            c.baseline_early_variance,
        )
        .unwrap();
    }

    if let Some(e) = read_if_present::<EmbedSummary>(&s2.join("embed_summary.json"))? {
        sections += 1;
        writeln!(out, "## Embedding spaces\n").unwrap();
        writeln!(
            out,
            "{} personas embedded: {}-dim description space, {}-dim rating space.\n",
            e.n_personas, e.persona_dim, e.label_dim
        )
        .unwrap();
    }

    if let Some(c) = read_if_present::<ClusterSummary>(&s2.join("cluster_summary.json"))? {
        sections += 1;
        writeln!(out, "## Clustering\n").unwrap();
        writeln!(
            out,
            "Description clusters: {} kept covering {} personas ({} unassigned). \
             Rating clusters: k = {} after {} iterations, objective {:.4}.\n",
            c.persona_cluster_count,
            c.persona_retained,
            c.persona_unassigned,
            c.label_k,
            c.label_iterations,
            c.label_final_objective
        )
        .unwrap();
        for (name, contrast) in [
            ("description clusters under rating distances", &c.persona_clusters_in_label_space),
            ("rating clusters under description distances", &c.label_clusters_in_persona_space),
        ] {
            match (contrast.mean_off_diagonal, contrast.within_lower_than_between) {
                (Some(off), Some(lower)) => writeln!(
                    out,
                    "Cross-space check, {name}: mean within {:.4} vs between {:.4} ({}).\n",
                    contrast.mean_diagonal,
                    off,
                    if lower { "structure carries over" } else { "no carry-over" }
                )
                .unwrap(),
                _ => writeln!(
                    out,
                    "Cross-space check, {name}: single cluster, no between-cluster contrast.\n"
                )
                .unwrap(),
            }
        }
    }

    if let Some(c) = read_if_present::<CorrelationSummary>(&s2.join("correlations_summary.json"))? {
        sections += 1;
        writeln!(out, "## Cross-space correlations\n").unwrap();
        let mean_rho =
            c.mean_rho.map_or("undefined".to_string(), |r| format!("{r:.4}"));
        let positive = c
            .significance
            .frac_positive_among_significant
            .map_or("n/a".to_string(), pct);
        writeln!(
            out,
            "{} of {} personas have a defined correlation; mean rho = {mean_rho}. \
             {} significant at alpha = {}, of which {} positive.\n",
            c.n_defined,
            c.n_personas,
            pct(c.significance.frac_significant),
            c.alpha,
            positive
        )
        .unwrap();
    }

    if let Some(m) = read_if_present::<MarkersSummary>(&s2.join("markers_summary.json"))? {
        sections += 1;
        writeln!(out, "## Marker injection\n").unwrap();
        writeln!(
            out,
            "{} templates over {} marker instances, alpha = {}.\n",
            m.n_templates, m.n_marker_instances, m.alpha
        )
        .unwrap();
        writeln!(out, "| group | subset | mean shift | p | significant |\n|---|---|---|---|---|")
            .unwrap();
        for e in &m.effects {
            writeln!(
                out,
                "| {} | {} | {:+.4} | {:.3e} | {} |",
                e.group, e.subset, e.mean_shift, e.test.p_value, e.significant
            )
            .unwrap();
        }
        out.push('\n');
        for c in &m.contrasts {
            writeln!(
                out,
                "Subset {}: black shift {:+.4} vs conservative {:+.4}, p = {:.3e} ({}).\n",
                c.subset,
                c.mean_black_shift,
                c.mean_conservative_shift,
                c.test.p_value,
                if c.significant { "groups differ" } else { "no group difference" }
            )
            .unwrap();
        }
    }

    let difftable = s2.join("difftable.csv");
    if difftable.exists() {
        sections += 1;
        let rows: Vec<DiffRow> = csvio::read_rows(&difftable)?;
        writeln!(out, "## Largest group disagreements\n").unwrap();
        writeln!(
            out,
            "| subset | instance | mu_black | mu_conservative | diff |\n|---|---|---|---|---|"
        )
        .unwrap();
        for row in &rows {
            writeln!(
                out,
                "| {} | {} | {:.3} | {:.3} | {:+.3} |",
                row.subset, row.instance_id, row.mu_black, row.mu_conservative, row.diff
            )
            .unwrap();
        }
        out.push('\n');
    }

    if sections == 0 {
        return Err(CliError::Validation(format!(
            "no analysis outputs under {}; run the study commands first",
            layout.root().display()
        )));
    }
    Ok(out)
}

pub fn cmd_report(config: &ExperimentConfig) -> Result<String, CliError> {
    let rendered = render_report(config)?;
    let layout = OutputLayout::new(config);
    OutputLayout::ensure_dir(layout.root())?;
    std::fs::write(layout.report_path(), &rendered).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", layout.report_path().display()))
    })?;
    Ok(format!("report: wrote {}", layout.report_path().display()))
}
