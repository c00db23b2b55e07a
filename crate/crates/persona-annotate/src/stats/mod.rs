//! Nonparametric test battery: Levene's variance test, the Wilcoxon rank-sum
//! (Mann-Whitney U) test, Spearman rank correlation, and a significance
//! counting helper.

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use special::{f_sf, normal_sf, t_sf};

/// Outcome of a two-sample test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    /// Human-readable note on how the p-value was obtained.
    pub method: String,
}

/// Outcome of a correlation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Which center Levene's test measures deviations from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeveneCenter {
    Mean,
    Median,
}

/// Tunables shared by the experiment battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatConfig {
    pub levene_center: LeveneCenter,
    pub wilcoxon_exact_threshold: usize,
    pub alpha_variance: f64,
    pub alpha_shift: f64,
}

impl Default for StatConfig {
    fn default() -> Self {
        StatConfig {
            levene_center: LeveneCenter::Mean,
            wilcoxon_exact_threshold: 8,
            alpha_variance: 0.001,
            alpha_shift: 0.05,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("{context}: need at least {min} values, got {got}")]
    SampleTooSmall {
        context: &'static str,
        min: usize,
        got: usize,
    },
    #[error("input lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("correlation undefined: an input vector is constant")]
    ConstantInput,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Midranks (1-based) of the input values; tied values share the average of
/// the ranks they would occupy.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average rank.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tied groups in the combined sample, for variance corrections.
fn tie_group_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        if j > i {
            groups.push(j - i + 1);
        }
        i = j + 1;
    }
    groups
}

/// Levene's test for equality of variances between two samples.
///
/// The W statistic is the one-way ANOVA F over absolute deviations from each
/// sample's center; the p-value comes from F(1, n1 + n2 − 2). Degenerate
/// inputs where all deviations vanish report W = 0, p = 1.
pub fn levene(a: &[f64], b: &[f64], center: LeveneCenter) -> Result<TestResult, StatsError> {
    for (name, s) in [("levene sample a", a), ("levene sample b", b)] {
        if s.len() < 2 {
            return Err(StatsError::SampleTooSmall {
                context: name,
                min: 2,
                got: s.len(),
            });
        }
    }
    let center_of = |xs: &[f64]| match center {
        LeveneCenter::Mean => mean(xs),
        LeveneCenter::Median => median(xs),
    };
    let za: Vec<f64> = {
        let c = center_of(a);
        a.iter().map(|x| (x - c).abs()).collect()
    };
    let zb: Vec<f64> = {
        let c = center_of(b);
        b.iter().map(|x| (x - c).abs()).collect()
    };
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let (ma, mb) = (mean(&za), mean(&zb));
    let grand = (n1 * ma + n2 * mb) / n;
    let between = n1 * (ma - grand).powi(2) + n2 * (mb - grand).powi(2);
    let within: f64 = za.iter().map(|z| (z - ma).powi(2)).sum::<f64>()
        + zb.iter().map(|z| (z - mb).powi(2)).sum::<f64>();
    let df2 = n - 2.0;
    let method = format!(
        "levene ({} center), F(1, {df2})",
        match center {
            LeveneCenter::Mean => "mean",
            LeveneCenter::Median => "median",
        }
    );
    if within == 0.0 {
        // All deviations equal their group means exactly. Identical spreads
        // mean no evidence either way; differing spreads with zero
        // within-group variation are infinitely strong evidence.
        let (statistic, p_value) = if between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        };
        return Ok(TestResult {
            statistic,
            p_value,
            n1: a.len(),
            n2: b.len(),
            method,
        });
    }
    let w = df2 * between / within;
    Ok(TestResult {
        statistic: w,
        p_value: f_sf(w, 1.0, df2),
        n1: a.len(),
        n2: b.len(),
        method,
    })
}

/// Distribution of the Mann-Whitney U statistic of the first sample under the
/// null, as probabilities over u = 0..=n1*n2. Computed by the classic
/// "largest observation" recurrence in f64 counts.
fn exact_u_distribution(n1: usize, n2: usize) -> Vec<f64> {
    let u_max = n1 * n2;
    // dist[m][u] holds counts for m first-sample items among the first `n`
    // second-sample items processed so far.
    let mut dist: Vec<Vec<f64>> = (0..=n1)
        .map(|_| {
            let mut v = vec![0.0; u_max + 1];
            v[0] = 1.0;
            v
        })
        .collect();
    for n in 1..=n2 {
        for m in 1..=n1 {
            // c(u; m, n) = c(u; m, n−1) + c(u − n; m − 1, n); dist[m] still
            // holds the (m, n−1) counts, dist[m−1] already holds (m−1, n).
            let (lower, current) = dist.split_at_mut(m);
            let prev = &lower[m - 1];
            let cur = &mut current[0];
            for u in (n..=u_max).rev() {
                cur[u] += prev[u - n];
            }
        }
    }
    let total: f64 = dist[n1].iter().sum();
    dist[n1].iter().map(|c| c / total).collect()
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney U) test.
///
/// The reported statistic is U for the first sample. The p-value is exact by
/// enumeration when both samples are tie-free and the smaller one has at most
/// `exact_threshold` values; otherwise a normal approximation with tie and
/// continuity corrections is used.
pub fn wilcoxon_rank_sum(
    a: &[f64],
    b: &[f64],
    exact_threshold: usize,
) -> Result<TestResult, StatsError> {
    for (name, s) in [("rank-sum sample a", a), ("rank-sum sample b", b)] {
        if s.is_empty() {
            return Err(StatsError::SampleTooSmall {
                context: name,
                min: 1,
                got: 0,
            });
        }
    }
    let (n1, n2) = (a.len(), b.len());
    let combined: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let ranks = midranks(&combined);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u2 = (n1 * n2) as f64 - u1;
    let u_big = u1.max(u2);
    let ties = tie_group_sizes(&combined);
    if ties.is_empty() && n1.min(n2) <= exact_threshold {
        let dist = exact_u_distribution(n1, n2);
        // No ties, so U is an integer; round guards against fp dust.
        let threshold = u_big.round() as usize;
        let tail: f64 = dist[threshold..].iter().sum();
        return Ok(TestResult {
            statistic: u1,
            p_value: (2.0 * tail).min(1.0),
            n1,
            n2,
            method: "exact enumeration".into(),
        });
    }
    let nf = (n1 + n2) as f64;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / (nf * (nf - 1.0));
    let sigma_sq = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term);
    if sigma_sq <= 0.0 {
        // Every observation tied: no rank variation at all.
        return Ok(TestResult {
            statistic: u1,
            p_value: 1.0,
            n1,
            n2,
            method: "degenerate (all values tied)".into(),
        });
    }
    let z = (u_big - (n1 * n2) as f64 / 2.0 - 0.5) / sigma_sq.sqrt();
    let p = (2.0 * normal_sf(z)).clamp(0.0, 1.0);
    Ok(TestResult {
        statistic: u1,
        p_value: p,
        n1,
        n2,
        method: "normal approximation with tie and continuity correction".into(),
    })
}

/// Spearman rank correlation with midranks, p-value from the t transform
/// against Student-t(n − 2).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::SampleTooSmall {
            context: "spearman",
            min: 3,
            got: x.len(),
        });
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..rx.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    // A single square root keeps clean rational cases (like 8/sqrt(100)) exact.
    let rho = cov / (vx * vy).sqrt();
    let n = x.len();
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * ((n as f64 - 2.0) / (1.0 - rho * rho)).sqrt();
        (2.0 * t_sf(t.abs(), n as f64 - 2.0)).clamp(0.0, 1.0)
    };
    Ok(CorrelationResult { rho, p_value, n })
}

/// Fractions of significant results and, among those, positive correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceSummary {
    pub frac_significant: f64,
    /// None when nothing reached significance.
    pub frac_positive_among_significant: Option<f64>,
    pub n: usize,
}

pub fn significance_summary(results: &[CorrelationResult], alpha: f64) -> SignificanceSummary {
    let significant: Vec<&CorrelationResult> =
        results.iter().filter(|r| r.p_value < alpha).collect();
    let frac_significant = if results.is_empty() {
        0.0
    } else {
        significant.len() as f64 / results.len() as f64
    };
    let frac_positive_among_significant = if significant.is_empty() {
        None
    } else {
        Some(significant.iter().filter(|r| r.rho > 0.0).count() as f64 / significant.len() as f64)
    };
    SignificanceSummary {
        frac_significant,
        frac_positive_among_significant,
        n: results.len(),
    }
}
