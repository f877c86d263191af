//! Multiple test decisions from a permutation run: balanced critical values,
//! min-p adjusted p-values, and the competitor procedures (Bonferroni on
//! naive permutation statistics, Monte-Carlo asymptotic tests, and
//! chi-squared Bonferroni thresholds).

use ndarray::{Array1, Array2, ArrayView2};
use rand::RngCore;
use serde::Serialize;

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::linalg::{sqrt_psd, standard_normal, SymMatrix};
use crate::special::{chi2_cdf, chi2_quantile};
use crate::statistics::{evaluate, kernel_weights, KernelKind};

/// Decision row for one hypothesis.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisResult {
    pub hypothesis: String,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_adjusted: f64,
    pub reject: bool,
}

/// A complete multiple-testing decision.
///
/// Decisions are primary: `reject` always means `statistic > critical_value`.
/// Adjusted p-values agree with the decisions up to the discreteness of the
/// permutation grid.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub method: String,
    pub alpha: f64,
    pub b: usize,
    pub hypotheses: Vec<HypothesisResult>,
}

impl TestReport {
    pub fn any_rejected(&self) -> bool {
        self.hypotheses.iter().any(|h| h.reject)
    }

    pub fn rejections(&self) -> Vec<bool> {
        self.hypotheses.iter().map(|h| h.reject).collect()
    }
}

/// Balanced critical values: per-column order statistics at a common grid
/// level `beta`, with `beta` chosen as large as possible subject to the
/// joint exceedance rate over the matrix staying at or below `alpha`.
///
/// Ties are broken toward larger critical values, so the realized rate never
/// overshoots.
pub fn balanced_critical_values(w_perm: ArrayView2<'_, f64>, alpha: f64) -> Result<Vec<f64>> {
    let (b, l) = w_perm.dim();
    if b == 0 || l == 0 {
        return Err(Error::InvalidInput("empty permutation matrix".into()));
    }
    if (b as f64) < 1.0 / alpha {
        return Err(Error::InsufficientReplicates { needed: 1.0 / alpha, available: b });
    }

    let mut sorted_cols: Vec<Vec<f64>> = Vec::with_capacity(l);
    for j in 0..l {
        let mut col: Vec<f64> = w_perm.column(j).to_vec();
        col.sort_by(|a, c| a.partial_cmp(c).unwrap());
        sorted_cols.push(col);
    }

    // For each row, the smallest grid index j at which it exceeds some
    // column's critical value is the minimum over columns of
    // #{entries >= value}.
    let mut min_level = vec![usize::MAX; b];
    for j in 0..l {
        let col = &sorted_cols[j];
        for i in 0..b {
            let v = w_perm[[i, j]];
            // #{entries >= v} = b - (index of first entry >= v)
            let geq = b - col.partition_point(|&x| x < v);
            min_level[i] = min_level[i].min(geq);
        }
    }

    // Cumulative exceedance counts over the grid j = 1..b.
    let mut hist = vec![0usize; b + 2];
    for &m in &min_level {
        hist[m.min(b + 1)] += 1;
    }
    let budget = alpha * b as f64 + 1e-9;
    let mut best: Option<usize> = None;
    let mut cum = 0usize;
    for j in 1..=b {
        cum += hist[j];
        if (cum as f64) <= budget {
            best = Some(j);
        } else {
            break;
        }
    }

    let q = match best {
        // q_l is the (b - j)-th order statistic (1-based ascending).
        Some(j) => (0..l).map(|c| sorted_cols[c][b - j - 1]).collect(),
        // No grid level keeps the joint rate below alpha: fall back to the
        // column maxima, which nothing in the matrix exceeds.
        None => (0..l).map(|c| sorted_cols[c][b - 1]).collect(),
    };
    Ok(q)
}

/// Min-p adjusted p-values against a permutation matrix.
///
/// Marginal p-values use the `(1 + count) / (B + 1)` convention; the
/// adjustment counts how often the per-row minimum marginal p-value falls at
/// or below each observed marginal p-value.
pub fn adjusted_pvalues_minp(w_obs: &[f64], w_perm: ArrayView2<'_, f64>) -> Vec<f64> {
    let (b, l) = w_perm.dim();
    assert_eq!(w_obs.len(), l, "dimension mismatch");
    let denom = (b + 1) as f64;

    let mut sorted_cols: Vec<Vec<f64>> = Vec::with_capacity(l);
    for j in 0..l {
        let mut col: Vec<f64> = w_perm.column(j).to_vec();
        col.sort_by(|a, c| a.partial_cmp(c).unwrap());
        sorted_cols.push(col);
    }
    let count_geq = |col: &Vec<f64>, v: f64| col.len() - col.partition_point(|&x| x < v);

    // Per-row minimum of the within-column p-values.
    let mut min_p: Vec<f64> = (0..b)
        .map(|i| {
            (0..l)
                .map(|j| (1 + count_geq(&sorted_cols[j], w_perm[[i, j]])) as f64 / denom)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    min_p.sort_by(|a, c| a.partial_cmp(c).unwrap());

    (0..l)
        .map(|j| {
            let p_marginal = (1 + count_geq(&sorted_cols[j], w_obs[j])) as f64 / denom;
            let count = min_p.partition_point(|&x| x <= p_marginal);
            (1 + count) as f64 / denom
        })
        .collect()
}

/// Build the report for the corrected permutation procedure.
pub fn balanced_report(
    w_obs: &[f64],
    w_perm: ArrayView2<'_, f64>,
    labels: &[String],
    alpha: f64,
    method: &str,
) -> Result<TestReport> {
    let q = balanced_critical_values(w_perm, alpha)?;
    let p_adj = adjusted_pvalues_minp(w_obs, w_perm);
    let hypotheses = (0..w_obs.len())
        .map(|l| HypothesisResult {
            hypothesis: labels[l].clone(),
            statistic: w_obs[l],
            critical_value: q[l],
            p_adjusted: p_adj[l],
            reject: w_obs[l] > q[l],
        })
        .collect();
    Ok(TestReport { method: method.into(), alpha, b: w_perm.nrows(), hypotheses })
}

/// Bonferroni correction on naive (uncorrected) permutation statistics:
/// reject when the marginal permutation p-value is at most `alpha / L`.
pub fn bonferroni_naive(
    w_obs: &[f64],
    w_perm_naive: ArrayView2<'_, f64>,
    labels: &[String],
    alpha: f64,
) -> TestReport {
    let (b, l) = w_perm_naive.dim();
    let denom = (b + 1) as f64;
    let level = alpha / l as f64;
    let hypotheses = (0..l)
        .map(|j| {
            let mut col: Vec<f64> = w_perm_naive.column(j).to_vec();
            col.sort_by(|a, c| a.partial_cmp(c).unwrap());
            let geq = b - col.partition_point(|&x| x < w_obs[j]);
            let p_marginal = (1 + geq) as f64 / denom;
            // Largest count of matrix values >= observed still rejected.
            let c_max = (level * denom - 1.0).floor();
            let critical_value = if c_max < 0.0 {
                f64::INFINITY
            } else {
                let c = (c_max as usize).min(b - 1);
                col[b - c - 1]
            };
            HypothesisResult {
                hypothesis: labels[j].clone(),
                statistic: w_obs[j],
                critical_value,
                p_adjusted: (p_marginal * l as f64).min(1.0),
                reject: p_marginal <= level,
            }
        })
        .collect();
    TestReport { method: "permutation_bonferroni".into(), alpha, b, hypotheses }
}

/// Monte-Carlo asymptotic multiple test: simulate draws from the estimated
/// limit law, evaluate the same kernels blockwise, and apply the balanced
/// critical values to the simulated matrix.
pub fn asymptotic_multiple<R: RngCore>(
    w_obs: &[f64],
    sigma: &SymMatrix,
    spec: &ContrastSpec,
    kernel: KernelKind,
    alpha: f64,
    draws: usize,
    rng: &mut R,
) -> Result<TestReport> {
    if draws < 1000 {
        return Err(Error::InvalidInput("asymptotic test needs at least 1000 draws".into()));
    }
    let r = sigma.dim();
    if r != spec.n_rows() {
        return Err(Error::InvalidInput("covariance dimension mismatch".into()));
    }
    let root = sqrt_psd(sigma)?;
    let weights = block_weights_from_sigma(sigma, spec, kernel)?;

    let l = spec.n_hypotheses();
    let mut sim = Array2::zeros((draws, l));
    for i in 0..draws {
        let z = Array1::from_shape_fn(r, |_| standard_normal(rng));
        let y = root.matrix().dot(&z);
        let (vals, _) = evaluate(spec, &weights, &y)?;
        for j in 0..l {
            sim[[i, j]] = vals[j];
        }
    }
    balanced_report(w_obs, sim.view(), &spec.labels(), alpha, "asymptotic_multiple")
}

/// Kernel weights taken from the diagonal blocks of `H Gamma H'` directly,
/// which equal `H_l Gamma H_l'`.
fn block_weights_from_sigma(
    sigma: &SymMatrix,
    spec: &ContrastSpec,
    kernel: KernelKind,
) -> Result<crate::statistics::KernelWeights> {
    // Reuse the kernel construction by treating sigma as the nuisance of an
    // identity contrast with the same block structure.
    let eye_spec = ContrastSpec::new(
        Array2::eye(spec.n_rows()),
        &spec.blocks().iter().map(|b| b.len).collect::<Vec<_>>(),
        spec.labels(),
        spec.n_rows(),
        1,
    )?;
    kernel_weights(&eye_spec, sigma, kernel)
}

/// Chi-squared Bonferroni test: compare each statistic to the
/// `1 - alpha/L` quantile with the block's degrees of freedom. Unavailable
/// for the ANOVA-type kernel, whose limit is not chi-squared.
pub fn asymptotic_bonferroni(
    w_obs: &[f64],
    df: &[usize],
    labels: &[String],
    kernel: KernelKind,
    alpha: f64,
) -> Result<TestReport> {
    if kernel == KernelKind::Ats {
        return Err(Error::MethodUnavailable(
            "chi-squared thresholds do not apply to the ANOVA-type statistic".into(),
        ));
    }
    if w_obs.len() != df.len() {
        return Err(Error::InvalidInput("one df per hypothesis required".into()));
    }
    let l = w_obs.len() as f64;
    let hypotheses = w_obs
        .iter()
        .zip(df)
        .zip(labels)
        .map(|((&stat, &df), label)| {
            let q = chi2_quantile(1.0 - alpha / l, df as f64);
            let p = (1.0 - chi2_cdf(stat, df as f64)) * l;
            HypothesisResult {
                hypothesis: label.clone(),
                statistic: stat,
                critical_value: q,
                p_adjusted: p.min(1.0),
                reject: stat > q,
            }
        })
        .collect();
    Ok(TestReport { method: "asymptotic_bonferroni".into(), alpha, b: 0, hypotheses })
}
