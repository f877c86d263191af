//! Covariance correction of permutation statistics.
//!
//! The permuted contrast estimate has the wrong joint covariance in the
//! limit. Three regimes repair it:
//!
//! * **Case 1** (full-rank permutation covariance): multiply by
//!   `S^{1/2} ((S_pi)^{1/2})^+`.
//! * **Case 2** (distinct positive eigenvalues): rotate into the permuted
//!   eigenbasis, rescale the spectrum, flip eigenvector signs with i.i.d.
//!   Rademacher variables, and rotate back into the original eigenbasis.
//! * **Case 3** (known convergence rate): like case 2, but eigenvalues whose
//!   scaled gaps fall below a threshold share a Haar-rotated block, and a
//!   tail of small eigenvalues is zeroed outright.
//!
//! Sign and rotation randomness is drawn fresh per call; reusing it across
//! permutation iterations would break their conditional independence.

use ndarray::Array1;
use rand::RngCore;

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::linalg::{
    haar_orthogonal, pinv_sqrt_diag, rademacher_diag, sqrt_psd, sym_eigen, truncate_tail,
    EigenPair, OrthogonalBlockMatrix, RotationBlock, SymMatrix,
};

/// Which correction regime a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CorrectionCase {
    Case1,
    Case2,
    Case3,
}

impl CorrectionCase {
    pub fn name(&self) -> &'static str {
        match self {
            CorrectionCase::Case1 => "case1",
            CorrectionCase::Case2 => "case2",
            CorrectionCase::Case3 => "case3",
        }
    }
}

/// Requested case: explicit or automatic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseMode {
    Auto,
    Fixed(CorrectionCase),
}

impl std::str::FromStr for CaseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(CaseMode::Auto),
            "1" | "case1" => Ok(CaseMode::Fixed(CorrectionCase::Case1)),
            "2" | "case2" => Ok(CaseMode::Fixed(CorrectionCase::Case2)),
            "3" | "case3" => Ok(CaseMode::Fixed(CorrectionCase::Case3)),
            other => Err(Error::InvalidInput(format!("unknown case mode '{other}'"))),
        }
    }
}

/// Inputs shared by the eigen-based corrections (cases 2 and 3).
pub struct CorrectionInputs<'a> {
    /// Scaled permuted contrast estimate `sqrt(n) theta_pi` (length `r`).
    pub theta_pi: &'a Array1<f64>,
    /// Eigendecomposition of the original covariance estimate.
    pub eig_sigma: &'a EigenPair,
    /// Eigendecomposition of the permutation covariance estimate.
    pub eig_sigma_pi: &'a EigenPair,
    /// Truncation rank applied to both spectra.
    pub keep: usize,
    /// Gap threshold for case 3.
    pub eps: f64,
    /// Rate factor for case 3.
    pub r_n: f64,
}

/// Case 1: `S^{1/2} ((S_pi)^{1/2})^+ theta_pi`. Requires a numerically
/// full-rank permutation covariance.
pub fn correct_case1(
    theta_pi: &Array1<f64>,
    sigma: &SymMatrix,
    sigma_pi: &SymMatrix,
) -> Result<Array1<f64>> {
    correct_case1_with_eig(theta_pi, &sqrt_psd(sigma)?, &sym_eigen(sigma_pi)?)
}

/// Case 1 with the square root and the permutation eigendecomposition
/// precomputed, for callers running many iterations.
pub fn correct_case1_with_eig(
    theta_pi: &Array1<f64>,
    sigma_sqrt: &SymMatrix,
    eig_pi: &EigenPair,
) -> Result<Array1<f64>> {
    let r = theta_pi.len();
    if eig_pi.rank() < r {
        return Err(Error::CaseInapplicable(format!(
            "case 1 requires a full-rank permutation covariance (rank {} < r = {r})",
            eig_pi.rank()
        )));
    }
    // ((S_pi)^{1/2})^+ = U diag(1/sqrt(d)) U'
    let inv_sqrt = Array1::from(pinv_sqrt_diag(eig_pi.d.as_slice().unwrap(), r));
    let v = eig_pi.u.t().dot(theta_pi) * &inv_sqrt;
    Ok(sigma_sqrt.matrix().dot(&eig_pi.u.dot(&v)))
}

/// Case 2: `U D^{1/2} ((D_pi)^{1/2})^+ R U_pi' theta_pi` with fresh
/// Rademacher signs `R`. Both spectra are truncated at `inputs.keep`.
pub fn correct_case2<R: RngCore>(inputs: &CorrectionInputs<'_>, rng: &mut R) -> Result<Array1<f64>> {
    let r = inputs.theta_pi.len();
    let signs = rademacher_diag(r, rng);
    let mut v = inputs.eig_sigma_pi.u.t().dot(inputs.theta_pi);
    for i in 0..r {
        v[i] *= signs[i];
    }
    Ok(spectral_rescale(inputs, v)?)
}

/// Eigenvalue gap structure of a permutation spectrum: block boundaries of
/// indistinguishable eigenvalues plus whether the tail is zeroed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapStructure {
    /// Start index (0-based) of each block; the first entry is always 0.
    pub block_starts: Vec<usize>,
    /// Whether the final block is zeroed (`r_n * d[r-1] <= eps`).
    pub zero_tail: bool,
    /// Total dimension `r`.
    pub r: usize,
}

impl GapStructure {
    /// Number of detected gaps.
    pub fn gap_count(&self) -> usize {
        self.block_starts.len() - 1
    }

    /// Sizes of the consecutive blocks.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.block_starts.len());
        for w in self.block_starts.windows(2) {
            sizes.push(w[1] - w[0]);
        }
        sizes.push(self.r - self.block_starts.last().unwrap());
        sizes
    }
}

/// Detect eigenvalue gaps: index `i` (0-based, `i >= 1`) starts a new block
/// when `r_n * (d[i-1] - d[i]) > eps`. The tail is zeroed when
/// `r_n * d[r-1] <= eps`.
pub fn detect_gaps(d_pi: &[f64], r_n: f64, eps: f64) -> GapStructure {
    assert!(r_n > 0.0 && eps > 0.0, "detect_gaps: r_n and eps must be > 0");
    let r = d_pi.len();
    let mut block_starts = vec![0];
    for i in 1..r {
        if r_n * (d_pi[i - 1] - d_pi[i]) > eps {
            block_starts.push(i);
        }
    }
    let zero_tail = r == 0 || r_n * d_pi[r - 1] <= eps;
    GapStructure { block_starts, zero_tail, r }
}

/// Build the block-diagonal rotation for case 3: one fresh Haar block per
/// eigenvalue block, with the final block replaced by zeros when the tail is
/// below the threshold.
pub fn build_r_eps<R: RngCore>(gaps: &GapStructure, rng: &mut R) -> Result<OrthogonalBlockMatrix> {
    let sizes = gaps.block_sizes();
    let mut blocks = Vec::with_capacity(sizes.len());
    for (idx, &size) in sizes.iter().enumerate() {
        let last = idx + 1 == sizes.len();
        if last && gaps.zero_tail {
            blocks.push(RotationBlock::Zero(size));
        } else {
            blocks.push(RotationBlock::Orthogonal(haar_orthogonal(size, rng)?));
        }
    }
    Ok(OrthogonalBlockMatrix::new(blocks))
}

/// Case 3: `U D^{1/2} ((D_pi)^{1/2})^+ R_eps U_pi' theta_pi` with the
/// block rotation from [`build_r_eps`] applied to the truncated permutation
/// spectrum.
pub fn correct_case3<R: RngCore>(inputs: &CorrectionInputs<'_>, rng: &mut R) -> Result<Array1<f64>> {
    let d_pi_trunc = truncate_tail(inputs.eig_sigma_pi.d.as_slice().unwrap(), inputs.keep)?;
    let gaps = detect_gaps(&d_pi_trunc, inputs.r_n, inputs.eps);
    let rotation = build_r_eps(&gaps, rng)?;
    let v = inputs.eig_sigma_pi.u.t().dot(inputs.theta_pi);
    let v = rotation.apply(&v);
    Ok(spectral_rescale(inputs, v)?)
}

/// Shared diagonal chain `U D^{1/2} ((D_pi)^{1/2})^+ v` with truncation.
fn spectral_rescale(inputs: &CorrectionInputs<'_>, mut v: Array1<f64>) -> Result<Array1<f64>> {
    let d = truncate_tail(inputs.eig_sigma.d.as_slice().unwrap(), inputs.keep)?;
    let inv_sqrt_pi = pinv_sqrt_diag(inputs.eig_sigma_pi.d.as_slice().unwrap(), inputs.keep);
    for i in 0..v.len() {
        v[i] *= inv_sqrt_pi[i] * d[i].max(0.0).sqrt();
    }
    Ok(inputs.eig_sigma.u.dot(&v))
}

/// Outcome of case selection.
#[derive(Debug, Clone)]
pub struct CaseSelection {
    pub case: CorrectionCase,
    /// Truncation rank: `min(rank(S), rank(S_pi), rank(H))`.
    pub keep: usize,
    pub rank_sigma: usize,
    pub rank_sigma_pi: usize,
    pub rank_h: usize,
    pub warnings: Vec<String>,
}

/// Pick the correction case and the truncation rank.
///
/// Automatic mode selects case 1 when the permutation covariance is
/// numerically full rank and case 3 otherwise (its assumptions are the
/// weakest checkable ones). Explicit modes are honored; case 1 with a
/// rank-deficient permutation covariance is an error, and case 2 with
/// near-ties in the positive spectrum only warns, since eigenvalue
/// distinctness of the limit is not observable.
pub fn case_select(
    mode: CaseMode,
    eig_sigma: &EigenPair,
    eig_sigma_pi: &EigenPair,
    spec: &ContrastSpec,
) -> Result<CaseSelection> {
    let r = spec.n_rows();
    let rank_sigma = eig_sigma.rank();
    let rank_sigma_pi = eig_sigma_pi.rank();
    let rank_h = spec.rank();
    let keep = rank_sigma.min(rank_sigma_pi).min(rank_h);
    let full_rank_pi = rank_sigma_pi == r;
    let mut warnings = Vec::new();

    let case = match mode {
        CaseMode::Auto => {
            if full_rank_pi {
                CorrectionCase::Case1
            } else {
                CorrectionCase::Case3
            }
        }
        CaseMode::Fixed(CorrectionCase::Case1) => {
            if !full_rank_pi {
                return Err(Error::CaseInapplicable(format!(
                    "case 1 requires rank(sigma_pi) = r = {r}, estimated rank is {rank_sigma_pi}"
                )));
            }
            CorrectionCase::Case1
        }
        CaseMode::Fixed(CorrectionCase::Case2) => {
            let d = eig_sigma_pi.d.as_slice().unwrap();
            let min_gap = (1..rank_sigma_pi)
                .map(|i| d[i - 1] - d[i])
                .fold(f64::INFINITY, f64::min);
            if rank_sigma_pi > 1 && min_gap < 1e-6 {
                warnings.push(format!(
                    "case 2 assumes distinct positive eigenvalues; smallest estimated gap is {min_gap:.3e}"
                ));
            }
            if rank_sigma.min(rank_sigma_pi) > rank_h {
                warnings.push(
                    "estimated covariance ranks exceed the contrast rank bound".into(),
                );
            }
            CorrectionCase::Case2
        }
        CaseMode::Fixed(CorrectionCase::Case3) => CorrectionCase::Case3,
    };

    Ok(CaseSelection { case, keep, rank_sigma, rank_sigma_pi, rank_h, warnings })
}
