//! Orchestration of a full test run: observed statistics plus a matrix of
//! covariance-corrected permutation statistics, computed deterministically
//! and optionally in parallel.
//!
//! Every permutation iteration draws from its own RNG stream derived from
//! `(seed, iteration index)`, so results are a pure function of the inputs
//! and identical for any worker count. Stream index 0 is a pilot iteration
//! used for case selection, indices `1..=B` are the replicates, and `B + 1`
//! is reserved for Monte-Carlo competitors.

use ndarray::{Array1, Array2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::contrasts::ContrastSpec;
use crate::correction::{
    case_select, correct_case1_with_eig, correct_case2, correct_case3, detect_gaps, CaseMode,
    CorrectionCase, CorrectionInputs,
};
use crate::error::{Error, Result};
use crate::linalg::{sqrt_psd, sym_eigen, truncate_tail, EigenPair, SymMatrix};
use crate::moments::{gamma_hat, group_mean_vector, permute_pooled, sigma_hat, GroupedSample};
use crate::statistics::{evaluate, kernel_weights, KernelKind, KernelWeights};
use crate::survival::{rmst_moments, SurvivalSample};

/// Derive a reproducible, statistically independent RNG stream for an index.
///
/// The 256-bit ChaCha key is a counter-mode keyed mix of `(seed, index)`:
/// the SplitMix64 finalizer is applied to `seed` and to `index` separately,
/// the results are combined into a state, and four successive finalizer
/// outputs of that state fill the key. ChaCha12 then generates the stream.
/// The construction is documented here precisely because downstream outputs
/// must stay stable: same `(seed, index)`, same stream, always.
pub fn derive_stream(seed: u64, index: u64) -> ChaCha12Rng {
    const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
    const PHI: u64 = 0xD1B5_4A32_D192_ED03;
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut state = mix(seed ^ GAMMA).wrapping_add(mix(index.wrapping_mul(PHI).wrapping_add(1)));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(GAMMA);
        chunk.copy_from_slice(&mix(state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Uniform random permutation of `0..n` via Fisher-Yates. Bounded indices
/// come from a widening multiply of the raw 64-bit output, so the draw is
/// independent of any library's integer-sampling internals.
pub fn uniform_permutation<R: RngCore>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        v.swap(i, j);
    }
    v
}

/// The data a run analyzes: plain grouped observations or right-censored
/// survival pairs.
#[derive(Debug, Clone)]
pub enum DataSet {
    Grouped(GroupedSample),
    Survival(SurvivalSample),
}

/// Mean-type vector plus nuisance covariance for either data kind.
struct Moments {
    mu: Array1<f64>,
    gamma: SymMatrix,
    degenerate_groups: Vec<usize>,
}

impl DataSet {
    pub fn n(&self) -> usize {
        match self {
            DataSet::Grouped(s) => s.n(),
            DataSet::Survival(s) => s.n(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            DataSet::Grouped(s) => s.k(),
            DataSet::Survival(s) => s.k(),
        }
    }

    /// Dimension of the analyzed parameter per group (1 for survival).
    pub fn analysis_dim(&self) -> usize {
        match self {
            DataSet::Grouped(s) => s.d(),
            DataSet::Survival(_) => 1,
        }
    }

    fn moments(&self) -> Result<Moments> {
        match self {
            DataSet::Grouped(s) => Ok(Moments {
                mu: group_mean_vector(s),
                gamma: gamma_hat(s)?,
                degenerate_groups: Vec::new(),
            }),
            DataSet::Survival(s) => {
                let m = rmst_moments(s)?;
                Ok(Moments {
                    mu: m.mu,
                    gamma: m.gamma,
                    degenerate_groups: m.degenerate_groups,
                })
            }
        }
    }

    fn permuted(&self, perm: &[usize]) -> Result<DataSet> {
        match self {
            DataSet::Grouped(s) => Ok(DataSet::Grouped(permute_pooled(s, perm)?)),
            DataSet::Survival(s) => {
                let carrier = permute_pooled(&s.to_grouped(), perm)?;
                Ok(DataSet::Survival(SurvivalSample::from_grouped(&carrier, s.tau())))
            }
        }
    }

    fn min_group_size(&self) -> usize {
        match self {
            DataSet::Grouped(s) => s.group_sizes().into_iter().min().unwrap(),
            DataSet::Survival(s) => (0..s.k()).map(|i| s.group(i).len()).min().unwrap(),
        }
    }
}

/// Configuration of a permutation run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Number of permutation replicates (at least 99).
    pub b: usize,
    /// Global significance level.
    pub alpha: f64,
    pub seed: u64,
    pub case_mode: CaseMode,
    /// Gap threshold for case 3.
    pub eps: f64,
    /// The rate factor is `(min group size)^rn_exponent`.
    pub rn_exponent: f64,
    pub kernel: KernelKind,
    /// Null value of the contrast vector; `None` means zero.
    pub theta0: Option<Array1<f64>>,
    /// Evaluate corrected statistics with the permuted nuisance estimate
    /// instead of the original one.
    pub nuisance_from_permuted: bool,
    /// Run iterations on the rayon pool. Output is identical either way.
    pub parallel: bool,
}

impl RunConfig {
    pub fn new(b: usize, alpha: f64, seed: u64) -> Self {
        Self {
            b,
            alpha,
            seed,
            case_mode: CaseMode::Auto,
            eps: 0.1,
            rn_exponent: 0.25,
            kernel: KernelKind::StudentSq,
            theta0: None,
            nuisance_from_permuted: false,
            parallel: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.b < 99 {
            return Err(Error::InvalidInput(format!(
                "need at least 99 permutation replicates, got {}",
                self.b
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput("eps must be > 0".into()));
        }
        if !(self.rn_exponent > 0.0) {
            return Err(Error::InvalidInput("rn exponent must be > 0".into()));
        }
        Ok(())
    }
}

/// Deterministic run diagnostics, written into reports.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub case: CorrectionCase,
    pub rank_sigma: usize,
    pub rank_sigma_pi_pilot: usize,
    pub rank_h: usize,
    pub keep_pilot: usize,
    pub keep_min: usize,
    pub keep_max: usize,
    pub sigma_eigenvalues: Vec<f64>,
    pub sigma_pi_pilot_eigenvalues: Vec<f64>,
    /// Case-3 pilot gap structure: block sizes and whether the tail is zeroed.
    pub pilot_block_sizes: Option<Vec<usize>>,
    pub pilot_zero_tail: Option<bool>,
    pub degenerate_iterations: usize,
    pub warnings: Vec<String>,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub b: usize,
    pub kernel: KernelKind,
    pub r_n: f64,
    pub eps: f64,
    pub seed: u64,
}

/// Observed statistics plus the corrected and naive permutation matrices.
#[derive(Debug, Clone)]
pub struct PermutationRun {
    pub w_obs: Vec<f64>,
    /// `B x L` corrected permutation statistics.
    pub w_perm: Array2<f64>,
    /// `B x L` naive (uncorrected) permutation statistics, studentized by
    /// the permuted nuisance estimate.
    pub w_perm_naive: Array2<f64>,
    pub diagnostics: Diagnostics,
}

struct IterationOutput {
    corrected: Vec<f64>,
    naive: Vec<f64>,
    keep: usize,
    degenerate: bool,
}

/// Run the full procedure on a dataset.
pub fn run(data: &DataSet, spec: &ContrastSpec, cfg: &RunConfig) -> Result<PermutationRun> {
    cfg.validate()?;
    if spec.k() != data.k() || spec.d() != data.analysis_dim() {
        return Err(Error::InvalidInput(format!(
            "contrast spec is for k={}, d={} but data has k={}, d={}",
            spec.k(),
            spec.d(),
            data.k(),
            data.analysis_dim()
        )));
    }
    let n = data.n();
    let r = spec.n_rows();
    let sqrt_n = (n as f64).sqrt();

    let obs = data.moments()?;
    if let Some(&group) = obs.degenerate_groups.first() {
        return Err(Error::VarianceUndefined { group: group + 1 });
    }
    let theta = spec.matrix().dot(&obs.mu);
    let theta0 = match &cfg.theta0 {
        Some(t0) => {
            if t0.len() != r {
                return Err(Error::InvalidInput(format!(
                    "theta0 has length {}, expected r = {r}",
                    t0.len()
                )));
            }
            t0.clone()
        }
        None => Array1::zeros(r),
    };

    let sigma = sigma_hat(spec, &obs.gamma)?;
    let eig_sigma = sym_eigen(&sigma)?;
    let obs_weights = kernel_weights(spec, &obs.gamma, cfg.kernel)?;
    let x_obs = (&theta - &theta0).mapv(|v| sqrt_n * v);
    let (w_obs, _) = evaluate(spec, &obs_weights, &x_obs)?;

    // Pilot iteration: estimate the permutation covariance once to pick the
    // case and fill diagnostics.
    let mut pilot_rng = derive_stream(cfg.seed, 0);
    let pilot_perm = uniform_permutation(n, &mut pilot_rng);
    let pilot = data.permuted(&pilot_perm)?.moments()?;
    let sigma_pi_pilot = sigma_hat(spec, &pilot.gamma)?;
    let eig_pi_pilot = sym_eigen(&sigma_pi_pilot)?;
    let selection = case_select(cfg.case_mode, &eig_sigma, &eig_pi_pilot, spec)?;

    let r_n = (data.min_group_size() as f64).powf(cfg.rn_exponent);
    let sigma_sqrt = if selection.case == CorrectionCase::Case1 {
        Some(sqrt_psd(&sigma)?)
    } else {
        None
    };

    let (pilot_block_sizes, pilot_zero_tail) = if selection.case == CorrectionCase::Case3 {
        let d_trunc = truncate_tail(eig_pi_pilot.d.as_slice().unwrap(), selection.keep)?;
        let gaps = detect_gaps(&d_trunc, r_n, cfg.eps);
        (Some(gaps.block_sizes()), Some(gaps.zero_tail))
    } else {
        (None, None)
    };

    let ctx = IterationContext {
        data,
        spec,
        cfg,
        sqrt_n,
        rank_sigma: selection.rank_sigma,
        rank_h: selection.rank_h,
        case: selection.case,
        r_n,
        eig_sigma: &eig_sigma,
        sigma_sqrt: sigma_sqrt.as_ref(),
        obs_weights: &obs_weights,
    };

    let rows: Result<Vec<IterationOutput>> = if cfg.parallel {
        (1..=cfg.b as u64).into_par_iter().map(|b| ctx.iteration(b)).collect()
    } else {
        (1..=cfg.b as u64).map(|b| ctx.iteration(b)).collect()
    };
    let rows = rows?;

    let l = spec.n_hypotheses();
    let mut w_perm = Array2::zeros((cfg.b, l));
    let mut w_perm_naive = Array2::zeros((cfg.b, l));
    let mut keep_min = usize::MAX;
    let mut keep_max = 0;
    let mut degenerate_iterations = 0;
    for (i, row) in rows.iter().enumerate() {
        for j in 0..l {
            w_perm[[i, j]] = row.corrected[j];
            w_perm_naive[[i, j]] = row.naive[j];
        }
        keep_min = keep_min.min(row.keep);
        keep_max = keep_max.max(row.keep);
        degenerate_iterations += row.degenerate as usize;
    }
    debug_assert!(w_perm.iter().all(|v| v.is_finite()));

    let diagnostics = Diagnostics {
        case: selection.case,
        rank_sigma: selection.rank_sigma,
        rank_sigma_pi_pilot: selection.rank_sigma_pi,
        rank_h: selection.rank_h,
        keep_pilot: selection.keep,
        keep_min,
        keep_max,
        sigma_eigenvalues: eig_sigma.d.to_vec(),
        sigma_pi_pilot_eigenvalues: eig_pi_pilot.d.to_vec(),
        pilot_block_sizes,
        pilot_zero_tail,
        degenerate_iterations,
        warnings: selection.warnings,
        n,
        k: spec.k(),
        d: spec.d(),
        b: cfg.b,
        kernel: cfg.kernel,
        r_n,
        eps: cfg.eps,
        seed: cfg.seed,
    };

    Ok(PermutationRun { w_obs, w_perm, w_perm_naive, diagnostics })
}

/// Read-only state shared by all iterations.
struct IterationContext<'a> {
    data: &'a DataSet,
    spec: &'a ContrastSpec,
    cfg: &'a RunConfig,
    sqrt_n: f64,
    rank_sigma: usize,
    rank_h: usize,
    case: CorrectionCase,
    r_n: f64,
    eig_sigma: &'a EigenPair,
    sigma_sqrt: Option<&'a SymMatrix>,
    obs_weights: &'a KernelWeights,
}

impl IterationContext<'_> {
    fn iteration(&self, index: u64) -> Result<IterationOutput> {
        let mut rng = derive_stream(self.cfg.seed, index);
        let n = self.data.n();
        let perm = uniform_permutation(n, &mut rng);
        let permuted = self.data.permuted(&perm)?;
        let moments = permuted.moments()?;
        let mut degenerate = !moments.degenerate_groups.is_empty();

        let theta_pi = self
            .spec
            .matrix()
            .dot(&moments.mu)
            .mapv(|v| self.sqrt_n * v);
        let sigma_pi = sigma_hat(self.spec, &moments.gamma)?;
        let eig_pi = sym_eigen(&sigma_pi)?;
        let keep = self.rank_sigma.min(eig_pi.rank()).min(self.rank_h);

        let corrected_vec = match self.case {
            CorrectionCase::Case1 => correct_case1_with_eig(
                &theta_pi,
                self.sigma_sqrt.expect("computed for case 1"),
                &eig_pi,
            )?,
            CorrectionCase::Case2 => {
                let inputs = CorrectionInputs {
                    theta_pi: &theta_pi,
                    eig_sigma: self.eig_sigma,
                    eig_sigma_pi: &eig_pi,
                    keep,
                    eps: self.cfg.eps,
                    r_n: self.r_n,
                };
                correct_case2(&inputs, &mut rng)?
            }
            CorrectionCase::Case3 => {
                let inputs = CorrectionInputs {
                    theta_pi: &theta_pi,
                    eig_sigma: self.eig_sigma,
                    eig_sigma_pi: &eig_pi,
                    keep,
                    eps: self.cfg.eps,
                    r_n: self.r_n,
                };
                correct_case3(&inputs, &mut rng)?
            }
        };

        let (corrected, deg1) = if self.cfg.nuisance_from_permuted {
            let weights = kernel_weights(self.spec, &moments.gamma, self.cfg.kernel)?;
            evaluate(self.spec, &weights, &corrected_vec)?
        } else {
            evaluate(self.spec, self.obs_weights, &corrected_vec)?
        };
        let naive_weights = kernel_weights(self.spec, &moments.gamma, self.cfg.kernel)?;
        let (naive, deg2) = evaluate(self.spec, &naive_weights, &theta_pi)?;
        degenerate |= deg1 | deg2;

        Ok(IterationOutput { corrected, naive, keep, degenerate })
    }
}

/// Stream index reserved for Monte-Carlo competitor draws.
pub fn competitor_stream(cfg: &RunConfig) -> ChaCha12Rng {
    derive_stream(cfg.seed, cfg.b as u64 + 1)
}
