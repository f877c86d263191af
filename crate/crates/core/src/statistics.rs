//! Statistic kernels mapping a scaled contrast estimate and a nuisance
//! estimate to per-hypothesis scalar test statistics.
//!
//! Three squared kernels cover the default suite: the standardized squared
//! statistic for scalar blocks, the Wald-type quadratic form with a
//! Moore-Penrose weight, and the ANOVA-type form standardized by a trace.
//! Signed and absolute scalar kernels are available for one-sided settings.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::linalg::{moore_penrose, SymMatrix};

/// Which kernel a test run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `x^2 / sigma^2` for scalar blocks.
    StudentSq,
    /// `x' (H_l G H_l')^+ x` (Wald-type).
    Wts,
    /// `x'x / tr(H_l G H_l')` (ANOVA-type).
    Ats,
    /// Signed scalar statistic `x / sd`.
    Signed,
    /// Absolute scalar statistic `|x| / sd`.
    Abs,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::StudentSq => "student",
            KernelKind::Wts => "wts",
            KernelKind::Ats => "ats",
            KernelKind::Signed => "signed",
            KernelKind::Abs => "abs",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "student" => Ok(KernelKind::StudentSq),
            "wts" => Ok(KernelKind::Wts),
            "ats" => Ok(KernelKind::Ats),
            "signed" => Ok(KernelKind::Signed),
            "abs" => Ok(KernelKind::Abs),
            other => Err(Error::InvalidInput(format!("unknown statistic kernel '{other}'"))),
        }
    }
}

/// Standardized squared statistic; zero when the variance estimate is zero.
pub fn student_sq(x: f64, sigma2: f64) -> f64 {
    if sigma2 <= 0.0 {
        0.0
    } else {
        x * x / sigma2
    }
}

/// Wald-type quadratic form `x' M x` for a PSD weight `M`.
pub fn wts(x: ArrayView1<'_, f64>, m: &SymMatrix) -> Result<f64> {
    if m.dim() != x.len() {
        return Err(Error::InvalidInput(format!(
            "weight matrix is {}x{} but x has length {}",
            m.dim(),
            m.dim(),
            x.len()
        )));
    }
    Ok(x.dot(&m.matrix().dot(&x)))
}

/// ANOVA-type statistic `x'x / trace`; zero (degenerate) when the trace is
/// not positive.
pub fn ats(x: ArrayView1<'_, f64>, trace_val: f64) -> (f64, bool) {
    if trace_val <= 0.0 {
        (0.0, true)
    } else {
        (x.dot(&x) / trace_val, false)
    }
}

/// Per-block kernel weights precomputed from a nuisance estimate.
#[derive(Debug, Clone)]
pub enum BlockWeight {
    Student { sigma2: f64 },
    Wts { m: SymMatrix },
    Ats { trace: f64 },
    Signed { inv_sd: f64 },
    Abs { inv_sd: f64 },
}

/// Weights for all `L` blocks of a contrast spec.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    blocks: Vec<BlockWeight>,
}

impl KernelWeights {
    pub fn n_hypotheses(&self) -> usize {
        self.blocks.len()
    }
}

/// Build per-block weights from `H_l Gamma H_l'`.
///
/// Scalar kernels require single-row blocks.
pub fn kernel_weights(
    spec: &ContrastSpec,
    gamma: &SymMatrix,
    kind: KernelKind,
) -> Result<KernelWeights> {
    if gamma.dim() != spec.k() * spec.d() {
        return Err(Error::InvalidInput(format!(
            "nuisance dimension {} does not match k*d = {}",
            gamma.dim(),
            spec.k() * spec.d()
        )));
    }
    let mut blocks = Vec::with_capacity(spec.n_hypotheses());
    for l in 0..spec.n_hypotheses() {
        let h_l = spec.block_rows(l);
        let cov: Array2<f64> = h_l.dot(gamma.matrix()).dot(&h_l.t());
        let weight = match kind {
            KernelKind::StudentSq | KernelKind::Signed | KernelKind::Abs => {
                if cov.nrows() != 1 {
                    return Err(Error::InvalidInput(format!(
                        "scalar kernel '{}' requires single-row blocks, block {} has {} rows",
                        kind.name(),
                        l + 1,
                        cov.nrows()
                    )));
                }
                let sigma2 = cov[[0, 0]];
                match kind {
                    KernelKind::StudentSq => BlockWeight::Student { sigma2 },
                    KernelKind::Signed => BlockWeight::Signed { inv_sd: inv_sd(sigma2) },
                    _ => BlockWeight::Abs { inv_sd: inv_sd(sigma2) },
                }
            }
            KernelKind::Wts => BlockWeight::Wts { m: moore_penrose(&SymMatrix::new(cov)?)? },
            KernelKind::Ats => {
                let trace = (0..cov.nrows()).map(|i| cov[[i, i]]).sum();
                BlockWeight::Ats { trace }
            }
        };
        blocks.push(weight);
    }
    Ok(KernelWeights { blocks })
}

fn inv_sd(sigma2: f64) -> f64 {
    if sigma2 > 0.0 {
        1.0 / sigma2.sqrt()
    } else {
        0.0
    }
}

/// Evaluate every block's statistic on an already scaled and centered
/// estimate vector. Returns the statistics and whether any block was
/// degenerate (zero variance or trace).
pub fn evaluate(
    spec: &ContrastSpec,
    weights: &KernelWeights,
    x: &Array1<f64>,
) -> Result<(Vec<f64>, bool)> {
    if x.len() != spec.n_rows() {
        return Err(Error::InvalidInput(format!(
            "estimate vector has length {}, expected r = {}",
            x.len(),
            spec.n_rows()
        )));
    }
    let mut out = Vec::with_capacity(weights.blocks.len());
    let mut degenerate = false;
    for (l, weight) in weights.blocks.iter().enumerate() {
        let xb = spec.block_of(x, l);
        let value = match weight {
            BlockWeight::Student { sigma2 } => {
                if *sigma2 <= 0.0 {
                    degenerate = true;
                }
                student_sq(xb[0], *sigma2)
            }
            BlockWeight::Wts { m } => wts(xb, m)?,
            BlockWeight::Ats { trace } => {
                let (v, deg) = ats(xb, *trace);
                degenerate |= deg;
                v
            }
            BlockWeight::Signed { inv_sd } => {
                if *inv_sd == 0.0 {
                    degenerate = true;
                }
                xb[0] * inv_sd
            }
            BlockWeight::Abs { inv_sd } => {
                if *inv_sd == 0.0 {
                    degenerate = true;
                }
                xb[0].abs() * inv_sd
            }
        };
        out.push(value);
    }
    Ok((out, degenerate))
}

/// Convenience wrapper: build weights and evaluate in one call.
pub fn evaluate_all(
    spec: &ContrastSpec,
    theta_scaled: &Array1<f64>,
    gamma: &SymMatrix,
    kind: KernelKind,
) -> Result<(Vec<f64>, bool)> {
    let weights = kernel_weights(spec, gamma, kind)?;
    evaluate(spec, &weights, theta_scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{gamma_hat, group_mean_vector, theta_hat, GroupedSample};
    use ndarray::array;

    #[test]
    fn student_sq_cases() {
        assert_eq!(student_sq(2.0, 4.0), 1.0);
        assert_eq!(student_sq(3.0, 0.0), 0.0);
        assert_eq!(student_sq(0.0, 7.0), 0.0);
    }

    #[test]
    fn wts_cases() {
        let x = array![1.0, 0.0];
        let m = SymMatrix::new(Array2::eye(2)).unwrap();
        assert_eq!(wts(x.view(), &m).unwrap(), 1.0);

        let zero = SymMatrix::zeros(2);
        assert_eq!(wts(array![3.0, -4.0].view(), &zero).unwrap(), 0.0);

        let m = SymMatrix::new(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        assert_eq!(wts(array![1.0, 1.0].view(), &m).unwrap(), 6.0);

        assert!(wts(array![1.0].view(), &m).is_err());
    }

    #[test]
    fn ats_cases() {
        assert_eq!(ats(array![1.0, 1.0].view(), 2.0), (1.0, false));
        assert_eq!(ats(array![0.0, 0.0].view(), 3.0), (0.0, false));
        assert_eq!(ats(array![3.0, 4.0].view(), 5.0), (5.0, false));
        assert_eq!(ats(array![1.0].view(), 0.0), (0.0, true));
    }

    #[test]
    fn statistics_vanish_at_the_null_point() {
        let spec = ContrastSpec::tukey(3).unwrap();
        let gamma = SymMatrix::new(Array2::eye(3)).unwrap();
        let zero = Array1::zeros(3);
        for kind in [KernelKind::StudentSq, KernelKind::Wts, KernelKind::Ats] {
            let (vals, _) = evaluate_all(&spec, &zero, &gamma, kind).unwrap();
            assert!(vals.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn squared_kernels_are_even() {
        let spec = ContrastSpec::dunnett(3).unwrap();
        let gamma = SymMatrix::new(array![
            [2.0, 0.0, 0.0],
            [0.0, 1.5, 0.0],
            [0.0, 0.0, 3.0]
        ])
        .unwrap();
        let x = array![1.3, -0.7];
        let neg = x.mapv(|v| -v);
        for kind in [KernelKind::StudentSq, KernelKind::Wts, KernelKind::Ats] {
            let (a, _) = evaluate_all(&spec, &x, &gamma, kind).unwrap();
            let (b, _) = evaluate_all(&spec, &neg, &gamma, kind).unwrap();
            for (u, v) in a.iter().zip(b.iter()) {
                assert!((u - v).abs() < 1e-14);
                assert!(*u >= 0.0);
            }
        }
    }

    #[test]
    fn global_wts_matches_full_pseudoinverse_form() {
        // With a single block, the Wald weight is the Moore-Penrose inverse
        // of the full H Gamma H'.
        let sample = GroupedSample::new(vec![
            array![[0.1], [1.9], [0.7]],
            array![[2.0], [3.5], [2.6]],
            array![[4.2], [5.0], [3.3]],
        ])
        .unwrap();
        let spec = ContrastSpec::tukey(3).unwrap().as_global();
        let gamma = gamma_hat(&sample).unwrap();
        let n = sample.n() as f64;
        let theta = theta_hat(&ContrastSpec::tukey(3).unwrap(), &sample).unwrap();
        let x = theta.mapv(|v| n.sqrt() * v);

        let (vals, _) = evaluate_all(&spec, &x, &gamma, KernelKind::Wts).unwrap();
        let sigma = crate::moments::sigma_hat(&ContrastSpec::tukey(3).unwrap(), &gamma).unwrap();
        let pinv = moore_penrose(&sigma).unwrap();
        let direct = n * theta.dot(&pinv.matrix().dot(&theta));
        assert!((vals[0] - direct).abs() < 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn student_matches_scalar_formula_oracle() {
        // Two groups, d = 1: the statistic is n (mu2 - mu1)^2 over the
        // weighted variance sum.
        let sample = GroupedSample::new(vec![
            array![[0.3], [1.2], [0.8], [2.0]],
            array![[2.4], [3.3], [2.9]],
        ])
        .unwrap();
        let spec = ContrastSpec::dunnett(2).unwrap();
        let gamma = gamma_hat(&sample).unwrap();
        let n = sample.n() as f64;
        let mu = group_mean_vector(&sample);
        let theta = theta_hat(&spec, &sample).unwrap();
        let x = theta.mapv(|v| n.sqrt() * v);
        let (vals, _) = evaluate_all(&spec, &x, &gamma, KernelKind::StudentSq).unwrap();

        let var = |g: &Array2<f64>| {
            let m = g.column(0).sum() / g.nrows() as f64;
            g.column(0).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (g.nrows() - 1) as f64
        };
        let (n1, n2) = (4.0, 3.0);
        let denom = n / n1 * var(sample.group(0)) + n / n2 * var(sample.group(1));
        let oracle = n * (mu[1] - mu[0]) * (mu[1] - mu[0]) / denom;
        assert!((vals[0] - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn wts_invariant_under_reparametrization() {
        use crate::linalg::haar_orthogonal;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            // Full-rank M built from a random spectrum, invertible T.
            let q = haar_orthogonal(3, &mut rng).unwrap();
            let d = array![
                1.0 + 4.0 * rand::Rng::random::<f64>(&mut rng),
                0.5 + rand::Rng::random::<f64>(&mut rng),
                0.1 + rand::Rng::random::<f64>(&mut rng)
            ];
            let qd = &q * &d.view().insert_axis(ndarray::Axis(0));
            let m = SymMatrix::new(qd.dot(&q.t())).unwrap();
            let t = Array2::from_shape_fn((3, 3), |_| crate::linalg::standard_normal(&mut rng));
            let x = Array1::from_shape_fn(3, |_| crate::linalg::standard_normal(&mut rng));

            let m_inv = moore_penrose(&m).unwrap();
            let tmt = SymMatrix::new(t.dot(m_inv.matrix()).dot(&t.t())).unwrap();
            let weight = moore_penrose(&tmt).unwrap();
            let tx = t.dot(&x);

            let lhs = wts(tx.view(), &weight).unwrap();
            let rhs = wts(x.view(), &m).unwrap();
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn ats_scaling_identity() {
        let x = array![0.4, -1.1, 2.2];
        let c = 3.7;
        let (a, _) = ats(x.view(), 5.0);
        let scaled = x.mapv(|v| c * v);
        let (b, _) = ats(scaled.view(), c * c * 5.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn signed_and_abs_kernels() {
        let spec = ContrastSpec::dunnett(2).unwrap();
        let gamma = SymMatrix::new(array![[2.0, 0.0], [0.0, 2.0]]).unwrap();
        // sigma^2 of the difference block is 4, sd = 2.
        let x = array![-3.0];
        let (signed, _) = evaluate_all(&spec, &x, &gamma, KernelKind::Signed).unwrap();
        assert!((signed[0] + 1.5).abs() < 1e-14);
        let (abs, _) = evaluate_all(&spec, &x, &gamma, KernelKind::Abs).unwrap();
        assert!((abs[0] - 1.5).abs() < 1e-14);
    }
}
