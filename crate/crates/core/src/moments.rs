//! Moment estimation on grouped samples: group means, the block-diagonal
//! nuisance covariance, its contrast projection, and the pooled permutation
//! operation that produces the resampling counterparts.

use ndarray::{s, Array1, Array2};

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// `k` groups of `d`-variate observations, group `i` of shape `n_i x d`.
#[derive(Debug, Clone)]
pub struct GroupedSample {
    groups: Vec<Array2<f64>>,
}

impl GroupedSample {
    /// Validates `k >= 2`, every `n_i >= 2`, and a shared dimension.
    pub fn new(groups: Vec<Array2<f64>>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 groups, got {}",
                groups.len()
            )));
        }
        let d = groups[0].ncols();
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.nrows() < 2 {
                return Err(Error::InsufficientData(format!(
                    "group {} has {} observations, need at least 2",
                    i + 1,
                    g.nrows()
                )));
            }
            if g.ncols() != d {
                return Err(Error::InvalidInput(format!(
                    "group {} has dimension {}, expected {}",
                    i + 1,
                    g.ncols(),
                    d
                )));
            }
        }
        Ok(Self { groups })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn d(&self) -> usize {
        self.groups[0].ncols()
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(|g| g.nrows()).sum()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.nrows()).collect()
    }

    pub fn group(&self, i: usize) -> &Array2<f64> {
        &self.groups[i]
    }

    /// Rows of all groups stacked in group order.
    pub fn pooled(&self) -> Array2<f64> {
        let n = self.n();
        let d = self.d();
        let mut out = Array2::zeros((n, d));
        let mut offset = 0;
        for g in &self.groups {
            out.slice_mut(s![offset..offset + g.nrows(), ..]).assign(g);
            offset += g.nrows();
        }
        out
    }
}

/// Concatenated group means `(mu_1', ..., mu_k')'`.
pub fn group_mean_vector(sample: &GroupedSample) -> Array1<f64> {
    let d = sample.d();
    let mut out = Array1::zeros(sample.k() * d);
    for (i, g) in sample.groups.iter().enumerate() {
        let n_i = g.nrows() as f64;
        for j in 0..d {
            out[i * d + j] = g.column(j).sum() / n_i;
        }
    }
    out
}

/// Block-diagonal nuisance estimate: block `i` is `(n/n_i)` times the
/// unbiased sample covariance of group `i`.
pub fn gamma_hat(sample: &GroupedSample) -> Result<SymMatrix> {
    let k = sample.k();
    let d = sample.d();
    let n = sample.n() as f64;
    let mut out = Array2::zeros((k * d, k * d));
    for (i, g) in sample.groups.iter().enumerate() {
        let n_i = g.nrows();
        if n_i < 2 {
            return Err(Error::InsufficientData(format!(
                "group {} needs at least 2 observations for a covariance",
                i + 1
            )));
        }
        let cov = sample_covariance(g);
        let scale = n / n_i as f64;
        for a in 0..d {
            for b in 0..d {
                out[[i * d + a, i * d + b]] = scale * cov[[a, b]];
            }
        }
    }
    SymMatrix::new(out)
}

/// Unbiased sample covariance (denominator `n - 1`).
fn sample_covariance(g: &Array2<f64>) -> Array2<f64> {
    let n = g.nrows();
    let d = g.ncols();
    let mut mean = vec![0.0; d];
    for j in 0..d {
        mean[j] = g.column(j).sum() / n as f64;
    }
    let mut cov = Array2::zeros((d, d));
    for row in g.rows() {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[[a, b]] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            cov[[a, b]] /= denom;
            cov[[b, a]] = cov[[a, b]];
        }
    }
    cov
}

/// Contrast projection `H Gamma H'`, symmetrized.
pub fn sigma_hat(spec: &ContrastSpec, gamma: &SymMatrix) -> Result<SymMatrix> {
    if gamma.dim() != spec.k() * spec.d() {
        return Err(Error::InvalidInput(format!(
            "nuisance dimension {} does not match k*d = {}",
            gamma.dim(),
            spec.k() * spec.d()
        )));
    }
    let h = spec.matrix();
    SymMatrix::new(h.dot(gamma.matrix()).dot(&h.t()))
}

/// Reassign the pooled rows to groups of the original sizes according to a
/// permutation of `0..n`. The multiset of rows is preserved exactly.
pub fn permute_pooled(sample: &GroupedSample, perm: &[usize]) -> Result<GroupedSample> {
    let n = sample.n();
    if perm.len() != n {
        return Err(Error::InvalidInput(format!(
            "permutation length {} does not match n = {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidInput("not a permutation of 0..n".into()));
        }
        seen[p] = true;
    }
    let pooled = sample.pooled();
    let d = sample.d();
    let mut groups = Vec::with_capacity(sample.k());
    let mut offset = 0;
    for size in sample.group_sizes() {
        let mut g = Array2::zeros((size, d));
        for row in 0..size {
            g.row_mut(row).assign(&pooled.row(perm[offset + row]));
        }
        groups.push(g);
        offset += size;
    }
    // Sizes and dimension were already valid, so this cannot fail.
    GroupedSample::new(groups)
}

/// Contrast estimate `H mu_hat`.
pub fn theta_hat(spec: &ContrastSpec, sample: &GroupedSample) -> Result<Array1<f64>> {
    if spec.k() != sample.k() || spec.d() != sample.d() {
        return Err(Error::InvalidInput(format!(
            "contrast spec is for k={}, d={} but sample has k={}, d={}",
            spec.k(),
            spec.d(),
            sample.k(),
            sample.d()
        )));
    }
    Ok(spec.matrix().dot(&group_mean_vector(sample)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn two_group_sample() -> GroupedSample {
        GroupedSample::new(vec![array![[0.0], [2.0]], array![[4.0], [6.0]]]).unwrap()
    }

    #[test]
    fn mean_vector_cases() {
        assert_eq!(group_mean_vector(&two_group_sample()), array![1.0, 5.0]);

        let constant =
            GroupedSample::new(vec![array![[3.0], [3.0]], array![[3.0], [3.0], [3.0]]]).unwrap();
        assert_eq!(group_mean_vector(&constant), array![3.0, 3.0]);
    }

    #[test]
    fn mean_vector_matches_two_pass_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let g1 = Array2::from_shape_fn((17, 3), |_| crate::linalg::standard_normal(&mut rng));
        let g2 = Array2::from_shape_fn((9, 3), |_| crate::linalg::standard_normal(&mut rng));
        let sample = GroupedSample::new(vec![g1.clone(), g2.clone()]).unwrap();
        let got = group_mean_vector(&sample);
        // Two-pass oracle: accumulate, then correct by the mean of residuals.
        for (gi, g) in [g1, g2].iter().enumerate() {
            for j in 0..3 {
                let m1 = g.column(j).sum() / g.nrows() as f64;
                let resid: f64 = g.column(j).iter().map(|v| v - m1).sum::<f64>() / g.nrows() as f64;
                let oracle = m1 + resid;
                assert!((got[gi * 3 + j] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gamma_hat_blocks() {
        // Groups of two observations whose sample variance is exactly 1:
        // values {0, sqrt(2)} have mean sqrt(2)/2 and variance 1.
        let v = std::f64::consts::SQRT_2;
        let sample =
            GroupedSample::new(vec![array![[0.0], [v]], array![[0.0], [v]]]).unwrap();
        let g = gamma_hat(&sample).unwrap();
        let want = array![[2.0, 0.0], [0.0, 2.0]];
        for (a, b) in g.matrix().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        let constant =
            GroupedSample::new(vec![array![[5.0], [5.0]], array![[1.0], [2.0]]]).unwrap();
        let g = gamma_hat(&constant).unwrap();
        assert_eq!(g.matrix()[[0, 0]], 0.0);
    }

    #[test]
    fn gamma_hat_matches_definition_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let g1 = Array2::from_shape_fn((12, 2), |_| crate::linalg::standard_normal(&mut rng));
        let g2 = Array2::from_shape_fn((8, 2), |_| crate::linalg::standard_normal(&mut rng));
        let sample = GroupedSample::new(vec![g1.clone(), g2.clone()]).unwrap();
        let got = gamma_hat(&sample).unwrap();
        let n = 20.0;
        for (gi, g) in [g1, g2].iter().enumerate() {
            let ni = g.nrows() as f64;
            let mean: Vec<f64> = (0..2).map(|j| g.column(j).sum() / ni).collect();
            for a in 0..2 {
                for b in 0..2 {
                    let mut acc = 0.0;
                    for row in g.rows() {
                        acc += (row[a] - mean[a]) * (row[b] - mean[b]);
                    }
                    let oracle = (n / ni) * acc / (ni - 1.0);
                    let idx = [gi * 2 + a, gi * 2 + b];
                    assert!((got.matrix()[idx] - oracle).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn sigma_hat_cases() {
        let spec = ContrastSpec::dunnett(2).unwrap();
        let gamma = SymMatrix::new(array![[2.0, 0.0], [0.0, 2.0]]).unwrap();
        let s = sigma_hat(&spec, &gamma).unwrap();
        assert_eq!(s.matrix()[[0, 0]], 4.0);

        let zero = SymMatrix::zeros(2);
        let s = sigma_hat(&spec, &zero).unwrap();
        assert_eq!(s.matrix()[[0, 0]], 0.0);

        // Hand product for tukey(3) with diagonal nuisance (a, b, c).
        let spec = ContrastSpec::tukey(3).unwrap();
        let (a, b, c) = (1.5, 2.5, 4.0);
        let gamma =
            SymMatrix::new(Array2::from_diag(&array![a, b, c])).unwrap();
        let s = sigma_hat(&spec, &gamma).unwrap();
        let want = array![
            [a + b, a, -b],
            [a, a + c, c],
            [-b, c, b + c]
        ];
        for (x, y) in s.matrix().iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn permute_pooled_cases() {
        let sample = two_group_sample();
        let identity: Vec<usize> = (0..4).collect();
        let same = permute_pooled(&sample, &identity).unwrap();
        assert_eq!(same.group(0), sample.group(0));
        assert_eq!(same.group(1), sample.group(1));

        // Swap the first rows of groups 1 and 2 (pooled indices 0 and 2).
        let swapped = permute_pooled(&sample, &[2, 1, 0, 3]).unwrap();
        assert_eq!(swapped.group(0), &array![[4.0], [2.0]]);
        assert_eq!(swapped.group(1), &array![[0.0], [6.0]]);

        // Multiset invariance under an arbitrary permutation.
        let perm = vec![3, 0, 2, 1];
        let permuted = permute_pooled(&sample, &perm).unwrap();
        let mut before: Vec<f64> = sample.pooled().column(0).to_vec();
        let mut after: Vec<f64> = permuted.pooled().column(0).to_vec();
        before.sort_by(|a, b| a.partial_cmp(b).unwrap());
        after.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(before, after);

        assert!(permute_pooled(&sample, &[0, 0, 1, 2]).is_err());
        assert!(permute_pooled(&sample, &[0, 1]).is_err());
    }

    #[test]
    fn theta_hat_cases() {
        // Equal group means give a zero contrast.
        let equal = GroupedSample::new(vec![array![[1.0], [3.0]], array![[0.0], [4.0]]]).unwrap();
        let spec = ContrastSpec::dunnett(2).unwrap();
        let theta = theta_hat(&spec, &equal).unwrap();
        assert!(theta[0].abs() < 1e-15);

        let theta = theta_hat(&spec, &two_group_sample()).unwrap();
        assert_eq!(theta, array![4.0]);

        // Means (1, 2, 4) under tukey(3) give the pairwise differences (1, 3, 2).
        let sample = GroupedSample::new(vec![
            array![[0.0], [2.0]],
            array![[1.0], [3.0]],
            array![[3.0], [5.0]],
        ])
        .unwrap();
        let spec = ContrastSpec::tukey(3).unwrap();
        assert_eq!(theta_hat(&spec, &sample).unwrap(), array![1.0, 3.0, 2.0]);
    }

    #[test]
    fn theta_hat_is_linear_in_group_shifts() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let g1 = Array2::from_shape_fn((6, 1), |_| crate::linalg::standard_normal(&mut rng));
        let g2 = Array2::from_shape_fn((4, 1), |_| crate::linalg::standard_normal(&mut rng));
        let g3 = Array2::from_shape_fn((5, 1), |_| crate::linalg::standard_normal(&mut rng));
        let spec = ContrastSpec::tukey(3).unwrap();

        let base = GroupedSample::new(vec![g1.clone(), g2.clone(), g3.clone()]).unwrap();
        let shift = array![0.5, -1.0, 2.0];
        let shifted = GroupedSample::new(vec![
            g1.mapv(|v| v + shift[0]),
            g2.mapv(|v| v + shift[1]),
            g3.mapv(|v| v + shift[2]),
        ])
        .unwrap();

        let t0 = theta_hat(&spec, &base).unwrap();
        let t1 = theta_hat(&spec, &shifted).unwrap();
        let hc = spec.matrix().dot(&shift);
        for i in 0..3 {
            assert!((t1[i] - t0[i] - hc[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_hat_is_psd_on_random_data() {
        let mut rng = ChaCha12Rng::seed_from_u64(404);
        let groups: Vec<Array2<f64>> = (0..3)
            .map(|_| Array2::from_shape_fn((10, 2), |_| crate::linalg::standard_normal(&mut rng)))
            .collect();
        let sample = GroupedSample::new(groups).unwrap();
        let spec = ContrastSpec::tukey(3).unwrap().expand_multivariate(2).unwrap();
        let sigma = sigma_hat(&spec, &gamma_hat(&sample).unwrap()).unwrap();
        let eig = crate::linalg::sym_eigen(&sigma).unwrap();
        let tol = 6.0 * eig.d[0].max(0.0) * 1e-12;
        assert!(eig.d.iter().all(|&v| v >= -tol));
    }

    #[test]
    fn pooled_mean_preserved_under_permutation() {
        let sample = GroupedSample::new(vec![
            array![[1.0, 2.0], [3.0, 4.0]],
            array![[5.0, 6.0], [7.0, 8.0], [9.0, 0.5]],
        ])
        .unwrap();
        let perm = vec![4, 2, 0, 1, 3];
        let permuted = permute_pooled(&sample, &perm).unwrap();
        // The multiset of rows is preserved bit-exactly.
        let sort_rows = |s: &GroupedSample| {
            let mut rows: Vec<Vec<u64>> = s
                .pooled()
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect();
            rows.sort();
            rows
        };
        assert_eq!(sort_rows(&sample), sort_rows(&permuted));
    }
}
