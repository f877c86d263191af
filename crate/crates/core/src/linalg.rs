//! Dense symmetric linear algebra and randomization primitives.
//!
//! Everything here is sized for the small matrices occurring in multiple
//! contrast testing (dimension at most a few dozen): a cyclic Jacobi
//! eigensolver, matrix square roots and pseudoinverses built on it, and
//! samplers for Haar-distributed orthogonal matrices and Rademacher signs.
//! All functions are pure; RNG streams are caller-owned.

use ndarray::{Array1, Array2};
use rand::RngCore;

use crate::error::{Error, Result};

/// Relative tolerance factor for numerical rank decisions.
const RANK_TOL_FACTOR: f64 = 1e-12;

/// Jacobi convergence: off-diagonal Frobenius norm relative to the input norm.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// A real symmetric matrix.
///
/// Symmetry is enforced on construction by replacing the input with
/// `(A + A')/2`, which makes `entry(i, j) == entry(j, i)` hold exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    /// Symmetrize a square matrix and wrap it.
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidInput(format!(
                "symmetric matrix must be square and non-empty, got {r}x{c}"
            )));
        }
        let mut data = Array2::zeros((r, r));
        for i in 0..r {
            for j in 0..r {
                data[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
            }
        }
        Ok(Self { data })
    }

    /// Zero matrix of the given dimension.
    pub fn zeros(dim: usize) -> Self {
        Self { data: Array2::zeros((dim, dim)) }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Eigendecomposition of a symmetric matrix: orthogonal `u` (eigenvectors as
/// columns) and eigenvalues `d` sorted non-increasing, so `A = U diag(d) U'`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub u: Array2<f64>,
    pub d: Array1<f64>,
}

impl EigenPair {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Reconstruct `U diag(d) U'`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let ud = &self.u * &self.d.view().insert_axis(ndarray::Axis(0));
        ud.dot(&self.u.t())
    }

    /// Numerical rank of the decomposed matrix, see [`numerical_rank`].
    pub fn rank(&self) -> usize {
        numerical_rank(self.d.as_slice().unwrap(), self.dim())
    }
}

/// One block of a block-diagonal rotation matrix: either an orthogonal
/// matrix or an all-zero block.
#[derive(Debug, Clone)]
pub enum RotationBlock {
    Orthogonal(Array2<f64>),
    Zero(usize),
}

impl RotationBlock {
    pub fn size(&self) -> usize {
        match self {
            RotationBlock::Orthogonal(q) => q.nrows(),
            RotationBlock::Zero(s) => *s,
        }
    }
}

/// Block-diagonal matrix whose blocks are orthogonal matrices or zero blocks.
#[derive(Debug, Clone)]
pub struct OrthogonalBlockMatrix {
    blocks: Vec<RotationBlock>,
    total_dim: usize,
}

impl OrthogonalBlockMatrix {
    pub fn new(blocks: Vec<RotationBlock>) -> Self {
        let total_dim = blocks.iter().map(|b| b.size()).sum();
        Self { blocks, total_dim }
    }

    pub fn dim(&self) -> usize {
        self.total_dim
    }

    pub fn blocks(&self) -> &[RotationBlock] {
        &self.blocks
    }

    /// Apply the block matrix to a vector.
    pub fn apply(&self, v: &Array1<f64>) -> Array1<f64> {
        assert_eq!(v.len(), self.total_dim, "dimension mismatch");
        let mut out = Array1::zeros(self.total_dim);
        let mut offset = 0;
        for block in &self.blocks {
            let s = block.size();
            if let RotationBlock::Orthogonal(q) = block {
                let seg = v.slice(ndarray::s![offset..offset + s]);
                let res = q.dot(&seg);
                out.slice_mut(ndarray::s![offset..offset + s]).assign(&res);
            }
            offset += s;
        }
        out
    }

    /// Dense representation, mainly for tests and diagnostics.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.total_dim, self.total_dim));
        let mut offset = 0;
        for block in &self.blocks {
            let s = block.size();
            if let RotationBlock::Orthogonal(q) = block {
                out.slice_mut(ndarray::s![offset..offset + s, offset..offset + s])
                    .assign(q);
            }
            offset += s;
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
///
/// Deterministic for a fixed input. Converges when the off-diagonal
/// Frobenius norm falls below `1e-12 * ||A||_F` or after 100 sweeps.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenPair> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = a.dim();
    // Flat row-major buffers keep the rotation loops cheap.
    let mut m: Vec<f64> = a.matrix().iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = JACOBI_TOL * norm;

    if n > 1 && norm > 0.0 {
        for _sweep in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    let x = m[p * n + q];
                    off += 2.0 * x * x;
                }
            }
            if off.sqrt() <= threshold {
                break;
            }
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    jacobi_rotate(&mut m, &mut v, n, p, q);
                }
            }
        }
    }

    // Sort eigenvalues non-increasing, carrying the eigenvector columns.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].partial_cmp(&m[i * n + i]).unwrap().then(i.cmp(&j)));
    let mut d = Array1::zeros(n);
    let mut u = Array2::zeros((n, n));
    for (col, &idx) in order.iter().enumerate() {
        d[col] = m[idx * n + idx];
        for row in 0..n {
            u[[row, col]] = v[row * n + idx];
        }
    }
    Ok(EigenPair { u, d })
}

fn jacobi_rotate(m: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    // An off-diagonal element too small to move the diagonal at machine
    // precision is zeroed without a rotation.
    if 100.0 * apq.abs() <= f64::EPSILON * (app.abs() + aqq.abs()) {
        m[p * n + q] = 0.0;
        m[q * n + p] = 0.0;
        return;
    }
    let theta = (aqq - app) / (2.0 * apq);
    // t = sgn(theta) / (|theta| + sqrt(theta^2 + 1)), guarded against overflow
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let s = if theta >= 0.0 { 1.0 } else { -1.0 };
        s / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    m[p * n + p] = app - t * apq;
    m[q * n + q] = aqq + t * apq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;
    for i in 0..n {
        if i != p && i != q {
            let aip = m[i * n + p];
            let aiq = m[i * n + q];
            m[i * n + p] = c * aip - s * aiq;
            m[p * n + i] = m[i * n + p];
            m[i * n + q] = s * aip + c * aiq;
            m[q * n + i] = m[i * n + q];
        }
    }
    for i in 0..n {
        let vip = v[i * n + p];
        let viq = v[i * n + q];
        v[i * n + p] = c * vip - s * viq;
        v[i * n + q] = s * vip + c * viq;
    }
}

/// Zero out all eigenvalues beyond the first `keep` entries.
pub fn truncate_tail(d: &[f64], keep: usize) -> Result<Vec<f64>> {
    if keep > d.len() {
        return Err(Error::InvalidInput(format!(
            "keep = {keep} out of range for {} eigenvalues",
            d.len()
        )));
    }
    let mut out = d.to_vec();
    for v in out.iter_mut().skip(keep) {
        *v = 0.0;
    }
    Ok(out)
}

/// Count of eigenvalues above the scale-relative tolerance
/// `dim * max(d[0], 0) * 1e-12`; zero if the largest eigenvalue is not positive.
///
/// Expects `d` sorted non-increasing.
pub fn numerical_rank(d: &[f64], dim: usize) -> usize {
    let max = d.first().copied().unwrap_or(0.0).max(0.0);
    if max <= 0.0 {
        return 0;
    }
    let tol = dim as f64 * max * RANK_TOL_FACTOR;
    d.iter().take_while(|&&v| v > tol).count()
}

/// Diagonal of `((D^{1/2})^+` after truncation: entry `i` is `1/sqrt(d[i])`
/// for `i < keep` and `d[i] > 0`, and zero otherwise.
pub fn pinv_sqrt_diag(d: &[f64], keep: usize) -> Vec<f64> {
    d.iter()
        .enumerate()
        .map(|(i, &v)| if i < keep && v > 0.0 { 1.0 / v.sqrt() } else { 0.0 })
        .collect()
}

/// Symmetric PSD square root `U diag(max(d,0)^{1/2}) U'`.
///
/// Eigenvalues below the rank tolerance are clamped to zero; a materially
/// negative eigenvalue is an error.
pub fn sqrt_psd(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    let n = a.dim();
    let max = eig.d[0].max(0.0);
    let tol = n as f64 * max * RANK_TOL_FACTOR;
    if eig.d[n - 1] < -tol {
        return Err(Error::NotPsd(format!(
            "eigenvalue {} below -{tol:.3e}",
            eig.d[n - 1]
        )));
    }
    let sqrt_d: Array1<f64> = eig.d.mapv(|v| v.max(0.0).sqrt());
    let ud = &eig.u * &sqrt_d.view().insert_axis(ndarray::Axis(0));
    SymMatrix::new(ud.dot(&eig.u.t()))
}

/// Moore-Penrose inverse of a symmetric matrix: eigenvalues with magnitude
/// above the rank tolerance are inverted, the rest are zeroed.
pub fn moore_penrose(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    let n = a.dim();
    let max_abs = eig.d.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = n as f64 * max_abs * RANK_TOL_FACTOR;
    let inv_d: Array1<f64> = eig.d.mapv(|v| if v.abs() > tol { 1.0 / v } else { 0.0 });
    let ud = &eig.u * &inv_d.view().insert_axis(ndarray::Axis(0));
    SymMatrix::new(ud.dot(&eig.u.t()))
}

/// Draw a Haar-distributed orthogonal `m x m` matrix.
///
/// QR decomposition of an i.i.d. standard normal matrix with the R-diagonal
/// sign fix (column `j` of Q multiplied by `sign(R_jj)`), which makes the
/// result exactly Haar distributed. Deterministic per RNG state.
pub fn haar_orthogonal<R: RngCore>(m: usize, rng: &mut R) -> Result<Array2<f64>> {
    if m < 1 {
        return Err(Error::InvalidInput("orthogonal dimension must be >= 1".into()));
    }
    let mut a = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            a[[i, j]] = standard_normal(rng);
        }
    }
    let (mut q, r_diag) = householder_qr(a);
    for j in 0..m {
        if r_diag[j] < 0.0 {
            for i in 0..m {
                q[[i, j]] = -q[[i, j]];
            }
        }
    }
    Ok(q)
}

/// Full Householder QR of a square matrix; returns Q and the diagonal of R.
fn householder_qr(mut a: Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let m = a.nrows();
    let mut q: Array2<f64> = Array2::eye(m);
    for k in 0..m.saturating_sub(1) {
        let mut norm = 0.0;
        for i in k..m {
            norm += a[[i, k]] * a[[i, k]];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[[k, k]] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - k];
        v[0] = a[[k, k]] - alpha;
        for i in (k + 1)..m {
            v[i - k] = a[[i, k]];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // Apply the reflector H = I - 2 v v'/(v'v) to A (left) and to Q.
        for j in k..m {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * a[[i, j]];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                a[[i, j]] -= f * v[i - k];
            }
        }
        for j in 0..m {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * q[[j, i]];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                q[[j, i]] -= f * v[i - k];
            }
        }
    }
    let r_diag = (0..m).map(|i| a[[i, i]]).collect();
    (q, r_diag)
}

/// Vector of `r` i.i.d. fair random signs.
pub fn rademacher_diag<R: RngCore>(r: usize, rng: &mut R) -> Vec<f64> {
    (0..r)
        .map(|_| if rng.next_u64() & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

/// Standard normal draw from a raw RNG stream.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}
