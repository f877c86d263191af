//! Hypothesis matrices for multiple contrast tests.
//!
//! A [`ContrastSpec`] bundles the stacked matrix `H` with its partition into
//! per-hypothesis row blocks `H_1, ..., H_L`. Factories are provided for the
//! Dunnett (many-to-one), centering (grand mean), and Tukey (all pairs)
//! families; arbitrary user matrices are accepted as well.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, sym_eigen, SymMatrix};

/// Tolerance for the contrast property `H (1 (x) I) = 0`.
const CONTRAST_TOL: f64 = 1e-12;

/// One hypothesis block: a contiguous range of rows of `H` with a label.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastBlock {
    pub start: usize,
    pub len: usize,
    pub label: String,
}

/// A stacked hypothesis matrix `H` (`r x k*d`) partitioned into `L` blocks.
#[derive(Debug, Clone)]
pub struct ContrastSpec {
    h: Array2<f64>,
    blocks: Vec<ContrastBlock>,
    k: usize,
    d: usize,
}

impl ContrastSpec {
    /// Build a spec from a matrix and block sizes. Blocks must partition the
    /// rows of `H` exactly.
    pub fn new(h: Array2<f64>, block_sizes: &[usize], labels: Vec<String>, k: usize, d: usize) -> Result<Self> {
        let r = h.nrows();
        if h.ncols() != k * d {
            return Err(Error::InvalidInput(format!(
                "contrast matrix has {} columns, expected k*d = {}",
                h.ncols(),
                k * d
            )));
        }
        if block_sizes.is_empty() || block_sizes.iter().sum::<usize>() != r {
            return Err(Error::InvalidInput(format!(
                "block sizes {block_sizes:?} do not partition {r} rows"
            )));
        }
        if block_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput("empty contrast block".into()));
        }
        if labels.len() != block_sizes.len() {
            return Err(Error::InvalidInput("one label per block required".into()));
        }
        let mut blocks = Vec::with_capacity(block_sizes.len());
        let mut start = 0;
        for (len, label) in block_sizes.iter().zip(labels) {
            blocks.push(ContrastBlock { start, len: *len, label });
            start += len;
        }
        Ok(Self { h, blocks, k, d })
    }

    /// Dunnett-type many-to-one contrasts: row `l` is `e_{l+1}' - e_1'`.
    pub fn dunnett(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput("dunnett contrasts need k >= 2".into()));
        }
        let mut h = Array2::zeros((k - 1, k));
        let mut labels = Vec::with_capacity(k - 1);
        for l in 0..k - 1 {
            h[[l, 0]] = -1.0;
            h[[l, l + 1]] = 1.0;
            labels.push(format!("g{}-g1", l + 2));
        }
        Self::new(h, &vec![1; k - 1], labels, k, 1)
    }

    /// Centering (grand mean) contrasts: `I - (1/k) 11'`.
    pub fn centering(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput("centering contrasts need k >= 2".into()));
        }
        let mut h = Array2::from_elem((k, k), -1.0 / k as f64);
        for i in 0..k {
            h[[i, i]] += 1.0;
        }
        let labels = (1..=k).map(|i| format!("g{i}-mean")).collect();
        Self::new(h, &vec![1; k], labels, k, 1)
    }

    /// Tukey-type all-pairs contrasts, ordered by first index then second:
    /// rows `e_{l2}' - e_{l1}'` for `l1 < l2`.
    pub fn tukey(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput("tukey contrasts need k >= 2".into()));
        }
        let rows = k * (k - 1) / 2;
        let mut h = Array2::zeros((rows, k));
        let mut labels = Vec::with_capacity(rows);
        let mut row = 0;
        for l1 in 0..k {
            for l2 in (l1 + 1)..k {
                h[[row, l1]] = -1.0;
                h[[row, l2]] = 1.0;
                labels.push(format!("g{}-g{}", l2 + 1, l1 + 1));
                row += 1;
            }
        }
        Self::new(h, &vec![1; rows], labels, k, 1)
    }

    /// Expand a univariate spec to `d`-variate data: each scalar row `h_l`
    /// becomes the block `h_l (x) I_d`.
    pub fn expand_multivariate(&self, d: usize) -> Result<Self> {
        if self.d != 1 {
            return Err(Error::InvalidInput("expand_multivariate requires a d=1 spec".into()));
        }
        if d < 1 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        if d == 1 {
            return Ok(self.clone());
        }
        let r = self.h.nrows();
        let mut h = Array2::zeros((r * d, self.k * d));
        for row in 0..r {
            for col in 0..self.k {
                let v = self.h[[row, col]];
                if v != 0.0 {
                    for j in 0..d {
                        h[[row * d + j, col * d + j]] = v;
                    }
                }
            }
        }
        // This expansion targets specs whose blocks are single rows; each row
        // block becomes one block of d rows.
        if self.blocks.iter().any(|b| b.len != 1) {
            return Err(Error::InvalidInput(
                "expand_multivariate requires single-row blocks".into(),
            ));
        }
        let labels = self.blocks.iter().map(|b| b.label.clone()).collect();
        Self::new(h, &vec![d; r], labels, self.k, d)
    }

    /// Merge all blocks into a single global hypothesis (`L = 1`).
    pub fn as_global(&self) -> Self {
        let r = self.h.nrows();
        Self {
            h: self.h.clone(),
            blocks: vec![ContrastBlock { start: 0, len: r, label: "global".into() }],
            k: self.k,
            d: self.d,
        }
    }

    /// The contrast property: `max |H (1_k (x) I_d)| <= 1e-12`.
    pub fn check_contrast(&self) -> bool {
        // H (1 (x) I) sums the k column-blocks of H.
        let r = self.h.nrows();
        let mut max = 0.0_f64;
        for row in 0..r {
            for j in 0..self.d {
                let mut sum = 0.0;
                for i in 0..self.k {
                    sum += self.h[[row, i * self.d + j]];
                }
                max = max.max(sum.abs());
            }
        }
        max <= CONTRAST_TOL
    }

    /// Numerical rank of `H`, via the eigenvalues of `H H'`.
    pub fn rank(&self) -> usize {
        let hht = SymMatrix::new(self.h.dot(&self.h.t())).expect("square by construction");
        let eig = sym_eigen(&hht).expect("finite entries");
        numerical_rank(eig.d.as_slice().unwrap(), eig.dim())
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn blocks(&self) -> &[ContrastBlock] {
        &self.blocks
    }

    /// Number of hypotheses `L`.
    pub fn n_hypotheses(&self) -> usize {
        self.blocks.len()
    }

    /// Total row count `r`.
    pub fn n_rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Rows of block `l` as a view.
    pub fn block_rows(&self, l: usize) -> ArrayView2<'_, f64> {
        let b = &self.blocks[l];
        self.h.slice(s![b.start..b.start + b.len, ..])
    }

    /// Slice the block-`l` entries out of a length-`r` vector.
    pub fn block_of<'a>(&self, v: &'a Array1<f64>, l: usize) -> ndarray::ArrayView1<'a, f64> {
        let b = &self.blocks[l];
        v.slice(s![b.start..b.start + b.len])
    }

    pub fn labels(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.label.clone()).collect()
    }
}
