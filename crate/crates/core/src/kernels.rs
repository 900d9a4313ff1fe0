//! Translation-invariant kernels on point sets, Gram assembly, and a
//! jitter-escalating upper Cholesky factorization.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{invalid, DidError, Result};
use crate::par;

/// Dense kernel matrix; entry `(i, j)` is `k(a_i, b_j)`.
pub type KernelMatrix = DMatrix<f64>;

/// A list of points of a common dimension, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("point dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "flat buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<P: AsRef<[f64]>>(rows: &[P]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| invalid("empty point list"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(invalid(format!(
                    "mixed point dimensions: {} and {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Concatenates two point sets of equal dimension.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.dim != other.dim {
            return Err(invalid(format!(
                "cannot concatenate points of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        PointSet::new(self.dim, data)
    }

    /// Drops exact duplicates, keeping the first occurrence of each point.
    pub fn dedup(&self) -> PointSet {
        let mut seen = std::collections::HashSet::with_capacity(self.len());
        let mut data = Vec::with_capacity(self.data.len());
        for p in self.iter() {
            // -0.0 and 0.0 are the same point.
            let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
            if seen.insert(key) {
                data.extend_from_slice(p);
            }
        }
        PointSet {
            dim: self.dim,
            data,
        }
    }

    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        PointSet {
            dim: self.dim,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `exp(-|x - x'|^2 / (2 sigma^2))`
    Gaussian,
    /// `exp(-a |x - x'|)`, also known as the Abel kernel.
    Laplace,
}

/// A kernel family together with its scale parameter (sigma for Gaussian,
/// decay rate `a` for Laplace).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    param: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, param: f64) -> Result<Self> {
        if !(param > 0.0 && param.is_finite()) {
            return Err(invalid(format!(
                "kernel parameter must be positive and finite, got {param}"
            )));
        }
        Ok(Self { family, param })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, sigma)
    }

    pub fn laplace(a: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplace, a)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn param(&self) -> f64 {
        self.param
    }

    /// Kernel value from a squared Euclidean distance.
    #[inline]
    pub fn from_sq_dist(&self, sq: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-sq / (2.0 * self.param * self.param)).exp(),
            KernelFamily::Laplace => (-self.param * sq.sqrt()).exp(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(invalid(format!(
                "kernel arguments differ in dimension: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        Ok(self.from_sq_dist(sq_dist(x, y)))
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Evaluates `spec` on a single pair of points.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// Assembles the `|a| x |b|` matrix with entries `k(a_i, b_j)`.
///
/// Columns are filled independently, so the result is identical whatever the
/// degree of parallelism.
pub fn kernel_matrix(spec: &KernelSpec, a: &PointSet, b: &PointSet) -> Result<KernelMatrix> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("kernel matrix requested for an empty point list"));
    }
    if a.dim() != b.dim() {
        return Err(invalid(format!(
            "point sets differ in dimension: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let rows = a.len();
    let mut buf = vec![0.0; rows * b.len()];
    par::fill_chunks(&mut buf, rows, |j, col| {
        let bj = b.point(j);
        for (i, out) in col.iter_mut().enumerate() {
            *out = spec.from_sq_dist(sq_dist(a.point(i), bj));
        }
    });
    Ok(DMatrix::from_vec(rows, b.len(), buf))
}

/// Relative jitter levels tried in order; each is multiplied by `trace(K)/n`.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// Upper-triangular factor `R` with `R^T R = K + jitter * I`.
#[derive(Debug, Clone)]
pub struct UpperCholesky {
    upper: DMatrix<f64>,
    jitter: f64,
}

impl UpperCholesky {
    pub fn upper(&self) -> &DMatrix<f64> {
        &self.upper
    }

    /// Diagonal shift that was added before factorizing.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn size(&self) -> usize {
        self.upper.nrows()
    }

    /// `R^{-T} b`
    pub fn solve_transpose(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.upper
            .tr_solve_upper_triangular(b)
            .expect("factor has a nonzero diagonal")
    }

    /// `R^{-1} b`
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.upper
            .solve_upper_triangular(b)
            .expect("factor has a nonzero diagonal")
    }

    /// `x R^{-1}` for a matrix with `size()` columns.
    pub fn right_solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        // x R^{-1} = (R^{-T} x^T)^T
        self.solve_transpose(&x.transpose()).transpose()
    }
}

/// Factorizes a symmetric PSD matrix, escalating diagonal jitter along
/// [`JITTER_LADDER`] until the factorization succeeds.
pub fn cholesky_upper(k: &KernelMatrix) -> Result<UpperCholesky> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n {
        return Err(invalid(format!(
            "cholesky needs a non-empty square matrix, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let scale = k.amax().max(f64::MIN_POSITIVE);
    let asym = (k - k.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(invalid(format!(
            "cholesky input is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let mean_diag = k.trace() / n as f64;
    for rel in JITTER_LADDER {
        let jitter = rel * mean_diag;
        let mut shifted = k.clone();
        if jitter > 0.0 {
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let upper = chol.l().transpose();
            if upper.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok(UpperCholesky { upper, jitter });
            }
        }
    }
    Err(DidError::SingularKernelMatrix {
        size: n,
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * mean_diag,
    })
}
