//! Reference computations that avoid the fast path: dense eigensolvers, the
//! quadrature estimator without landmark compression, and empirical
//! baselines over unrelated signal pairs.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::did::{check_compatible, did_with_factors, DidConfig, LandmarkFactors};
use crate::error::{invalid, DidError, Result};
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::par;
use crate::signal::{MaskVector, SampledSignal};
use crate::warp::rmse;

const MAX_DENSE_EIG: usize = 4096;
const MAX_DENSE_SAMPLES: usize = 1024;

/// Largest eigenvalue and a unit eigenvector of a symmetric matrix, from a
/// full eigendecomposition.
pub fn dense_top_eig(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(invalid("dense eigensolver needs a non-empty square matrix"));
    }
    if n > MAX_DENSE_EIG {
        return Err(DidError::ResourceLimit(format!(
            "{n}x{n} exceeds the dense eigensolver limit of {MAX_DENSE_EIG}"
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-10 * scale {
        return Err(invalid("dense eigensolver input is not symmetric"));
    }
    let eig = SymmetricEigen::new(m.clone());
    let (k, value) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    Ok((value, eig.eigenvectors.column(k).into_owned()))
}

/// Top eigenvalue of `lambda A^T (B B^T + lambda I)^{-1} A`, forming the
/// `M_Y x M_Y` inverse explicitly. Independent of the reduced route used by
/// the estimator.
pub fn dense_t_hat(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let m_y = b.nrows();
    if m_y > MAX_DENSE_EIG {
        return Err(DidError::ResourceLimit(format!(
            "M_Y = {m_y} too large for the dense reference"
        )));
    }
    let mut c = b * b.transpose();
    for i in 0..m_y {
        c[(i, i)] += lambda;
    }
    let c_inv = c
        .try_inverse()
        .ok_or_else(|| invalid("B B^T + lambda I is not invertible"))?;
    let t = a.transpose() * c_inv * a * lambda;
    Ok((&t + t.transpose()) * 0.5)
}

/// Quadrature estimate without landmark compression.
///
/// Both signals must share their sample coordinates. With `S = K_XX^{1/2}`
/// and `c = v/N`, the operators restricted to the span of the sample
/// features give
///
/// ```text
/// D = top eig( F*F - F*G (G*G + lambda)^{-1} G*F )
/// F*F = c^2 S M K_ff M S,  F*G = c^2 S M K_fg S,  G*G = c^2 S K_gg S
/// ```
///
/// where `M = diag(mask)`. No output-space factorization is needed, so
/// repeated colors are harmless.
pub fn did_dense_oracle(
    f: &SampledSignal,
    g: &SampledSignal,
    mask: &MaskVector,
    kernel_x: &KernelSpec,
    kernel_y: &KernelSpec,
    lambda: f64,
) -> Result<f64> {
    check_compatible(f, g)?;
    let n = f.len();
    if n > MAX_DENSE_SAMPLES {
        return Err(DidError::ResourceLimit(format!(
            "{n} samples exceed the dense oracle limit of {MAX_DENSE_SAMPLES}"
        )));
    }
    if f.coords() != g.coords() {
        return Err(invalid(
            "dense oracle needs both signals on the same sample points",
        ));
    }
    if mask.len() != n {
        return Err(invalid("mask length does not match the signal"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let kxx = kernel_matrix(kernel_x, f.coords(), f.coords())?;
    let eig = SymmetricEigen::new(kxx);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let s = (&s + s.transpose()) * 0.5;

    let c2 = (f.volume() / n as f64).powi(2);
    let mu = DMatrix::from_diagonal(&DVector::from_column_slice(mask.weights()));
    let kff = kernel_matrix(kernel_y, f.values(), f.values())?;
    let kfg = kernel_matrix(kernel_y, f.values(), g.values())?;
    let kgg = kernel_matrix(kernel_y, g.values(), g.values())?;

    let ff = (&s * &mu * kff * &mu * &s) * c2;
    let fg = (&s * &mu * kfg * &s) * c2;
    let mut gg = (&s * kgg * &s) * c2;
    gg = (&gg + gg.transpose()) * 0.5;
    for i in 0..n {
        gg[(i, i)] += lambda;
    }
    let chol = Cholesky::new(gg).ok_or_else(|| invalid("G*G + lambda is not positive definite"))?;
    let t = &ff - &fg * chol.solve(&fg.transpose());
    let t = (&t + t.transpose()) * 0.5;
    Ok(dense_top_eig(&t)?.0.max(0.0))
}

/// Empirical 90% band of a dissimilarity over unrelated pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomRegime {
    pub samples: Vec<f64>,
    /// 5th percentile.
    pub lo: f64,
    pub median: f64,
    /// 95th percentile.
    pub hi: f64,
}

pub const MIN_REGIME_SAMPLES: usize = 20;

impl RandomRegime {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < MIN_REGIME_SAMPLES {
            return Err(invalid(format!(
                "random regime needs at least {MIN_REGIME_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("random regime samples must be finite"));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            lo: percentile_sorted(&sorted, 5.0),
            median: percentile_sorted(&sorted, 50.0),
            hi: percentile_sorted(&sorted, 95.0),
            samples,
        })
    }
}

/// Percentile with linear interpolation between closest ranks
/// (rank `q/100 * (n - 1)`).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Did,
    Rmse,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Did => "did",
            Metric::Rmse => "rmse",
        }
    }
}

/// Evaluates `metric` on every pair and summarizes the spread.
///
/// For DID one set of landmark factors is shared by all pairs; unless the
/// config fixes a color box, it covers the values of every signal involved.
pub fn random_regime(
    pairs: &[(SampledSignal, SampledSignal)],
    metric: Metric,
    config: &DidConfig,
) -> Result<RandomRegime> {
    if pairs.len() < MIN_REGIME_SAMPLES {
        return Err(invalid(format!(
            "random regime needs at least {MIN_REGIME_SAMPLES} pairs, got {}",
            pairs.len()
        )));
    }
    let samples: Result<Vec<f64>> = match metric {
        Metric::Rmse => par::map(pairs, |(f, g)| rmse(f, g)).into_iter().collect(),
        Metric::Did => {
            let all: Vec<&SampledSignal> = pairs.iter().flat_map(|(f, g)| [f, g]).collect();
            let factors = LandmarkFactors::for_signals(&pairs[0].0, &all, config)?;
            par::map(pairs, |(f, g)| {
                did_with_factors(f, g, config, &factors).map(|r| r.value)
            })
            .into_iter()
            .collect()
        }
    };
    RandomRegime::from_samples(samples?)
}
