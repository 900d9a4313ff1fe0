//! The dissimilarity estimator itself: Nystrom-projected quadrature
//! operators, the regularized operator norm, and witness recovery.
//!
//! With landmark factors `R_X`, `R_Y` (upper Cholesky of the landmark Gram
//! matrices) the reference and target signals are represented by
//!
//! ```text
//! A = (v/N) R_Y^{-T} K_{Y f} diag(mu) K_{X Xl} R_X^{-1}
//! B = (v/N) R_Y^{-T} K_{Y g}          K_{X Xl} R_X^{-1}
//! ```
//!
//! and the estimate is `lambda * ||A^T (B B^T + lambda I)^{-1} A||_op`,
//! computed as the top eigenvalue of that PSD matrix by power iteration.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, DidError, Result};
use crate::kernels::{cholesky_upper, kernel_matrix, KernelSpec, UpperCholesky};
use crate::nystrom::{
    default_color_box, full_landmarks_x, select_landmarks_x, select_landmarks_y, ColorBox,
    LandmarkStrategy, Landmarks,
};
use crate::signal::{MaskKind, MaskVector, SampledSignal};

/// How input-domain landmarks are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XLandmarkSpec {
    Grid(usize),
    Random(usize),
    /// Every sample coordinate of the reference signal.
    Full,
}

/// How output-domain landmarks are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YLandmarkSpec {
    Cube(usize),
    Random(usize),
    Observed(usize),
    /// Every distinct observed value of both signals.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DidConfig {
    /// Regularization. `None` selects `N^{-1/4}` from the reference size.
    pub lambda: Option<f64>,
    pub kernel_x: KernelSpec,
    pub kernel_y: KernelSpec,
    pub landmarks_x: XLandmarkSpec,
    pub landmarks_y: YLandmarkSpec,
    /// Box for cube/random output landmarks. `None` uses the widened
    /// bounding box of both signals' values.
    pub color_box: Option<ColorBox>,
    pub mask: MaskKind,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub seed: u64,
}

impl Default for DidConfig {
    fn default() -> Self {
        Self {
            lambda: Some(1e-2),
            kernel_x: KernelSpec::gaussian(1.0 / 6.0).expect("valid"),
            kernel_y: KernelSpec::laplace(5.0).expect("valid"),
            landmarks_x: XLandmarkSpec::Grid(100),
            landmarks_y: YLandmarkSpec::Cube(16 * 16 * 16),
            color_box: None,
            mask: MaskKind::Blackman,
            power_tol: 1e-10,
            power_max_iter: 10_000,
            seed: 0,
        }
    }
}

impl DidConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("lambda must be positive, got {l}")));
            }
        }
        if !(self.power_tol > 0.0) {
            return Err(invalid("power iteration tolerance must be positive"));
        }
        if self.power_max_iter == 0 {
            return Err(invalid("power iteration needs at least one step"));
        }
        Ok(())
    }

    /// The regularization used for a reference signal with `n` samples.
    pub fn resolved_lambda(&self, n: usize) -> f64 {
        self.lambda.unwrap_or_else(|| (n as f64).powf(-0.25))
    }
}

#[derive(Debug, Clone)]
pub struct DidResult {
    pub value: f64,
    pub lambda: f64,
    /// Unit top eigenvector in whitened landmark coordinates.
    pub h_tilde: DVector<f64>,
    /// Witness `h` sampled on the reference grid.
    pub h_sampled: DVector<f64>,
    /// Witness `q` sampled on the target grid.
    pub q_sampled: DVector<f64>,
    pub iterations: usize,
    pub jitter_x: f64,
    pub jitter_y: f64,
}

/// Landmarks on both domains with their kernels and Cholesky factors.
/// Building this is the dominant fixed cost; reuse it across signal pairs.
#[derive(Debug, Clone)]
pub struct LandmarkFactors {
    landmarks_x: Landmarks,
    landmarks_y: Landmarks,
    kernel_x: KernelSpec,
    kernel_y: KernelSpec,
    chol_x: UpperCholesky,
    chol_y: UpperCholesky,
}

impl LandmarkFactors {
    pub fn build(
        landmarks_x: Landmarks,
        landmarks_y: Landmarks,
        kernel_x: KernelSpec,
        kernel_y: KernelSpec,
    ) -> Result<Self> {
        let kxx = kernel_matrix(&kernel_x, landmarks_x.points(), landmarks_x.points())?;
        let chol_x = cholesky_upper(&kxx)?;
        let kyy = kernel_matrix(&kernel_y, landmarks_y.points(), landmarks_y.points())?;
        let chol_y = cholesky_upper(&kyy)?;
        Ok(Self {
            landmarks_x,
            landmarks_y,
            kernel_x,
            kernel_y,
            chol_x,
            chol_y,
        })
    }

    /// Resolves the landmark strategies of `config` for the pair `(f, g)`.
    pub fn for_pair(f: &SampledSignal, g: &SampledSignal, config: &DidConfig) -> Result<Self> {
        let lx = resolve_x(config, f)?;
        let ly = resolve_y(config, &[f, g])?;
        Self::build(lx, ly, config.kernel_x, config.kernel_y)
    }

    /// Like [`for_pair`](Self::for_pair) but over a family of signals; a
    /// missing color box is taken from all of their values.
    pub fn for_signals(
        reference: &SampledSignal,
        all: &[&SampledSignal],
        config: &DidConfig,
    ) -> Result<Self> {
        let lx = resolve_x(config, reference)?;
        let ly = resolve_y(config, all)?;
        Self::build(lx, ly, config.kernel_x, config.kernel_y)
    }

    pub fn landmarks_x(&self) -> &Landmarks {
        &self.landmarks_x
    }

    pub fn landmarks_y(&self) -> &Landmarks {
        &self.landmarks_y
    }

    pub fn chol_x(&self) -> &UpperCholesky {
        &self.chol_x
    }

    pub fn chol_y(&self) -> &UpperCholesky {
        &self.chol_y
    }

    pub fn m_x(&self) -> usize {
        self.landmarks_x.len()
    }

    pub fn m_y(&self) -> usize {
        self.landmarks_y.len()
    }
}

fn resolve_x(config: &DidConfig, reference: &SampledSignal) -> Result<Landmarks> {
    match config.landmarks_x {
        XLandmarkSpec::Grid(m) => select_landmarks_x(LandmarkStrategy::GridX, m, config.seed),
        XLandmarkSpec::Random(m) => {
            select_landmarks_x(LandmarkStrategy::UniformRandomX, m, config.seed)
        }
        XLandmarkSpec::Full => full_landmarks_x(reference),
    }
}

fn resolve_y(config: &DidConfig, signals: &[&SampledSignal]) -> Result<Landmarks> {
    let first = signals
        .first()
        .ok_or_else(|| invalid("no signals to place output landmarks for"))?;
    let mut observed = first.values().clone();
    for s in &signals[1..] {
        observed = observed.concat(s.values())?;
    }
    let color_box = match &config.color_box {
        Some(b) => b.clone(),
        None => {
            let mut b = default_color_box(first, first)?;
            for s in &signals[1..] {
                let other = default_color_box(first, s)?;
                for (x, y) in b.iter_mut().zip(other) {
                    *x = (x.0.min(y.0), x.1.max(y.1));
                }
            }
            b
        }
    };
    if color_box.len() != first.channels() {
        return Err(invalid(format!(
            "color box has {} channels but signals have {}",
            color_box.len(),
            first.channels()
        )));
    }
    let (strategy, m) = match config.landmarks_y {
        YLandmarkSpec::Cube(m) => (LandmarkStrategy::GridColorCube, m),
        YLandmarkSpec::Random(m) => (LandmarkStrategy::UniformRandomY, m),
        YLandmarkSpec::Observed(m) => (LandmarkStrategy::SubsampleObserved, m),
        YLandmarkSpec::Full => (LandmarkStrategy::FullY, 0),
    };
    select_landmarks_y(strategy, m, &color_box, Some(&observed), config.seed)
}

/// A signal pushed through the landmark factors: its `M_Y x M_X` operator
/// and the map from landmark coefficients to values on its grid.
#[derive(Debug, Clone)]
pub struct ProjectedSignal {
    operator: DMatrix<f64>,
    /// `K_{X Xl} R_X^{-1}` on this signal's grid, `N x M_X`.
    feature_map: DMatrix<f64>,
}

impl ProjectedSignal {
    /// Projects `signal`, weighting each sample by `mask` when given.
    pub fn new(
        signal: &SampledSignal,
        mask: Option<&MaskVector>,
        factors: &LandmarkFactors,
    ) -> Result<Self> {
        let n = signal.len();
        if let Some(m) = mask {
            if m.len() != n {
                return Err(invalid(format!(
                    "mask has {} weights for {} samples",
                    m.len(),
                    n
                )));
            }
        }
        let kx = kernel_matrix(
            &factors.kernel_x,
            signal.coords(),
            factors.landmarks_x.points(),
        )?;
        let feature_map = factors.chol_x.right_solve(&kx);
        let mut weighted = feature_map.clone();
        let scale = signal.volume() / n as f64;
        match mask {
            Some(m) => {
                for (i, mut row) in weighted.row_iter_mut().enumerate() {
                    row *= scale * m.weights()[i];
                }
            }
            None => weighted *= scale,
        }
        let ky = kernel_matrix(
            &factors.kernel_y,
            factors.landmarks_y.points(),
            signal.values(),
        )?;
        let operator = factors.chol_y.solve_transpose(&(ky * weighted));
        Ok(Self {
            operator,
            feature_map,
        })
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn feature_map(&self) -> &DMatrix<f64> {
        &self.feature_map
    }
}

/// `A`: the masked reference operator.
pub fn build_a_hat(
    f: &SampledSignal,
    mask: &MaskVector,
    factors: &LandmarkFactors,
) -> Result<DMatrix<f64>> {
    Ok(ProjectedSignal::new(f, Some(mask), factors)?.operator)
}

/// `B`: the unmasked target operator.
pub fn build_b_hat(g: &SampledSignal, factors: &LandmarkFactors) -> Result<DMatrix<f64>> {
    Ok(ProjectedSignal::new(g, None, factors)?.operator)
}

/// Everything about a pair that does not depend on `lambda`.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    reference: ProjectedSignal,
    target: ProjectedSignal,
    jitter_x: f64,
    jitter_y: f64,
}

impl PreparedPair {
    pub fn new(
        f: &SampledSignal,
        g: &SampledSignal,
        mask: &MaskVector,
        factors: &LandmarkFactors,
    ) -> Result<Self> {
        let reference = ProjectedSignal::new(f, Some(mask), factors)?;
        Self::with_reference(reference, g, factors)
    }

    /// Reuses an already projected reference, e.g. across many warps of it.
    pub fn with_reference(
        reference: ProjectedSignal,
        g: &SampledSignal,
        factors: &LandmarkFactors,
    ) -> Result<Self> {
        let target = ProjectedSignal::new(g, None, factors)?;
        Ok(Self {
            reference,
            target,
            jitter_x: factors.chol_x.jitter(),
            jitter_y: factors.chol_y.jitter(),
        })
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.reference.operator
    }

    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.target.operator
    }

    /// The symmetric PSD matrix whose top eigenvalue is the estimate.
    pub fn t_hat(&self, lambda: f64) -> Result<DMatrix<f64>> {
        regularized_gram(self.a_hat(), self.b_hat(), lambda)
    }

    pub fn evaluate(&self, lambda: f64, tol: f64, max_iter: usize, seed: u64) -> Result<DidResult> {
        let t = self.t_hat(lambda)?;
        let top = power_iteration(&t, tol, max_iter, seed)?;
        let (h_sampled, q_sampled) = recover_h_q(self, lambda, &top.vector)?;
        Ok(DidResult {
            value: top.value.max(0.0),
            lambda,
            h_tilde: top.vector,
            h_sampled,
            q_sampled,
            iterations: top.iterations,
            jitter_x: self.jitter_x,
            jitter_y: self.jitter_y,
        })
    }

    /// Only the scalar estimate, for sweeps that discard witnesses.
    pub fn value(&self, lambda: f64, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
        let t = self.t_hat(lambda)?;
        Ok(power_iteration(&t, tol, max_iter, seed)?.value.max(0.0))
    }
}

/// `lambda * A^T (B B^T + lambda I)^{-1} A`, symmetrized.
///
/// When `M_Y > 2 M_X` the `M_Y`-dimensional inverse is never formed: with
/// `[A B] = Q [Ra Rb]` the columns of both operators live in `range(Q)`,
/// which `B B^T` leaves invariant, so the product equals
/// `lambda * Ra^T (Rb Rb^T + lambda I)^{-1} Ra`.
pub fn regularized_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if a.shape() != b.shape() {
        return Err(invalid(format!(
            "operator shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m_y, m_x) = a.shape();
    let (ra, rb) = if m_y > 2 * m_x {
        let mut stacked = DMatrix::zeros(m_y, 2 * m_x);
        stacked.columns_mut(0, m_x).copy_from(a);
        stacked.columns_mut(m_x, m_x).copy_from(b);
        let r = stacked.qr().r();
        (
            r.columns(0, m_x).into_owned(),
            r.columns(m_x, m_x).into_owned(),
        )
    } else {
        (a.clone(), b.clone())
    };
    let k = ra.nrows();
    let mut c = &rb * rb.transpose();
    for i in 0..k {
        c[(i, i)] += lambda;
    }
    let chol =
        Cholesky::new(c).ok_or_else(|| invalid("B B^T + lambda I is not positive definite"))?;
    let y = chol
        .l_dirty()
        .solve_lower_triangular(&ra)
        .expect("cholesky factor has a positive diagonal");
    let t = y.transpose() * y * lambda;
    Ok((&t + t.transpose()) * 0.5)
}

#[derive(Debug, Clone)]
pub struct TopEigen {
    pub value: f64,
    pub vector: DVector<f64>,
    pub iterations: usize,
}

/// Power iteration on a symmetric PSD matrix from a seeded random start.
///
/// Stops once the relative change of the Rayleigh quotient is at most `tol`
/// on two consecutive steps.
pub fn power_iteration(m: &DMatrix<f64>, tol: f64, max_iter: usize, seed: u64) -> Result<TopEigen> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(invalid("power iteration needs a non-empty square matrix"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    v /= v.norm();
    if m.amax() == 0.0 {
        return Ok(TopEigen {
            value: 0.0,
            vector: v,
            iterations: 0,
        });
    }
    let mut prev = f64::NAN;
    let mut calm = 0;
    for it in 1..=max_iter {
        let w = m * &v;
        let rayleigh = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(TopEigen {
                value: 0.0,
                vector: v,
                iterations: it,
            });
        }
        v = w / norm;
        if (rayleigh - prev).abs() <= tol * rayleigh.abs() {
            calm += 1;
            if calm >= 2 {
                let value = v.dot(&(m * &v));
                return Ok(TopEigen {
                    value,
                    vector: v,
                    iterations: it,
                });
            }
        } else {
            calm = 0;
        }
        prev = rayleigh;
    }
    Err(DidError::NotConverged {
        iterations: max_iter,
        last_value: prev,
        last_vector: v,
    })
}

/// Witness functions on the sample grids: `h` on the reference grid and `q`
/// on the target grid.
///
/// `q`'s landmark coefficients are `B^T (B B^T + lambda)^{-1} A h`, evaluated
/// as `(B^T B + lambda)^{-1} B^T A h` so only an `M_X`-sized system is solved.
pub fn recover_h_q(
    pair: &PreparedPair,
    lambda: f64,
    h_tilde: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m_x = pair.a_hat().ncols();
    if h_tilde.len() != m_x {
        return Err(invalid(format!(
            "h has {} coefficients, expected {m_x}",
            h_tilde.len()
        )));
    }
    let h = pair.reference.feature_map() * h_tilde;
    let b = pair.b_hat();
    let mut gram = b.transpose() * b;
    for i in 0..m_x {
        gram[(i, i)] += lambda;
    }
    let rhs = b.transpose() * (pair.a_hat() * h_tilde);
    let coef = Cholesky::new(gram)
        .ok_or_else(|| invalid("B^T B + lambda I is not positive definite"))?
        .solve(&rhs);
    let q = pair.target.feature_map() * coef;
    Ok((h, q))
}

/// The dissimilarity of `g` from the reference `f`.
pub fn did(f: &SampledSignal, g: &SampledSignal, config: &DidConfig) -> Result<DidResult> {
    config.validate()?;
    check_compatible(f, g)?;
    let factors = LandmarkFactors::for_pair(f, g, config)?;
    did_with_factors(f, g, config, &factors)
}

/// As [`did`] with precomputed landmark factors.
pub fn did_with_factors(
    f: &SampledSignal,
    g: &SampledSignal,
    config: &DidConfig,
    factors: &LandmarkFactors,
) -> Result<DidResult> {
    config.validate()?;
    check_compatible(f, g)?;
    let mask = config.mask.evaluate(f.coords());
    let pair = PreparedPair::new(f, g, &mask, factors)?;
    pair.evaluate(
        config.resolved_lambda(f.len()),
        config.power_tol,
        config.power_max_iter,
        config.seed,
    )
}

pub(crate) fn check_compatible(f: &SampledSignal, g: &SampledSignal) -> Result<()> {
    if f.channels() != g.channels() {
        return Err(invalid(format!(
            "signals differ in output dimension: {} vs {}",
            f.channels(),
            g.channels()
        )));
    }
    if f.coords().dim() != g.coords().dim() {
        return Err(invalid("signals live on domains of different dimension"));
    }
    Ok(())
}
