//! Landmark selection for the Nystrom projections on the input domain `X`
//! and the output (color) domain `Y`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::kernels::PointSet;
use crate::signal::SampledSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkStrategy {
    GridX,
    UniformRandomX,
    /// All sample coordinates of the reference signal.
    FullX,
    GridColorCube,
    UniformRandomY,
    SubsampleObserved,
    /// All distinct observed outputs of both signals.
    FullY,
}

/// A deduplicated landmark set and how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmarks {
    points: PointSet,
    strategy: LandmarkStrategy,
    seed: Option<u64>,
}

impl Landmarks {
    pub fn new(points: PointSet, strategy: LandmarkStrategy, seed: Option<u64>) -> Result<Self> {
        let points = points.dedup();
        if points.is_empty() {
            return Err(invalid("landmark set is empty"));
        }
        Ok(Self {
            points,
            strategy,
            seed,
        })
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn strategy(&self) -> LandmarkStrategy {
        self.strategy
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Axis-aligned box, one `(lo, hi)` interval per channel.
pub type ColorBox = Vec<(f64, f64)>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Landmarks in the unit square.
///
/// `GridX` takes the `k x k` cell-center grid with `k = ceil(sqrt(m))`,
/// truncated row-major to `m` points. `UniformRandomX` draws `m` i.i.d.
/// uniform points.
pub fn select_landmarks_x(strategy: LandmarkStrategy, m: usize, seed: u64) -> Result<Landmarks> {
    if m == 0 {
        return Err(invalid("at least one input landmark is required"));
    }
    let points = match strategy {
        LandmarkStrategy::GridX => {
            let k = (m as f64).sqrt().ceil() as usize;
            let k = if k * k < m { k + 1 } else { k };
            let mut data = Vec::with_capacity(2 * m);
            'outer: for i in 0..k {
                for j in 0..k {
                    if data.len() == 2 * m {
                        break 'outer;
                    }
                    data.push((j as f64 + 0.5) / k as f64);
                    data.push((i as f64 + 0.5) / k as f64);
                }
            }
            PointSet::new(2, data)?
        }
        LandmarkStrategy::UniformRandomX => {
            let mut r = rng(seed);
            PointSet::new(2, (0..2 * m).map(|_| r.random::<f64>()).collect())?
        }
        other => {
            return Err(invalid(format!(
                "{other:?} is not an input-domain strategy with a fixed count"
            )))
        }
    };
    let seed = (strategy == LandmarkStrategy::UniformRandomX).then_some(seed);
    Landmarks::new(points, strategy, seed)
}

/// The sample coordinates of `signal` used as landmarks.
pub fn full_landmarks_x(signal: &SampledSignal) -> Result<Landmarks> {
    Landmarks::new(signal.coords().clone(), LandmarkStrategy::FullX, None)
}

/// Landmarks in the output domain.
///
/// `observed` is required by `SubsampleObserved` and `FullY` and ignored
/// otherwise.
pub fn select_landmarks_y(
    strategy: LandmarkStrategy,
    m: usize,
    color_box: &[(f64, f64)],
    observed: Option<&PointSet>,
    seed: u64,
) -> Result<Landmarks> {
    if m == 0 && strategy != LandmarkStrategy::FullY {
        return Err(invalid("at least one output landmark is required"));
    }
    let p = color_box.len();
    let check_box = || -> Result<()> {
        if p == 0 {
            return Err(invalid("color box has no channels"));
        }
        if color_box
            .iter()
            .any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(invalid("color box bounds must be finite with lo <= hi"));
        }
        Ok(())
    };
    let (points, seeded) = match strategy {
        LandmarkStrategy::GridColorCube => {
            check_box()?;
            let k = integer_root(m, p).ok_or_else(|| {
                invalid(format!(
                    "grid color cube needs a perfect {p}-th power, got {m}"
                ))
            })?;
            let mut data = Vec::with_capacity(m * p);
            for flat in 0..m {
                let mut rem = flat;
                let mut idx = vec![0usize; p];
                for c in (0..p).rev() {
                    idx[c] = rem % k;
                    rem /= k;
                }
                for c in 0..p {
                    let (lo, hi) = color_box[c];
                    data.push(lo + (idx[c] as f64 + 0.5) / k as f64 * (hi - lo));
                }
            }
            (PointSet::new(p, data)?, false)
        }
        LandmarkStrategy::UniformRandomY => {
            check_box()?;
            let mut r = rng(seed);
            let mut data = Vec::with_capacity(m * p);
            for _ in 0..m {
                for &(lo, hi) in color_box {
                    data.push(lo + r.random::<f64>() * (hi - lo));
                }
            }
            (PointSet::new(p, data)?, true)
        }
        LandmarkStrategy::SubsampleObserved => {
            let obs = observed
                .ok_or_else(|| invalid("observed-subsample strategy needs observed values"))?
                .dedup();
            if obs.len() < m {
                return Err(invalid(format!(
                    "asked for {m} observed landmarks but only {} distinct values exist",
                    obs.len()
                )));
            }
            let mut idx = sample(&mut rng(seed), obs.len(), m).into_vec();
            idx.sort_unstable();
            (obs.select(&idx), true)
        }
        LandmarkStrategy::FullY => {
            let obs =
                observed.ok_or_else(|| invalid("full output landmarks need observed values"))?;
            (obs.clone(), false)
        }
        other => {
            return Err(invalid(format!(
                "{other:?} is not an output-domain strategy"
            )));
        }
    };
    Landmarks::new(points, strategy, seeded.then_some(seed))
}

fn integer_root(m: usize, p: usize) -> Option<usize> {
    let guess = (m as f64).powf(1.0 / p as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|k| *k > 0 && k.checked_pow(p as u32) == Some(m))
}

/// Bounding box of both signals' values, widened by 5% of its extent on each
/// side (or by 0.05 when a channel is constant).
pub fn default_color_box(f: &SampledSignal, g: &SampledSignal) -> Result<ColorBox> {
    if f.channels() != g.channels() {
        return Err(invalid("signals differ in output dimension"));
    }
    let bf = f.value_bounds();
    let bg = g.value_bounds();
    Ok(bf
        .iter()
        .zip(&bg)
        .map(|(a, b)| widen((a.0.min(b.0), a.1.max(b.1))))
        .collect())
}

/// Bounding box of a single signal's values, widened like [`default_color_box`].
pub fn color_box_of(signal: &SampledSignal) -> ColorBox {
    signal.value_bounds().into_iter().map(widen).collect()
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.05 };
    (lo - pad, hi + pad)
}
