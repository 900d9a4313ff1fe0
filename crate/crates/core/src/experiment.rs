//! Warping, rotation and regularization sweeps. Each produces flat
//! [`ExperimentRow`]s in a fixed order, independent of scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::did::{DidConfig, LandmarkFactors, PreparedPair, ProjectedSignal};
use crate::error::{invalid, DidError, Result};
use crate::par;
use crate::signal::{extract_patch, SampledSignal};
use crate::warp::{rmse, rotated_patch, rotation_margin, warp};

/// `10^k` for `k = -4..=2`.
pub const DEFAULT_TEMPERATURES: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
pub const DEFAULT_REPEATS: usize = 50;
pub const DEFAULT_CUTOFF: usize = 2;
pub const ROTATION_LAMBDA: f64 = 1e-6;
pub const DEFAULT_ANGLES: [f64; 8] = [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0];
pub const DEFAULT_LAMBDAS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

pub const CSV_HEADER: &str = "experiment,image_id,parameter,metric,value,seed,n,m_x,m_y,lambda";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub image_id: String,
    /// Temperature, angle or pair index depending on the experiment.
    pub parameter: f64,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub n: usize,
    pub m_x: usize,
    pub m_y: usize,
    pub lambda: f64,
}

struct RowContext<'a> {
    experiment: &'a str,
    image_id: &'a str,
    n: usize,
    m_x: usize,
    m_y: usize,
}

impl RowContext<'_> {
    fn row(
        &self,
        parameter: f64,
        metric: &str,
        value: f64,
        seed: u64,
        lambda: f64,
    ) -> ExperimentRow {
        ExperimentRow {
            experiment: self.experiment.to_string(),
            image_id: self.image_id.to_string(),
            parameter,
            metric: metric.to_string(),
            value,
            seed,
            n: self.n,
            m_x: self.m_x,
            m_y: self.m_y,
            lambda,
        }
    }
}

/// Writes rows as CSV with the standard header.
pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let io = |e: csv::Error| DidError::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(CSV_HEADER.split(',')).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|source| DidError::Io {
        path: "<csv>".into(),
        source,
    })
}

fn check_nonempty<T>(xs: &[T], what: &str) -> Result<()> {
    if xs.is_empty() {
        Err(invalid(format!("{what} list is empty")))
    } else {
        Ok(())
    }
}

/// Settings shared by the warp-based sweeps.
#[derive(Debug, Clone)]
pub struct WarpSweep {
    pub temperatures: Vec<f64>,
    pub repeats: usize,
    pub cutoff: usize,
    /// Repeat `r` uses warp seed `seed + r` at every temperature.
    pub seed: u64,
}

impl Default for WarpSweep {
    fn default() -> Self {
        Self {
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            repeats: DEFAULT_REPEATS,
            cutoff: DEFAULT_CUTOFF,
            seed: 0,
        }
    }
}

impl WarpSweep {
    fn validate(&self) -> Result<()> {
        check_nonempty(&self.temperatures, "temperature")?;
        if self.repeats == 0 {
            return Err(invalid("at least one repeat is required"));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(f64, u64)> {
        self.temperatures
            .iter()
            .flat_map(|&t| (0..self.repeats as u64).map(move |r| (t, r)))
            .map(|(t, r)| (t, self.seed.wrapping_add(r)))
            .collect()
    }
}

/// Landmark factors and reference projection for experiments whose targets
/// are all derived from `image`'s colors.
fn reference_setup(
    reference: &SampledSignal,
    color_source: &SampledSignal,
    config: &DidConfig,
) -> Result<(LandmarkFactors, ProjectedSignal)> {
    let factors = LandmarkFactors::for_signals(reference, &[reference, color_source], config)?;
    let mask = config.mask.evaluate(reference.coords());
    let projected = ProjectedSignal::new(reference, Some(&mask), &factors)?;
    Ok((factors, projected))
}

/// `did(f, warp(f, T))` and `rmse(f, warp(f, T))` for every temperature and
/// repeat. Rows are ordered by temperature, then repeat, then metric.
pub fn warping(
    image: &SampledSignal,
    image_id: &str,
    sweep: &WarpSweep,
    config: &DidConfig,
) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    sweep.validate()?;
    let (factors, reference) = reference_setup(image, image, config)?;
    let lambda = config.resolved_lambda(image.len());
    let ctx = RowContext {
        experiment: "warping",
        image_id,
        n: image.len(),
        m_x: factors.m_x(),
        m_y: factors.m_y(),
    };
    let cells = sweep.cells();
    let results = par::map(&cells, |&(t, seed)| -> Result<[ExperimentRow; 2]> {
        let g = warp(image, t, sweep.cutoff, seed)?;
        let pair = PreparedPair::with_reference(reference.clone(), &g, &factors)?;
        let d = pair.value(lambda, config.power_tol, config.power_max_iter, config.seed)?;
        let e = rmse(image, &g)?;
        Ok([
            ctx.row(t, "did", d, seed, lambda),
            ctx.row(t, "rmse", e, seed, lambda),
        ])
    });
    let mut rows = Vec::with_capacity(2 * cells.len());
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Settings for the rotation sweep.
#[derive(Debug, Clone)]
pub struct RotationSweep {
    pub patch_size: usize,
    pub angles: Vec<f64>,
    pub random_pairs: usize,
    pub seed: u64,
}

impl Default for RotationSweep {
    fn default() -> Self {
        Self {
            patch_size: 64,
            angles: DEFAULT_ANGLES.to_vec(),
            random_pairs: 20,
            seed: 0,
        }
    }
}

/// Top-left pixel of a patch.
type Corner = (usize, usize);

/// Top-left corners of `count` pairs of non-overlapping `size` patches.
fn random_patch_pairs(
    h: usize,
    w: usize,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(Corner, Corner)>> {
    if size > h || size > w {
        return Err(invalid("patch larger than image"));
    }
    let (max_top, max_left) = (h - size, w - size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 100_000 {
            return Err(invalid(format!(
                "cannot place two disjoint {size}x{size} patches in {h}x{w}"
            )));
        }
        let a = (
            rng.random_range(0..=max_top),
            rng.random_range(0..=max_left),
        );
        let b = (
            rng.random_range(0..=max_top),
            rng.random_range(0..=max_left),
        );
        let disjoint = a.0.abs_diff(b.0) >= size || a.1.abs_diff(b.1) >= size;
        if disjoint {
            out.push((a, b));
        }
    }
    Ok(out)
}

/// Compares the central patch `f` of `image` with `rotate(f, angle)` (rotate
/// a larger patch, then crop) and with pairs of disjoint random patches.
///
/// Rows: experiment `rotation` with the angle as parameter, then
/// `rotation_random` with the pair index as parameter; `did` before `rmse`.
pub fn rotation(
    image: &SampledSignal,
    image_id: &str,
    sweep: &RotationSweep,
    config: &DidConfig,
) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    check_nonempty(&sweep.angles, "angle")?;
    let (h, w) = image
        .shape()
        .ok_or_else(|| invalid("rotation experiment needs an image"))?;
    let size = sweep.patch_size;
    let margin = rotation_margin(size);
    if size == 0 || size + 2 * margin > h.min(w) {
        return Err(invalid(format!(
            "patch {size} with rotation margin {margin} does not fit in {h}x{w}"
        )));
    }
    let (top, left) = ((h - size) / 2, (w - size) / 2);
    let f = extract_patch(image, top, left, size)?;
    let (factors, reference) = reference_setup(&f, image, config)?;
    let lambda = config.resolved_lambda(f.len());
    let ctx = RowContext {
        experiment: "rotation",
        image_id,
        n: f.len(),
        m_x: factors.m_x(),
        m_y: factors.m_y(),
    };
    let mask = config.mask.evaluate(f.coords());
    let eval = |a: &SampledSignal, b: &SampledSignal, reuse: bool| -> Result<(f64, f64)> {
        let pair = if reuse {
            PreparedPair::with_reference(reference.clone(), b, &factors)?
        } else {
            PreparedPair::new(a, b, &mask, &factors)?
        };
        let d = pair.value(lambda, config.power_tol, config.power_max_iter, config.seed)?;
        Ok((d, rmse(a, b)?))
    };

    let angle_results = par::map(&sweep.angles, |&angle| -> Result<(f64, f64)> {
        let g = rotated_patch(image, top, left, size, angle)?;
        eval(&f, &g, true)
    });
    let mut rows = Vec::new();
    for (&angle, r) in sweep.angles.iter().zip(angle_results) {
        let (d, e) = r?;
        rows.push(ctx.row(angle, "did", d, sweep.seed, lambda));
        rows.push(ctx.row(angle, "rmse", e, sweep.seed, lambda));
    }

    let pairs = random_patch_pairs(h, w, size, sweep.random_pairs, sweep.seed)?;
    let random_results = par::map(&pairs, |&((ta, la), (tb, lb))| -> Result<(f64, f64)> {
        let a = extract_patch(image, ta, la, size)?;
        let b = extract_patch(image, tb, lb, size)?;
        eval(&a, &b, false)
    });
    let ctx = RowContext {
        experiment: "rotation_random",
        ..ctx
    };
    for (k, r) in random_results.into_iter().enumerate() {
        let (d, e) = r?;
        rows.push(ctx.row(k as f64, "did", d, sweep.seed, lambda));
        rows.push(ctx.row(k as f64, "rmse", e, sweep.seed, lambda));
    }
    Ok(rows)
}

/// `did(f, warp(f, T))` over a grid of regularization values. The
/// lambda-independent operators are computed once per warp.
///
/// Rows are ordered by temperature, then lambda, then repeat. The `lambda`
/// in `config` is ignored.
pub fn regularization(
    image: &SampledSignal,
    image_id: &str,
    sweep: &WarpSweep,
    lambdas: &[f64],
    config: &DidConfig,
) -> Result<Vec<ExperimentRow>> {
    sweep.validate()?;
    check_nonempty(lambdas, "lambda")?;
    for &l in lambdas {
        DidConfig {
            lambda: Some(l),
            ..config.clone()
        }
        .validate()?;
    }
    let (factors, reference) = reference_setup(image, image, config)?;
    let ctx = RowContext {
        experiment: "regularization",
        image_id,
        n: image.len(),
        m_x: factors.m_x(),
        m_y: factors.m_y(),
    };
    let cells = sweep.cells();
    let values = par::map(&cells, |&(t, seed)| -> Result<Vec<f64>> {
        let g = warp(image, t, sweep.cutoff, seed)?;
        let pair = PreparedPair::with_reference(reference.clone(), &g, &factors)?;
        lambdas
            .iter()
            .map(|&l| pair.value(l, config.power_tol, config.power_max_iter, config.seed))
            .collect()
    });
    let values: Vec<Vec<f64>> = values.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(cells.len() * lambdas.len());
    for (ti, &t) in sweep.temperatures.iter().enumerate() {
        for (li, &l) in lambdas.iter().enumerate() {
            for r in 0..sweep.repeats {
                let k = ti * sweep.repeats + r;
                rows.push(ctx.row(t, "did", values[k][li], cells[k].1, l));
            }
        }
    }
    Ok(rows)
}

/// Mean of `value` over rows matching `experiment`, `metric` and a
/// parameter (exact match).
pub fn mean_value(
    rows: &[ExperimentRow],
    experiment: &str,
    metric: &str,
    parameter: f64,
) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.experiment == experiment && r.metric == metric && r.parameter == parameter)
        .map(|r| r.value)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::did::{XLandmarkSpec, YLandmarkSpec};
    use crate::scene::textured_scene;

    fn tiny_config() -> DidConfig {
        DidConfig {
            landmarks_x: XLandmarkSpec::Grid(16),
            landmarks_y: YLandmarkSpec::Cube(27),
            ..DidConfig::default()
        }
    }

    #[test]
    fn warping_row_count_and_header() {
        let img = textured_scene(12, 12, 0).unwrap();
        let sweep = WarpSweep {
            temperatures: vec![1e-4],
            repeats: 1,
            ..WarpSweep::default()
        };
        let rows = warping(&img, "tiny", &sweep, &tiny_config()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].metric, "did");
        assert_eq!(rows[1].metric, "rmse");
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn empty_lists_rejected() {
        let img = textured_scene(12, 12, 0).unwrap();
        let sweep = WarpSweep {
            temperatures: vec![],
            ..WarpSweep::default()
        };
        assert!(warping(&img, "x", &sweep, &tiny_config()).is_err());
        assert!(regularization(&img, "x", &WarpSweep::default(), &[], &tiny_config()).is_err());
    }

    #[test]
    fn regularization_rows_ordered() {
        let img = textured_scene(10, 10, 1).unwrap();
        let sweep = WarpSweep {
            temperatures: vec![1e-3, 1e-1],
            repeats: 2,
            ..WarpSweep::default()
        };
        let rows = regularization(&img, "r", &sweep, &[1e-3, 1e-2], &tiny_config()).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0].parameter, 1e-3);
        assert_eq!(rows[0].lambda, 1e-3);
        assert_eq!(rows[2].lambda, 1e-2);
        assert_eq!(rows[4].parameter, 1e-1);
        for pair in rows.chunks(4) {
            // lambda-monotone per warp
            assert!(pair[0].value <= pair[2].value + 1e-12);
            assert!(pair[1].value <= pair[3].value + 1e-12);
        }
    }

    #[test]
    fn rotation_zero_angle_matches_self() {
        let img = textured_scene(48, 48, 2).unwrap();
        let sweep = RotationSweep {
            patch_size: 16,
            angles: vec![0.0, 90.0],
            random_pairs: 20,
            seed: 1,
        };
        let cfg = DidConfig {
            lambda: Some(ROTATION_LAMBDA),
            ..tiny_config()
        };
        let rows = rotation(&img, "rot", &sweep, &cfg).unwrap();
        assert_eq!(rows.len(), 4 + 40);
        assert_eq!(rows[1].value, 0.0); // rmse at angle 0
        let f = extract_patch(&img, 16, 16, 16).unwrap();
        let (factors, _) = reference_setup(&f, &img, &cfg).unwrap();
        let direct = crate::did::did_with_factors(&f, &f, &cfg, &factors)
            .unwrap()
            .value;
        assert!((rows[0].value - direct).abs() <= 1e-12 * direct.max(1e-300));
    }

    #[test]
    fn patch_pairs_disjoint() {
        let pairs = random_patch_pairs(50, 50, 20, 30, 3).unwrap();
        for (a, b) in pairs {
            assert!(a.0.abs_diff(b.0) >= 20 || a.1.abs_diff(b.1) >= 20);
        }
        assert!(random_patch_pairs(30, 30, 20, 1, 0).is_err());
    }
}
