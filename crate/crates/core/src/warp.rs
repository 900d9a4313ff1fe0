//! Random smooth deformations, rotations and the RMSE baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::signal::{extract_patch, SampledSignal};

/// Per-pixel displacement field, in pixels, row-major `h x w`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    h: usize,
    w: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
    temperature: f64,
    cutoff: usize,
    seed: u64,
}

impl WarpField {
    pub fn zero(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            dx: vec![0.0; h * w],
            dy: vec![0.0; h * w],
            temperature: 0.0,
            cutoff: 0,
            seed: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Horizontal displacement of pixel `(i, j)`.
    pub fn dx(&self, i: usize, j: usize) -> f64 {
        self.dx[i * self.w + j]
    }

    /// Vertical displacement of pixel `(i, j)`.
    pub fn dy(&self, i: usize, j: usize) -> f64 {
        self.dy[i * self.w + j]
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Largest displacement norm over the grid.
    pub fn max_norm(&self) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn mean_norm(&self) -> f64 {
        let s: f64 = self.dx.iter().zip(&self.dy).map(|(a, b)| a.hypot(*b)).sum();
        s / self.dx.len().max(1) as f64
    }
}

/// Sine modes `(m, n)`, `m, n >= 1`, inside the radius `m^2 + n^2 <= c^2`.
pub fn admissible_modes(cutoff: usize) -> Vec<(usize, usize)> {
    let c2 = cutoff * cutoff;
    let mut modes = Vec::new();
    for m in 1..=cutoff {
        for n in 1..=cutoff {
            if m * m + n * n <= c2 {
                modes.push((m, n));
            }
        }
    }
    modes
}

/// Random displacement field from a truncated sine series.
///
/// Each component is `sqrt(T) * L * sum a_mn sin(pi m i/(h-1)) sin(pi n j/(w-1))`
/// over [`admissible_modes`], with `a_mn ~ N(0, 1/(m^2+n^2))` and `L` the
/// grid extent along that component (`w` for `dx`, `h` for `dy`). The sine
/// basis vanishes on the border, so border pixels never move.
pub fn random_warp_field(
    h: usize,
    w: usize,
    temperature: f64,
    cutoff: usize,
    seed: u64,
) -> Result<WarpField> {
    if h == 0 || w == 0 {
        return Err(invalid("warp grid must be non-empty"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if cutoff == 0 {
        return Err(invalid("cutoff must be at least 1"));
    }
    let modes = admissible_modes(cutoff);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Vec<f64> {
        modes
            .iter()
            .map(|&(m, n)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / ((m * m + n * n) as f64).sqrt()
            })
            .collect()
    };
    let ax = draw();
    let ay = draw();
    let mut field = WarpField::zero(h, w);
    field.temperature = temperature;
    field.cutoff = cutoff;
    field.seed = seed;
    if h < 3 || w < 3 {
        // no interior pixels
        return Ok(field);
    }
    let sin_rows = sine_table(h, cutoff);
    let sin_cols = sine_table(w, cutoff);
    let sx = temperature.sqrt() * w as f64;
    let sy = temperature.sqrt() * h as f64;
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            let (mut u, mut v) = (0.0, 0.0);
            for (k, &(m, n)) in modes.iter().enumerate() {
                let basis = sin_rows[(m - 1) * h + i] * sin_cols[(n - 1) * w + j];
                u += ax[k] * basis;
                v += ay[k] * basis;
            }
            field.dx[i * w + j] = sx * u;
            field.dy[i * w + j] = sy * v;
        }
    }
    Ok(field)
}

fn sine_table(len: usize, cutoff: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let mut t = vec![0.0; cutoff * len];
    for m in 1..=cutoff {
        for i in 1..len - 1 {
            t[(m - 1) * len + i] = (PI * m as f64 * i as f64 / (len - 1) as f64).sin();
        }
    }
    t
}

/// Bilinear sample at fractional pixel position `(y, x)`, clamped to the
/// grid. Writes one value per channel into `out`.
fn bilinear(signal: &SampledSignal, h: usize, w: usize, y: f64, x: f64, out: &mut [f64]) {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ty, tx) = (y - y0 as f64, x - x0 as f64);
    let v00 = signal.value(y0 * w + x0);
    let v01 = signal.value(y0 * w + x1);
    let v10 = signal.value(y1 * w + x0);
    let v11 = signal.value(y1 * w + x1);
    for c in 0..out.len() {
        let top = v00[c] + tx * (v01[c] - v00[c]);
        let bottom = v10[c] + tx * (v11[c] - v10[c]);
        out[c] = top + ty * (bottom - top);
    }
}

/// Resamples `signal` so pixel `(i, j)` takes the input value at
/// `(i + dy, j + dx)`.
pub fn apply_warp(signal: &SampledSignal, field: &WarpField) -> Result<SampledSignal> {
    let (h, w) = signal.grid_shape("warping")?;
    if field.shape() != (h, w) {
        return Err(invalid(format!(
            "warp field is {:?} but signal is {h}x{w}",
            field.shape()
        )));
    }
    let p = signal.channels();
    let mut vals = vec![0.0; h * w * p];
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            bilinear(
                signal,
                h,
                w,
                i as f64 + field.dy[k],
                j as f64 + field.dx[k],
                &mut vals[k * p..(k + 1) * p],
            );
        }
    }
    signal.with_values(vals)
}

/// `apply_warp` with a freshly drawn field.
pub fn warp(
    signal: &SampledSignal,
    temperature: f64,
    cutoff: usize,
    seed: u64,
) -> Result<SampledSignal> {
    let (h, w) = signal.grid_shape("warping")?;
    apply_warp(signal, &random_warp_field(h, w, temperature, cutoff, seed)?)
}

fn cos_sin_degrees(angle: f64) -> (f64, f64) {
    let quarter = angle / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = angle.to_radians();
        (r.cos(), r.sin())
    }
}

/// Rotates a square grid signal about its center by `angle_degrees`
/// (counter-clockwise as displayed), with bilinear interpolation and edge
/// clamping. Multiples of 90 degrees are exact permutations.
pub fn rotate(signal: &SampledSignal, angle_degrees: f64) -> Result<SampledSignal> {
    let (h, w) = signal.grid_shape("rotation")?;
    if h != w {
        return Err(invalid(format!(
            "rotation needs a square grid, got {h}x{w}"
        )));
    }
    if !angle_degrees.is_finite() {
        return Err(invalid("rotation angle must be finite"));
    }
    let (cos, sin) = cos_sin_degrees(angle_degrees);
    let c = (w as f64 - 1.0) / 2.0;
    let p = signal.channels();
    let mut vals = vec![0.0; h * w * p];
    for i in 0..h {
        for j in 0..w {
            // Output (x right, y up) rotated by +angle comes from the source
            // point rotated by -angle. Rows grow downward, hence the sign flips.
            let x = j as f64 - c;
            let y = c - i as f64;
            let sx = cos * x + sin * y;
            let sy = -sin * x + cos * y;
            let k = i * w + j;
            bilinear(signal, h, w, c - sy, sx + c, &mut vals[k * p..(k + 1) * p]);
        }
    }
    signal.with_values(vals)
}

/// Rotates a `size x size` patch at `(top, left)` without border artifacts:
/// a larger surrounding patch is rotated and its center cropped.
pub fn rotated_patch(
    image: &SampledSignal,
    top: usize,
    left: usize,
    size: usize,
    angle_degrees: f64,
) -> Result<SampledSignal> {
    let (h, w) = image.grid_shape("rotation")?;
    let margin = rotation_margin(size);
    if top < margin || left < margin || top + size + margin > h || left + size + margin > w {
        return Err(invalid(format!(
            "patch {size}x{size} at ({top}, {left}) leaves no {margin}-pixel rotation margin in {h}x{w}"
        )));
    }
    let big = extract_patch(image, top - margin, left - margin, size + 2 * margin)?;
    let rotated = rotate(&big, angle_degrees)?;
    extract_patch(&rotated, margin, margin, size)
}

/// Border needed so a rotated `size` patch only samples real pixels.
pub fn rotation_margin(size: usize) -> usize {
    ((size as f64) * (std::f64::consts::SQRT_2 - 1.0) / 2.0).ceil() as usize + 1
}

/// Root mean squared difference over all samples and channels.
pub fn rmse(f: &SampledSignal, g: &SampledSignal) -> Result<f64> {
    if f.len() != g.len() || f.channels() != g.channels() {
        return Err(invalid(format!(
            "rmse needs equal shapes: {}x{} vs {}x{}",
            f.len(),
            f.channels(),
            g.len(),
            g.channels()
        )));
    }
    let a = f.values().as_flat();
    let b = g.values().as_flat();
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}
