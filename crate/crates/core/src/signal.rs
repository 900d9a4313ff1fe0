//! Sampled signals on the unit square (or interval), image ingestion and
//! mask functions.

use std::path::Path;

use image::{ImageReader, Rgb, RgbImage};

use crate::error::{invalid, DidError, Result};
use crate::kernels::PointSet;

/// Per-channel means used to normalize RGB values.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
/// Per-channel standard deviations used to normalize RGB values.
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// A discretized map `X -> Y`: sample coordinates in `[0,1]^d` and the value
/// observed at each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    coords: PointSet,
    values: PointSet,
    shape: Option<(usize, usize)>,
    volume: f64,
}

impl SampledSignal {
    pub fn new(
        coords: PointSet,
        values: PointSet,
        shape: Option<(usize, usize)>,
        volume: f64,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("signal needs at least one sample"));
        }
        if coords.len() != values.len() {
            return Err(invalid(format!(
                "{} coordinates but {} values",
                coords.len(),
                values.len()
            )));
        }
        if !(volume > 0.0 && volume.is_finite()) {
            return Err(invalid(format!(
                "domain volume must be positive, got {volume}"
            )));
        }
        if coords.as_flat().iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(invalid("coordinates must lie in the unit box"));
        }
        if let Some((h, w)) = shape {
            if h * w != coords.len() {
                return Err(invalid(format!(
                    "grid shape {h}x{w} does not match {} samples",
                    coords.len()
                )));
            }
        }
        Ok(Self {
            coords,
            values,
            shape,
            volume,
        })
    }

    /// A row-major `h x w` grid signal with pixel-center coordinates and unit
    /// volume. `values` holds `h * w * channels` entries.
    pub fn from_grid(h: usize, w: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        let coords = grid_coordinates(h, w)?;
        let values = PointSet::new(channels, values)?;
        Self::new(coords, values, Some((h, w)), 1.0)
    }

    /// A 1-D signal sampled at the centers of `values.len() / channels`
    /// equal cells of `[0,1]`.
    pub fn from_samples_1d(channels: usize, values: Vec<f64>) -> Result<Self> {
        let values = PointSet::new(channels, values)?;
        let n = values.len();
        if n == 0 {
            return Err(invalid("signal needs at least one sample"));
        }
        let coords = PointSet::new(1, (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect())?;
        Self::new(coords, values, None, 1.0)
    }

    pub fn from_rgb_image(img: &RgbImage, normalize: bool) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut values = Vec::with_capacity(w * h * 3);
        for px in img.pixels() {
            for c in 0..3 {
                let v = px.0[c] as f64 / 255.0;
                values.push(if normalize {
                    (v - IMAGENET_MEAN[c]) / IMAGENET_STD[c]
                } else {
                    v
                });
            }
        }
        Self::from_grid(h, w, 3, values)
    }

    pub fn coords(&self) -> &PointSet {
        &self.coords
    }

    pub fn values(&self) -> &PointSet {
        &self.values
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.values.dim()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        self.values.point(i)
    }

    pub(crate) fn grid_shape(&self, op: &str) -> Result<(usize, usize)> {
        self.shape
            .ok_or_else(|| invalid(format!("{op} needs a grid-structured signal")))
    }

    /// Same coordinates and shape, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let values = PointSet::new(self.channels(), values)?;
        Self::new(self.coords.clone(), values, self.shape, self.volume)
    }

    /// Undoes per-channel normalization of an RGB signal.
    pub fn denormalized(&self) -> Result<Self> {
        if self.channels() != 3 {
            return Err(invalid("denormalization needs three channels"));
        }
        let vals = self
            .values
            .as_flat()
            .iter()
            .enumerate()
            .map(|(k, v)| v * IMAGENET_STD[k % 3] + IMAGENET_MEAN[k % 3])
            .collect();
        self.with_values(vals)
    }

    /// Per-channel axis-aligned bounds of the values.
    pub fn value_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); self.channels()];
        for v in self.values.iter() {
            for (c, x) in v.iter().enumerate() {
                b[c].0 = b[c].0.min(*x);
                b[c].1 = b[c].1.max(*x);
            }
        }
        b
    }
}

/// Pixel-center coordinates of an `h x w` grid, row-major. Pixel `(i, j)`
/// maps to `((j + 0.5) / w, (i + 0.5) / h)`.
pub fn grid_coordinates(h: usize, w: usize) -> Result<PointSet> {
    if h == 0 || w == 0 {
        return Err(invalid(format!(
            "grid dimensions must be positive, got {h}x{w}"
        )));
    }
    let mut data = Vec::with_capacity(2 * h * w);
    for i in 0..h {
        for j in 0..w {
            data.push((j as f64 + 0.5) / w as f64);
            data.push((i as f64 + 0.5) / h as f64);
        }
    }
    PointSet::new(2, data)
}

/// Decodes a PNG or JPEG into an RGB signal on the unit square.
pub fn load_image(path: impl AsRef<Path>, normalize: bool) -> Result<SampledSignal> {
    SampledSignal::from_rgb_image(&decode_rgb(path.as_ref())?, normalize)
}

/// Like [`load_image`], first resampling to `h x w` pixels (triangle filter).
pub fn load_image_resized(
    path: impl AsRef<Path>,
    normalize: bool,
    h: usize,
    w: usize,
) -> Result<SampledSignal> {
    if h == 0 || w == 0 {
        return Err(invalid("resize target must be non-empty"));
    }
    let img = decode_rgb(path.as_ref())?;
    let img = if (img.height() as usize, img.width() as usize) == (h, w) {
        img
    } else {
        image::imageops::resize(
            &img,
            w as u32,
            h as u32,
            image::imageops::FilterType::Triangle,
        )
    };
    SampledSignal::from_rgb_image(&img, normalize)
}

fn decode_rgb(path: &Path) -> Result<RgbImage> {
    let reader = ImageReader::open(path)
        .map_err(|source| DidError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| DidError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(source) => DidError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => DidError::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    Ok(img.to_rgb8())
}

/// Quantizes an un-normalized RGB grid signal (values in `[0,1]`) to 8 bits.
pub fn to_rgb_image(signal: &SampledSignal) -> Result<RgbImage> {
    let (h, w) = signal.grid_shape("image export")?;
    if signal.channels() != 3 {
        return Err(invalid("image export needs three channels"));
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for (k, px) in img.pixels_mut().enumerate() {
        let v = signal.value(k);
        *px = Rgb([quantize(v[0]), quantize(v[1]), quantize(v[2])]);
    }
    Ok(img)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an un-normalized RGB grid signal as PNG.
pub fn save_image(signal: &SampledSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    to_rgb_image(signal)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => DidError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => DidError::Format {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

/// Non-negative weights aligned with a signal's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector {
    weights: Vec<f64>,
}

impl MaskVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("mask weights must be finite and non-negative"));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskKind {
    #[default]
    Blackman,
    Uniform,
}

impl MaskKind {
    pub fn evaluate(&self, coords: &PointSet) -> MaskVector {
        match self {
            MaskKind::Blackman => blackman_mask(coords),
            MaskKind::Uniform => uniform_mask(coords),
        }
    }
}

/// One-dimensional Blackman window on `[0, 1]`.
pub fn blackman_1d(t: f64) -> f64 {
    use std::f64::consts::PI;
    0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos()
}

/// Tensor-product Blackman window evaluated at each coordinate.
pub fn blackman_mask(coords: &PointSet) -> MaskVector {
    let weights = coords
        .iter()
        .map(|x| x.iter().map(|&t| blackman_1d(t)).product::<f64>().max(0.0))
        .collect();
    MaskVector { weights }
}

pub fn uniform_mask(coords: &PointSet) -> MaskVector {
    MaskVector {
        weights: vec![1.0; coords.len()],
    }
}

/// Crops a `size x size` patch whose top-left pixel is `(top, left)`. The
/// patch gets fresh unit-square coordinates.
pub fn extract_patch(
    signal: &SampledSignal,
    top: usize,
    left: usize,
    size: usize,
) -> Result<SampledSignal> {
    let (h, w) = signal.grid_shape("patch extraction")?;
    if size == 0 || top + size > h || left + size > w {
        return Err(invalid(format!(
            "patch {size}x{size} at ({top}, {left}) does not fit in {h}x{w}"
        )));
    }
    let p = signal.channels();
    let mut vals = Vec::with_capacity(size * size * p);
    for i in top..top + size {
        for j in left..left + size {
            vals.extend_from_slice(signal.value(i * w + j));
        }
    }
    SampledSignal::from_grid(size, size, p, vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_single_pixel() {
        let g = grid_coordinates(1, 1).unwrap();
        assert_eq!(g.as_flat(), &[0.5, 0.5]);
    }

    #[test]
    fn grid_one_by_two() {
        let g = grid_coordinates(1, 2).unwrap();
        assert_eq!(g.as_flat(), &[0.25, 0.5, 0.75, 0.5]);
    }

    #[test]
    fn grid_two_by_two_symmetric() {
        let g = grid_coordinates(2, 2).unwrap();
        assert_eq!(g.len(), 4);
        let (sx, sy) = g.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        assert_relative_eq!(sx / 4.0, 0.5);
        assert_relative_eq!(sy / 4.0, 0.5);
        assert!(g.as_flat().iter().all(|c| *c > 0.0 && *c < 1.0));
    }

    #[test]
    fn grid_zero_dimension() {
        assert!(grid_coordinates(0, 3).is_err());
        assert!(grid_coordinates(3, 0).is_err());
    }

    #[test]
    fn blackman_endpoints_and_center() {
        assert!(blackman_1d(0.0).abs() < 1e-15);
        assert!(blackman_1d(1.0).abs() < 1e-15);
        assert_relative_eq!(blackman_1d(0.5), 1.0, epsilon = 1e-15);
        let c = PointSet::from_rows(&[[0.5, 0.5], [0.0, 0.3]]).unwrap();
        let m = blackman_mask(&c);
        assert_relative_eq!(m.weights()[0], 1.0, epsilon = 1e-15);
        assert_eq!(m.weights()[1], 0.0);
    }

    #[test]
    fn uniform_mask_and_min_with_blackman() {
        let c = grid_coordinates(5, 7).unwrap();
        let u = uniform_mask(&c);
        let b = blackman_mask(&c);
        assert_eq!(u.len(), 35);
        assert!(u.weights().iter().all(|w| *w == 1.0));
        for (x, y) in u.weights().iter().zip(b.weights()) {
            assert_eq!(x.min(*y), *y);
        }
    }

    #[test]
    fn normalization_constants_on_black_image() {
        let img = RgbImage::new(2, 2);
        let raw = SampledSignal::from_rgb_image(&img, false).unwrap();
        assert!(raw.values().as_flat().iter().all(|v| *v == 0.0));
        let s = SampledSignal::from_rgb_image(&img, true).unwrap();
        assert_eq!(s.len(), 4);
        for v in s.values().iter() {
            assert_relative_eq!(v[0], -0.485 / 0.229, max_relative = 1e-15);
            assert_relative_eq!(v[1], -0.456 / 0.224, max_relative = 1e-15);
            assert_relative_eq!(v[2], -0.406 / 0.225, max_relative = 1e-15);
        }
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let e = load_image("/definitely/not/here.png", false).unwrap_err();
        assert!(matches!(e, DidError::Io { .. }));
    }

    #[test]
    fn load_garbage_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not an image at all").unwrap();
        let e = load_image(&p, false).unwrap_err();
        assert!(matches!(e, DidError::Format { .. }), "{e:?}");
    }

    #[test]
    fn png_roundtrip_is_exact() {
        let mut img = RgbImage::new(5, 3);
        for (k, px) in img.pixels_mut().enumerate() {
            *px = Rgb([(k * 17) as u8, (255 - k * 11) as u8, (k * k) as u8]);
        }
        let s = SampledSignal::from_rgb_image(&img, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        save_image(&s, &p).unwrap();
        let back = load_image(&p, false).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.shape(), Some((3, 5)));
    }

    #[test]
    fn resized_load() {
        let img = RgbImage::from_pixel(8, 6, Rgb([10, 20, 30]));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.png");
        img.save(&p).unwrap();
        let s = load_image_resized(&p, false, 4, 4).unwrap();
        assert_eq!(s.shape(), Some((4, 4)));
        assert!((s.value(5)[1] - 20.0 / 255.0).abs() < 1e-12);
        assert!(load_image_resized(&p, false, 0, 4).is_err());
    }

    #[test]
    fn patches() {
        let vals: Vec<f64> = (0..4 * 5).map(|v| v as f64).collect();
        let s = SampledSignal::from_grid(4, 5, 1, vals).unwrap();
        let one = extract_patch(&s, 2, 3, 1).unwrap();
        assert_eq!(one.values().as_flat(), &[13.0]);
        let sq = SampledSignal::from_grid(3, 3, 1, (0..9).map(|v| v as f64).collect()).unwrap();
        assert_eq!(extract_patch(&sq, 0, 0, 3).unwrap(), sq);
        let a = extract_patch(&s, 0, 0, 2).unwrap();
        let b = extract_patch(&s, 2, 2, 2).unwrap();
        assert_ne!(a.values(), b.values());
        assert!(extract_patch(&s, 3, 0, 2).is_err());
        assert!(extract_patch(&s, 0, 4, 2).is_err());
    }

    #[test]
    fn signal_invariants_enforced() {
        let c = PointSet::from_rows(&[[0.5, 1.5]]).unwrap();
        let v = PointSet::from_rows(&[[1.0]]).unwrap();
        assert!(SampledSignal::new(c, v.clone(), None, 1.0).is_err());
        let c = PointSet::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(SampledSignal::new(c.clone(), v.clone(), None, 0.0).is_err());
        let v2 = PointSet::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(SampledSignal::new(c, v2, None, 1.0).is_err());
    }

    #[test]
    fn one_dimensional_signal() {
        let s = SampledSignal::from_samples_1d(1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.coords().as_flat(), &[0.125, 0.375, 0.625, 0.875]);
        let m = blackman_mask(s.coords());
        assert!(m.weights().iter().all(|w| *w > 0.0 && *w < 1.0));
    }
}
