//! Deterministic synthetic test images.
//!
//! Scenes are a smooth color gradient overlaid with soft-edged colored blobs,
//! some of them striped, so that different regions carry different color
//! statistics. Values are RGB in `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::signal::{SampledSignal, IMAGENET_MEAN, IMAGENET_STD};

struct Blob {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    angle: f64,
    color: [f64; 3],
    alt: [f64; 3],
    stripes: f64,
}

/// An `h x w` textured scene. Coordinates are scaled by the longer side so
/// features keep their aspect ratio.
pub fn textured_scene(h: usize, w: usize, seed: u64) -> Result<SampledSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg: Vec<[f64; 3]> = (0..3)
        .map(|_| {
            [
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            ]
        })
        .collect();
    let n_blobs = 14;
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| {
            let color = saturated(&mut rng);
            let alt = saturated(&mut rng);
            Blob {
                cx: rng.random::<f64>(),
                cy: rng.random::<f64>(),
                rx: rng.random_range(0.05..0.18),
                ry: rng.random_range(0.05..0.18),
                angle: rng.random_range(0.0..std::f64::consts::PI),
                color,
                alt,
                stripes: if rng.random::<f64>() < 0.5 {
                    rng.random_range(20.0..45.0)
                } else {
                    0.0
                },
            }
        })
        .collect();
    let side = h.max(w) as f64;
    let mut vals = Vec::with_capacity(h * w * 3);
    for i in 0..h {
        for j in 0..w {
            let x = (j as f64 + 0.5) / side;
            let y = (i as f64 + 0.5) / side;
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = bg[0][c] * (1.0 - x) * (1.0 - y) + bg[1][c] * x + bg[2][c] * y * (1.0 - x);
                px[c] = 0.25 + 0.5 * px[c];
            }
            for b in &blobs {
                let (dx, dy) = (x - b.cx, y - b.cy);
                let (ca, sa) = (b.angle.cos(), b.angle.sin());
                let u = (ca * dx + sa * dy) / b.rx;
                let v = (-sa * dx + ca * dy) / b.ry;
                let r = (u * u + v * v).sqrt();
                let alpha = 1.0 / (1.0 + ((r - 1.0) * 12.0).exp());
                if alpha < 1e-4 {
                    continue;
                }
                let color = if b.stripes > 0.0 && (b.stripes * (ca * dx + sa * dy)).sin() > 0.0 {
                    b.alt
                } else {
                    b.color
                };
                for c in 0..3 {
                    px[c] = (1.0 - alpha) * px[c] + alpha * color[c];
                }
            }
            vals.extend(px.iter().map(|v| v.clamp(0.0, 1.0)));
        }
    }
    SampledSignal::from_grid(h, w, 3, vals)
}

fn saturated(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut c = [
        rng.random::<f64>(),
        rng.random::<f64>(),
        rng.random::<f64>(),
    ];
    let k = rng.random_range(0..3);
    c[k] = if c[k] > 0.5 { 1.0 } else { 0.0 };
    c
}

/// Per-channel normalization with the same statistics as image loading.
pub fn normalize(signal: &SampledSignal) -> Result<SampledSignal> {
    let vals = signal
        .values()
        .as_flat()
        .iter()
        .enumerate()
        .map(|(k, v)| (v - IMAGENET_MEAN[k % 3]) / IMAGENET_STD[k % 3])
        .collect();
    signal.with_values(vals)
}

/// I.i.d. uniform `[0, 1)` RGB noise.
pub fn noise_image(h: usize, w: usize, seed: u64) -> Result<SampledSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SampledSignal::from_grid(
        h,
        w,
        3,
        (0..h * w * 3).map(|_| rng.random::<f64>()).collect(),
    )
}
