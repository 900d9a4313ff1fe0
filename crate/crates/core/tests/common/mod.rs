//! Property checks shared by the proptest suite and the acceptance harness.

#![allow(dead_code)]

use ::did::kernels::{cholesky_upper, kernel_matrix, KernelSpec, PointSet};
use ::did::oracle::RandomRegime;
use ::did::signal::{blackman_1d, blackman_mask};
use ::did::warp::random_warp_field;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = std::result::Result<(), TestCaseError>;

pub fn kernel_spec() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.05f64..2.0).prop_map(|s| KernelSpec::gaussian(s).unwrap()),
        (0.5f64..20.0).prop_map(|a| KernelSpec::laplace(a).unwrap()),
    ]
}

/// `n` points of dimension `dim` in `[-1, 1]^dim`.
pub fn point_set(max_n: usize) -> impl Strategy<Value = PointSet> {
    (1usize..=3, 1usize..=max_n).prop_flat_map(|(dim, n)| {
        prop::collection::vec(-1.0f64..1.0, dim * n)
            .prop_map(move |d| PointSet::new(dim, d).unwrap())
    })
}

pub fn kernel_psd(spec: &KernelSpec, pts: &PointSet) -> Check {
    let k = kernel_matrix(spec, pts, pts).unwrap();
    prop_assert_eq!(&k, &k.transpose());
    for i in 0..k.nrows() {
        prop_assert!((k[(i, i)] - 1.0).abs() < 1e-15);
    }
    let min = SymmetricEigen::new(k.clone()).eigenvalues.min();
    prop_assert!(min >= -1e-12 * k.nrows() as f64, "min eigenvalue {min}");
    Ok(())
}

pub fn cholesky_roundtrip(spec: &KernelSpec, pts: &PointSet) -> Check {
    let k = kernel_matrix(spec, pts, pts).unwrap();
    let chol = cholesky_upper(&k).unwrap();
    let r = chol.upper();
    for i in 0..r.nrows() {
        for j in 0..i {
            prop_assert_eq!(r[(i, j)], 0.0);
        }
    }
    let mut shifted = k.clone();
    for i in 0..k.nrows() {
        shifted[(i, i)] += chol.jitter();
    }
    let err = (r.transpose() * r - shifted).amax();
    prop_assert!(err <= 1e-10, "roundtrip error {err}");
    Ok(())
}

/// The window vanishes on the border of the unit square and stays in [0, 1].
pub fn blackman_boundary(t: f64, side: usize) -> Check {
    let edge = match side {
        0 => [0.0, t],
        1 => [1.0, t],
        2 => [t, 0.0],
        _ => [t, 1.0],
    };
    let pts = PointSet::new(2, vec![edge[0], edge[1], t, 1.0 - t]).unwrap();
    let m = blackman_mask(&pts);
    prop_assert!(
        m.weights()[0].abs() <= 1e-15,
        "border weight {}",
        m.weights()[0]
    );
    prop_assert!((0.0..=1.0 + 1e-15).contains(&m.weights()[1]));
    prop_assert!((blackman_1d(0.5) - 1.0).abs() < 1e-15);
    Ok(())
}

pub fn warp_boundary(h: usize, w: usize, temperature: f64, seed: u64) -> Check {
    let f = random_warp_field(h, w, temperature, 2, seed).unwrap();
    for i in 0..h {
        for j in 0..w {
            if i == 0 || j == 0 || i == h - 1 || j == w - 1 {
                prop_assert!(f.dx(i, j).abs() <= 1e-12 && f.dy(i, j).abs() <= 1e-12);
            }
        }
    }
    Ok(())
}

/// Mean peak displacement over 50 seeds grows tenfold from T=1e-4 to T=1e-2.
pub fn warp_sqrt_t(size: usize, base_seed: u64) -> Check {
    let mean_peak = |t: f64| -> f64 {
        (0..50)
            .map(|s| {
                random_warp_field(size, size, t, 2, base_seed + s)
                    .unwrap()
                    .max_norm()
            })
            .sum::<f64>()
            / 50.0
    };
    let ratio = mean_peak(1e-2) / mean_peak(1e-4);
    prop_assert!((7.0..=13.0).contains(&ratio), "ratio {ratio}");
    Ok(())
}

pub fn percentile_order(samples: Vec<f64>) -> Check {
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r = RandomRegime::from_samples(samples).unwrap();
    prop_assert!(min <= r.lo && r.lo <= r.median && r.median <= r.hi && r.hi <= max);
    Ok(())
}

pub fn run_did<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_did"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Writes a textured scene as PNG and returns its path.
pub fn write_scene(
    dir: &std::path::Path,
    name: &str,
    size: usize,
    seed: u64,
) -> std::path::PathBuf {
    let path = dir.join(name);
    let img = ::did::scene::textured_scene(size, size, seed).unwrap();
    ::did::signal::save_image(&img, &path).unwrap();
    path
}
