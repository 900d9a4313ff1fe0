mod common;

use ::did::did::{XLandmarkSpec, YLandmarkSpec};
use ::did::kernels::{kernel_matrix, PointSet};
use ::did::scene::noise_image;
use ::did::{did, DidConfig, LandmarkFactors, MaskKind, PreparedPair};
use common::*;
use proptest::prelude::*;

fn small_config(seed: u64) -> DidConfig {
    DidConfig {
        landmarks_x: XLandmarkSpec::Grid(16),
        landmarks_y: YLandmarkSpec::Cube(64),
        seed,
        ..DidConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kernel_matrices_are_symmetric_psd(spec in kernel_spec(), pts in point_set(24)) {
        kernel_psd(&spec, &pts)?;
    }

    #[test]
    fn cholesky_reproduces_the_shifted_gram(spec in kernel_spec(), pts in point_set(24)) {
        cholesky_roundtrip(&spec, &pts)?;
    }

    #[test]
    fn kernels_are_translation_invariant(
        spec in kernel_spec(),
        pts in point_set(12),
        shift in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let d = pts.dim();
        let moved: Vec<f64> = pts.as_flat().iter().enumerate().map(|(k, v)| v + shift[k % d]).collect();
        let moved = PointSet::new(d, moved).unwrap();
        let a = kernel_matrix(&spec, &pts, &pts).unwrap();
        let b = kernel_matrix(&spec, &moved, &moved).unwrap();
        prop_assert!((a - b).amax() <= 1e-12);
    }

    #[test]
    fn blackman_vanishes_on_the_border(t in 0.0f64..=1.0, side in 0usize..4) {
        blackman_boundary(t, side)?;
    }

    #[test]
    fn warp_fixes_the_border(h in 1usize..40, w in 1usize..40, t in 1e-4f64..100.0, seed: u64) {
        warp_boundary(h, w, t, seed)?;
    }

    #[test]
    fn percentiles_are_ordered(samples in prop::collection::vec(-1e3f64..1e3, 20..80)) {
        percentile_order(samples)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn warp_amplitude_scales_with_sqrt_temperature(size in 3usize..24, seed in 0u64..1_000_000) {
        warp_sqrt_t(size, seed)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn estimate_is_bounded_and_monotone_in_lambda(
        side in 4usize..9,
        seeds in (0u64..10_000, 0u64..10_000),
        blackman: bool,
    ) {
        let f = noise_image(side, side, seeds.0).unwrap();
        let g = noise_image(side, side, seeds.1 + 20_000).unwrap();
        let mut config = small_config(seeds.0);
        config.mask = if blackman { MaskKind::Blackman } else { MaskKind::Uniform };
        let factors = LandmarkFactors::for_pair(&f, &g, &config).unwrap();
        let pair = PreparedPair::new(&f, &g, &config.mask.evaluate(f.coords()), &factors).unwrap();
        let a_norm2 = pair.a_hat().singular_values().max().powi(2);
        let mut prev = 0.0;
        for lambda in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let v = pair.value(lambda, 1e-12, 100_000, 0).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v <= a_norm2 * (1.0 + 1e-9), "{v} > |A|^2 = {a_norm2}");
            prop_assert!(v >= prev - 1e-12, "not monotone at {lambda}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn self_comparison_is_below_lambda(side in 4usize..9, seed in 0u64..10_000, lambda in 1e-5f64..2.0) {
        let f = noise_image(side, side, seed).unwrap();
        let config = DidConfig { lambda: Some(lambda), mask: MaskKind::Uniform, ..small_config(seed) };
        let v = did(&f, &f, &config).unwrap().value;
        prop_assert!(v <= lambda * (1.0 + 1e-9), "{v} > {lambda}");
    }
}
