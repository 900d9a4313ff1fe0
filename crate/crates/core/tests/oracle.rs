use ::did::did::{power_iteration, ProjectedSignal, XLandmarkSpec, YLandmarkSpec};
use ::did::oracle::{dense_t_hat, dense_top_eig, did_dense_oracle};
use ::did::scene::{noise_image, normalize, textured_scene};
use ::did::{did, DidConfig, LandmarkFactors, MaskKind, PreparedPair};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    for (k, (mx, my)) in [(9, 27), (16, 64), (25, 27), (36, 64), (64, 64), (4, 8)]
        .into_iter()
        .enumerate()
    {
        let seed = k as u64;
        let f = noise_image(10, 10, seed).unwrap();
        let g = noise_image(10, 10, seed + 100).unwrap();
        let config = DidConfig {
            landmarks_x: XLandmarkSpec::Grid(mx),
            landmarks_y: YLandmarkSpec::Random(my),
            seed,
            ..DidConfig::default()
        };
        let factors = LandmarkFactors::for_pair(&f, &g, &config).unwrap();
        let pair = PreparedPair::new(&f, &g, &config.mask.evaluate(f.coords()), &factors).unwrap();
        for lambda in [1e-6, 1e-3] {
            let dense = dense_top_eig(&dense_t_hat(pair.a_hat(), pair.b_hat(), lambda).unwrap())
                .unwrap()
                .0;
            let reduced = pair.t_hat(lambda).unwrap();
            let power = power_iteration(&reduced, 1e-10, 100_000, 3).unwrap().value;
            assert!(
                rel(power, dense) <= 1e-8,
                "mx {mx} my {my}: {power} vs {dense}"
            );
        }
    }
}

#[test]
fn full_landmarks_reproduce_the_quadrature_estimate() {
    for seed in 0..3 {
        let f = noise_image(8, 8, seed).unwrap();
        let g = noise_image(8, 8, seed + 7).unwrap();
        for mask in [MaskKind::Blackman, MaskKind::Uniform] {
            let config = DidConfig {
                landmarks_x: XLandmarkSpec::Full,
                landmarks_y: YLandmarkSpec::Full,
                mask,
                ..DidConfig::default()
            };
            let v = did(&f, &g, &config).unwrap().value;
            let o = did_dense_oracle(
                &f,
                &g,
                &mask.evaluate(f.coords()),
                &config.kernel_x,
                &config.kernel_y,
                1e-2,
            )
            .unwrap();
            assert!(rel(v, o) <= 1e-6, "{v} vs {o}");
        }
    }
}

#[test]
fn estimate_never_exceeds_the_squared_operator_norm() {
    let f = normalize(&textured_scene(16, 16, 2).unwrap()).unwrap();
    let g = normalize(&textured_scene(16, 16, 3).unwrap()).unwrap();
    let config = DidConfig {
        landmarks_x: XLandmarkSpec::Grid(25),
        landmarks_y: YLandmarkSpec::Cube(125),
        ..DidConfig::default()
    };
    let factors = LandmarkFactors::for_pair(&f, &g, &config).unwrap();
    let pair = PreparedPair::new(&f, &g, &config.mask.evaluate(f.coords()), &factors).unwrap();
    let bound = pair.a_hat().singular_values().max().powi(2);
    for lambda in [1e-6, 1e-2, 1e2, 1e6] {
        let v = pair.value(lambda, 1e-12, 100_000, 0).unwrap();
        assert!(v <= bound * (1.0 + 1e-9));
    }
    // the bound is approached as lambda grows
    let v = pair.value(1e8, 1e-12, 100_000, 0).unwrap();
    assert!(rel(v, bound) < 1e-4, "{v} vs {bound}");
}

#[test]
fn witness_q_matches_explicit_inverse() {
    let f = noise_image(8, 8, 11).unwrap();
    let g = noise_image(8, 8, 12).unwrap();
    let lambda = 1e-3;
    let config = DidConfig {
        lambda: Some(lambda),
        landmarks_x: XLandmarkSpec::Grid(16),
        landmarks_y: YLandmarkSpec::Random(48),
        ..DidConfig::default()
    };
    let factors = LandmarkFactors::for_pair(&f, &g, &config).unwrap();
    let mask = config.mask.evaluate(f.coords());
    let pair = PreparedPair::new(&f, &g, &mask, &factors).unwrap();
    let r = pair.evaluate(lambda, 1e-12, 100_000, 0).unwrap();

    let (a, b) = (pair.a_hat(), pair.b_hat());
    let mut c = b * b.transpose();
    for i in 0..c.nrows() {
        c[(i, i)] += lambda;
    }
    let coef = b.transpose() * c.try_inverse().unwrap() * a * &r.h_tilde;
    let expected_q = ProjectedSignal::new(&g, None, &factors)
        .unwrap()
        .feature_map()
        * coef;
    let expected_h = ProjectedSignal::new(&f, None, &factors)
        .unwrap()
        .feature_map()
        * &r.h_tilde;
    assert!((&r.q_sampled - &expected_q).amax() <= 1e-8 * expected_q.amax().max(1e-300));
    assert!((&r.h_sampled - &expected_h).amax() <= 1e-12 * expected_h.amax());
}

#[test]
fn self_comparison_shrinks_the_witness() {
    // with A = B the q coefficients are A^T (A A^T + lambda)^{-1} A h,
    // whose singular values s/(s+lambda) never exceed one
    let f = noise_image(8, 8, 5).unwrap();
    let lambda = 1e-4;
    let config = DidConfig {
        lambda: Some(lambda),
        mask: MaskKind::Uniform,
        landmarks_x: XLandmarkSpec::Grid(16),
        landmarks_y: YLandmarkSpec::Cube(64),
        ..DidConfig::default()
    };
    let factors = LandmarkFactors::for_pair(&f, &f, &config).unwrap();
    let pair = PreparedPair::new(&f, &f, &config.mask.evaluate(f.coords()), &factors).unwrap();
    let r = pair.evaluate(lambda, 1e-12, 100_000, 0).unwrap();
    assert!(r.value <= lambda);
    let a = pair.a_hat();
    let mut gram = a.transpose() * a;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let coef = gram.clone().try_inverse().unwrap() * (a.transpose() * a) * &r.h_tilde;
    assert!(coef.norm() <= r.h_tilde.norm() + 1e-12);
    let fm = ProjectedSignal::new(&f, None, &factors).unwrap();
    let direct = fm.feature_map() * coef;
    assert!((&direct - &r.q_sampled).amax() <= 1e-8 * direct.amax());
}

#[test]
fn nystrom_error_shrinks_with_more_input_landmarks() {
    let f = normalize(&textured_scene(16, 16, 4).unwrap()).unwrap();
    let g = normalize(&textured_scene(16, 16, 5).unwrap()).unwrap();
    let base = DidConfig {
        landmarks_y: YLandmarkSpec::Full,
        ..DidConfig::default()
    };
    let oracle = did_dense_oracle(
        &f,
        &g,
        &base.mask.evaluate(f.coords()),
        &base.kernel_x,
        &base.kernel_y,
        1e-2,
    )
    .unwrap();
    let errs: Vec<f64> = [9, 25, 64, 256]
        .into_iter()
        .map(|m| {
            let c = DidConfig {
                landmarks_x: XLandmarkSpec::Grid(m),
                ..base.clone()
            };
            (did(&f, &g, &c).unwrap().value - oracle).abs()
        })
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] <= 1.1 * w[0], "{errs:?}");
    }
    assert!(errs[3] <= 1e-6 * oracle);
}

#[test]
fn quarter_turns_cost_nothing_with_a_symmetric_grid() {
    // a 90 degree turn permutes pixels and maps the landmark grid onto
    // itself, so q can absorb it exactly
    use ::did::warp::rotate;
    let f = normalize(&textured_scene(16, 16, 6).unwrap()).unwrap();
    let config = DidConfig {
        lambda: Some(1e-6),
        landmarks_x: XLandmarkSpec::Grid(25),
        landmarks_y: YLandmarkSpec::Cube(125),
        ..DidConfig::default()
    };
    let base = did(&f, &f, &config).unwrap().value;
    for angle in [90.0, 180.0, 270.0] {
        let v = did(&f, &rotate(&f, angle).unwrap(), &config).unwrap().value;
        assert!(rel(v, base) <= 1e-6, "{angle}: {v} vs {base}");
    }
}
