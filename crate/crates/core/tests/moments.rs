use ican_core::moments::{
    conditional_moment, epsilon_probe, estimate_noise_moments, moment_matrix, reconstruct_moments, solve_order,
    CurveFamily, Density, MomentProblem, NoiseMomentOptions, ScalingStudy,
};
use ican_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |a, i| a * (n - i) as f64 / (i + 1) as f64)
}

/// `E((Z + cW)^n)` for independent Z, W from their raw moments.
fn mixed_moment(n: usize, c: f64, z: &Density, w: &Density) -> f64 {
    (0..=n).map(|k| binom(n, k) * c.powi(k as i32) * z.moment(n - k) * w.moment(k)).sum()
}

fn spread_cs(count: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..0.5, count).prop_map(|gaps| {
        let mut c = -1.5;
        gaps.iter()
            .map(|g| {
                let v = c;
                c += 0.5 + g;
                v
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exact_moments_are_recovered(n in 1usize..=4, shape in 0.5f64..4.0, sd in 0.1f64..1.5, cs in spread_cs(5)) {
        let z = Density::Normal { sd };
        let w = Density::CenteredGamma { shape, scale: 0.4 };
        let c = &cs[..=n];
        let observed: Vec<f64> = c.iter().map(|&ci| mixed_moment(n, ci, &z, &w)).collect();
        let sol = solve_order(n, c, &observed).unwrap();
        prop_assert!((sol.z_moment() - z.moment(n)).abs() < 1e-8);
        prop_assert!((sol.w_moment() - w.moment(n)).abs() < 1e-8);
        for k in 0..=n {
            prop_assert!((sol.q[k] - z.moment(n - k) * w.moment(k)).abs() < 1e-8);
        }
    }

    #[test]
    fn matrix_structure(n in 1usize..6, cs in spread_cs(7)) {
        let c = &cs[..=n];
        let m = moment_matrix(n, c);
        for j in 0..=n {
            for k in 0..=n {
                prop_assert_eq!(m[(j, k)], c[j].powi(k as i32) * binom(n, k));
            }
        }
    }
}

#[test]
fn all_orders_at_once() {
    let z = Density::Uniform { half_width: 0.7 };
    let w = Density::Normal { sd: 0.3 };
    let c = [-1.0, -0.2, 0.5, 1.1, 2.0];
    let problems: Vec<MomentProblem> = (1..=4)
        .map(|n| MomentProblem {
            order: n,
            c_values: c[..=n].to_vec(),
            observed: c[..=n].iter().map(|&ci| mixed_moment(n, ci, &z, &w)).collect(),
        })
        .collect();
    let est = reconstruct_moments(&problems).unwrap();
    assert_eq!(est.orders, vec![1, 2, 3, 4]);
    for n in 1..=4 {
        assert!((est.moment_x(n).unwrap() - z.moment(n)).abs() < 1e-10);
        assert!((est.moment_y(n).unwrap() - w.moment(n)).abs() < 1e-10);
    }
    assert!(!est.ill_conditioned);
}

#[test]
fn near_duplicate_c_values_are_flagged() {
    let c = [0.0, 1e-9, 2e-9, 1.0];
    let sol = solve_order(3, &c, &[1.0, 1.0, 1.0, 1.0]).unwrap();
    assert!(sol.ill_conditioned());
}

#[test]
fn wrong_lengths_are_rejected() {
    assert!(matches!(solve_order(2, &[0.0, 1.0], &[0.0, 1.0]), Err(Error::InvalidParameter(_))));
}

#[test]
fn first_conditional_moment_follows_inverse_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 50_000;
    let t = Density::Normal { sd: 1.0 }.sample(&mut rng, n);
    let nx = Density::Normal { sd: 0.1 }.sample(&mut rng, n);
    let ny = Density::Normal { sd: 0.05 }.sample(&mut rng, n);
    let x: Vec<f64> = t.iter().zip(&nx).map(|(a, b)| a + b).collect();
    let y: Vec<f64> = t.iter().zip(&ny).map(|(a, b)| a.sinh() + b).collect();
    for y0 in [-1.0, 0.0, 0.8] {
        let m = conditional_moment(&x, &y, y0, 1, 0.02).unwrap();
        assert!((m - f64::asinh(y0)).abs() < 0.02, "{y0}: {m}");
    }
}

fn sinh_study(noise_y: Density) -> ScalingStudy {
    ScalingStudy {
        curve: CurveFamily::Sinh,
        noise_x: Density::Normal { sd: 0.3 },
        noise_y,
        latent: Density::Normal { sd: 1.0 },
        ell_values: vec![1.0, 2.0, 4.0],
        y_points: vec![0.0, 1.5, 5.0],
        order: 2,
        samples_per_ell: 100_000,
        seeds: 1,
        seed: 0,
        bandwidth: None,
    }
}

#[test]
fn first_moments_vanish_within_monte_carlo_error() {
    let study = sinh_study(Density::Normal { sd: 0.5 });
    let (x, y) = study.sample(4.0, 3);
    let pts: Vec<f64> = study.y_points.iter().map(|p| 4.0 * p).collect();
    let est = estimate_noise_moments(&x, &y, study.w_scaled(4.0), &pts, 2, &NoiseMomentOptions::default()).unwrap();
    let tol = 3.0 * 0.5 / (x.len() as f64).sqrt();
    assert!(est.moment_x(1).unwrap().abs() < tol);
    assert!(est.moment_y(1).unwrap().abs() < tol);
}

#[test]
fn noiseless_y_gives_small_y_moment() {
    let mut study = sinh_study(Density::Uniform { half_width: 1e-9 });
    study.noise_x = Density::Normal { sd: 0.3 };
    let (x, y) = study.sample(4.0, 0);
    let pts: Vec<f64> = study.y_points.iter().map(|p| 4.0 * p).collect();
    let est = estimate_noise_moments(&x, &y, study.w_scaled(4.0), &pts, 2, &NoiseMomentOptions::default()).unwrap();
    let ex = est.moment_x(2).unwrap();
    let ey = est.moment_y(2).unwrap();
    assert!(ey < 0.1 * ex, "E(Nx^2) {ex}, E(Ny^2) {ey}");
}

#[test]
fn flat_inverse_curve_is_ill_posed() {
    let mut study = sinh_study(Density::Normal { sd: 0.5 });
    study.curve = CurveFamily::Linear { slope: 2.0 };
    let (x, y) = study.sample(1.0, 0);
    let r = estimate_noise_moments(&x, &y, study.w_scaled(1.0), &[0.0, 0.5, 1.0], 2, &NoiseMomentOptions::default());
    assert!(matches!(r, Err(Error::IllPosed(_))));
}

#[test]
fn sparse_neighbourhood_is_reported() {
    let study = sinh_study(Density::Normal { sd: 0.5 });
    let (x, y) = study.sample(1.0, 0);
    let r = estimate_noise_moments(&x, &y, study.w_scaled(1.0), &[0.0, 1.5, 400.0], 2, &NoiseMomentOptions::default());
    assert!(matches!(r, Err(Error::InsufficientLocalData { .. })));
}

#[test]
fn linear_curve_on_flat_density_has_no_finite_scale_error() {
    let study = ScalingStudy {
        curve: CurveFamily::Linear { slope: 1.5 },
        latent: Density::Uniform { half_width: 50.0 },
        ..sinh_study(Density::Normal { sd: 0.2 })
    };
    for n in 1..=4 {
        for y in [-3.0, 0.0, 7.0] {
            let e = epsilon_probe(&study, n, y, 1.0).unwrap();
            assert!(e.abs() < 1e-8, "order {n} at {y}: {e}");
        }
    }
}

#[test]
fn wider_latent_density_shrinks_the_error_towards_a_floor() {
    let mut last = f64::INFINITY;
    for sd in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let study = ScalingStudy {
            curve: CurveFamily::Cubic { a: 0.2 },
            latent: Density::Normal { sd },
            ..sinh_study(Density::Normal { sd: 0.2 })
        };
        let e = epsilon_probe(&study, 2, 0.3, 1.0).unwrap().abs();
        assert!(e <= last, "sd {sd}: {e} after {last}");
        last = e;
    }
}

#[test]
fn stretching_shrinks_the_error_quadratically_for_symmetric_noise() {
    let study = sinh_study(Density::Normal { sd: 0.5 });
    for y in [0.0, 1.5] {
        let e: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|&l| epsilon_probe(&study, 2, y, l).unwrap().abs()).collect();
        assert!(e[1] < 0.5 * e[0] && e[2] < 0.5 * e[1], "{y}: {e:?}");
    }
}

#[test]
fn study_json_round_trip() {
    let study = sinh_study(Density::CenteredGamma { shape: 2.0, scale: 0.1 });
    let text = serde_json::to_string(&study).unwrap();
    let back: ScalingStudy = serde_json::from_str(&text).unwrap();
    assert_eq!(study, back);
    let minimal = r#"{"curve":{"kind":"sinh"},"noise_x":{"family":"normal","sd":0.3},
        "noise_y":{"family":"normal","sd":0.5},"latent":{"family":"normal","sd":1.0},
        "y_points":[0.0,1.5,5.0],"order":2}"#;
    let s: ScalingStudy = serde_json::from_str(minimal).unwrap();
    assert_eq!(s.ell_values, vec![1.0, 2.0, 4.0, 8.0]);
    assert_eq!((s.samples_per_ell, s.seeds), (100_000, 20));
}
