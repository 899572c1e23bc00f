use ican_core::gp::{fit_gp, log_marginal_likelihood, GpModel, Hyperparameters};
use ican_core::data::gen_dataset2;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Log marginal likelihood through a dense nalgebra Cholesky.
fn lml_dense(t: &[f64], y: &[f64], h: &Hyperparameters) -> f64 {
    let n = t.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let d = t[i] - t[j];
        h.signal_std.powi(2) * (-d * d / (2.0 * h.lengthscale.powi(2))).exp() + if i == j { h.noise_std.powi(2) } else { 0.0 }
    });
    let chol = k.cholesky().unwrap();
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * yv.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Hyperparameters)> {
    (5usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(-2.0f64..2.0, n),
            0.05f64..1.0,
            0.2f64..3.0,
            0.05f64..1.0,
        )
            .prop_map(|(t, y, l, s, e)| (t, y, Hyperparameters { lengthscale: l, signal_std: s, noise_std: e }))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradient_matches_central_differences((t, y, h) in instance()) {
        let (_, g) = log_marginal_likelihood(&t, &y, &h).unwrap();
        let step = 1e-5;
        let at = |p: [f64; 3]| {
            let hh = Hyperparameters { lengthscale: p[0].exp(), signal_std: p[1].exp(), noise_std: p[2].exp() };
            log_marginal_likelihood(&t, &y, &hh).unwrap().0
        };
        let p0 = [h.lengthscale.ln(), h.signal_std.ln(), h.noise_std.ln()];
        for i in 0..3 {
            let mut a = p0;
            let mut b = p0;
            a[i] += step;
            b[i] -= step;
            let fd = (at(a) - at(b)) / (2.0 * step);
            let rel = (g[i] - fd).abs() / fd.abs().max(1e-3);
            prop_assert!(rel < 1e-4, "component {}: {} vs {}", i, g[i], fd);
        }
    }

    #[test]
    fn likelihood_matches_dense_reference((t, y, h) in instance()) {
        let (lml, _) = log_marginal_likelihood(&t, &y, &h).unwrap();
        let want = lml_dense(&t, &y, &h);
        prop_assert!((lml - want).abs() < 1e-8 * want.abs().max(1.0), "{} vs {}", lml, want);
    }
}

#[test]
fn interpolates_with_tiny_noise() {
    let t: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
    let y: Vec<f64> = t.iter().map(|v| (3.0 * v).sin()).collect();
    let m = GpModel::with_hyperparameters(&t, &y, Hyperparameters { lengthscale: 0.3, signal_std: 1.0, noise_std: 1e-4 }).unwrap();
    for (ti, yi) in t.iter().zip(&y) {
        assert!((m.predict_one(*ti) - yi).abs() < 1e-3);
    }
}

#[test]
fn fitted_mean_is_monotone_on_invertible_generator() {
    let g = gen_dataset2(200, 4).unwrap();
    let m = fit_gp(&g.truth.t, &g.sample.y).unwrap();
    let grid: Vec<f64> = (0..500).map(|i| i as f64 / 499.0).collect();
    let p = m.predict_mean(&grid);
    let inc = p.windows(2).all(|w| w[1] > w[0]);
    let dec = p.windows(2).all(|w| w[1] < w[0]);
    assert!(inc || dec);
}

#[test]
fn slope_matches_finite_difference() {
    let t: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let y: Vec<f64> = t.iter().map(|v| v * v + 0.05 * (37.0 * v).sin()).collect();
    let m = GpModel::with_hyperparameters(&t, &y, Hyperparameters { lengthscale: 0.2, signal_std: 1.0, noise_std: 0.05 }).unwrap();
    for q in [0.1, 0.45, 0.8, 1.3] {
        let (mu, slope) = m.predict_with_slope(q);
        assert!((mu - m.predict_one(q)).abs() < 1e-12);
        let fd = (m.predict_one(q + 1e-5) - m.predict_one(q - 1e-5)) / 2e-5;
        assert!((slope - fd).abs() < 1e-6 * fd.abs().max(1.0), "{q}: {slope} vs {fd}");
    }
}
