use ican_core::dependence::{hsic_biased, hsic_pvalue, median_bandwidth, GramMatrix, PValueMethod};
use ican_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Biased HSIC written out as three explicit sums.
fn hsic_expanded(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let sx = median_bandwidth(x).unwrap();
    let sy = median_bandwidth(y).unwrap();
    let k = |i: usize, j: usize| (-(x[i] - x[j]).powi(2) / (2.0 * sx * sx)).exp();
    let l = |i: usize, j: usize| (-(y[i] - y[j]).powi(2) / (2.0 * sy * sy)).exp();
    let nf = n as f64;
    let (mut a, mut b, mut ks, mut ls) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            a += k(i, j) * l(i, j);
            ks += k(i, j);
            ls += l(i, j);
            for q in 0..n {
                b += k(i, j) * l(i, q);
            }
        }
    }
    a / (nf * nf) - 2.0 * b / (nf * nf * nf) + ks * ls / (nf * nf * nf * nf)
}

fn distinct_pair(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn trace_form_matches_expanded_sums((x, y) in distinct_pair(32)) {
        prop_assume!(median_bandwidth(&x).is_ok() && median_bandwidth(&y).is_ok());
        let fast = hsic_biased(&x, &y).unwrap();
        let slow = hsic_expanded(&x, &y);
        prop_assert!((fast - slow).abs() < 1e-12, "{} vs {}", fast, slow);
    }

    #[test]
    fn hsic_is_symmetric_and_non_negative((x, y) in distinct_pair(24)) {
        prop_assume!(median_bandwidth(&x).is_ok() && median_bandwidth(&y).is_ok());
        let a = hsic_biased(&x, &y).unwrap();
        let b = hsic_biased(&y, &x).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn invariant_under_joint_shift_and_scale((x, y) in distinct_pair(20), s in 0.1f64..10.0, c in -5.0f64..5.0) {
        prop_assume!(median_bandwidth(&x).is_ok() && median_bandwidth(&y).is_ok());
        let xs: Vec<f64> = x.iter().map(|v| s * v + c).collect();
        let a = hsic_biased(&x, &y).unwrap();
        let b = hsic_biased(&xs, &y).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn gram_rows_are_valid(x in prop::collection::vec(-3.0f64..3.0, 2..20), bw in 0.05f64..5.0) {
        let g = GramMatrix::new(&x, bw);
        for i in 0..x.len() {
            prop_assert_eq!(g.get(i, i), 1.0);
            for j in 0..x.len() {
                let arg = (x[i] - x[j]).powi(2) / (2.0 * bw * bw);
                let want = (-arg).exp();
                prop_assert!((g.get(i, j) - want).abs() <= 2e-15 * (1.0 + arg) * want + 1e-300);
            }
        }
    }
}

#[test]
fn identical_columns_are_dependent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    let r = hsic_pvalue(&x, &x, PValueMethod::Gamma).unwrap();
    assert!(r.p_value() < 1e-6, "{r:?}");
}

#[test]
fn permutation_p_value_is_reproducible_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
    let m = PValueMethod::Permutation { permutations: 200, seed: 5 };
    let a = hsic_pvalue(&x, &y, m).unwrap();
    let b = hsic_pvalue(&x, &y, m).unwrap();
    assert_eq!(a, b);
    let p = a.p_perm.unwrap();
    assert!(p >= 1.0 / 201.0 && p <= 1.0);
}

#[test]
fn small_samples_need_permutations() {
    let x = [0.0, 1.0, 2.0, 3.5, 4.0];
    let y = [1.0, 0.0, 2.0, 3.0, 1.5];
    assert!(matches!(hsic_pvalue(&x, &y, PValueMethod::Gamma), Err(Error::TooFewSamples { .. })));
    let r = hsic_pvalue(&x, &y, PValueMethod::Permutation { permutations: 100, seed: 1 }).unwrap();
    assert!(r.p_gamma.is_none() && r.p_perm.is_some());
}

#[test]
fn constant_column_is_degenerate() {
    assert!(matches!(hsic_biased(&[1.0; 10], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]), Err(Error::DegenerateSample(_))));
}

#[test]
fn independent_columns_are_rarely_rejected() {
    let mut rejected = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        if hsic_pvalue(&x, &y, PValueMethod::Gamma).unwrap().p_value() < 0.05 {
            rejected += 1;
        }
    }
    assert!(rejected <= 12, "{rejected} of 100 rejected");
}
