use std::io::Write;

use ican_core::data::{
    dataset3_amplitude, gen_dataset1, gen_dataset2, gen_dataset3, gen_section3, generate, is_grid_monotone, load_csv,
    write_csv, Dataset, GeneratorSpec, PairedSample, Provenance,
};
use ican_core::Error;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn csv_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn parses_plain_rows() {
    let f = csv_file("1.0,2.0\n3.0,4.0\n");
    let s = load_csv(f.path()).unwrap();
    assert_eq!(s.x, vec![1.0, 3.0]);
    assert_eq!(s.y, vec![2.0, 4.0]);
    assert!(s.normalization.is_none());
    assert!(matches!(s.provenance, Provenance::File { .. }));
}

#[test]
fn skips_header() {
    let f = csv_file("x,y\n1,2\n3,4\n5,6\n");
    assert_eq!(load_csv(f.path()).unwrap().len(), 3);
}

#[test]
fn bad_row_names_its_line() {
    let f = csv_file("1.0,2.0\n2.0,3.0\n1.0,abc\n");
    match load_csv(f.path()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn single_row_is_too_few() {
    let f = csv_file("1.0,2.0\n");
    assert!(matches!(load_csv(f.path()), Err(Error::TooFewSamples { .. })));
}

#[test]
fn missing_file_is_an_error() {
    assert!(load_csv("/nonexistent/file.csv").is_err());
}

#[test]
fn two_point_normalisation() {
    let s = PairedSample::new(vec![0.0, 2.0], vec![1.0, 5.0]).unwrap().normalize().unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((s.x[0] + r).abs() < 1e-15 && (s.x[1] - r).abs() < 1e-15);
}

#[test]
fn zero_variance_cannot_be_normalised() {
    let s = PairedSample::new(vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]).unwrap();
    assert!(matches!(s.normalize(), Err(Error::DegenerateSample(_))));
}

proptest! {
    #[test]
    fn normalisation_invariants(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..200)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = PairedSample::new(x, y).unwrap();
        prop_assume!(mean_var(&s.x).1 > 1e-6 && mean_var(&s.y).1 > 1e-6);
        let n = s.normalize().unwrap();
        for axis in [&n.x, &n.y] {
            let (m, v) = mean_var(axis);
            prop_assert!(m.abs() < 1e-10);
            prop_assert!((v - 1.0).abs() < 1e-10);
        }
        let back = n.denormalize();
        for (a, b) in back.x.iter().chain(&back.y).zip(s.x.iter().chain(&s.y)) {
            prop_assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
        let twice = n.normalize().unwrap();
        for (a, b) in twice.x.iter().zip(&n.x) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip(pairs in prop::collection::vec((-1e6f64..1e6, -1e-6f64..1e-6), 2..50)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = PairedSample::new(x, y).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(f.path(), &s).unwrap();
        let back = load_csv(f.path()).unwrap();
        prop_assert_eq!(back.x, s.x);
        prop_assert_eq!(back.y, s.y);
    }
}

#[test]
fn section3_ground_truth() {
    let g = generate(&GeneratorSpec { noise_scale: 0.0, ..GeneratorSpec::new(Dataset::Section3, 100, 1) }).unwrap();
    for k in 0..100 {
        assert_eq!(g.sample.x[k], g.curve.u(g.truth.t[k]));
        assert_eq!(g.sample.y[k], g.curve.v(g.truth.t[k]));
    }
    let a = gen_section3(300, 8);
    assert!(a.truth.nx.iter().chain(&a.truth.ny).all(|e| e.abs() <= 0.1));
}

#[test]
fn dataset1_laws() {
    for seed in 0..10 {
        let g = gen_dataset1(200, seed, 4).unwrap();
        assert!(g.truth.nx.iter().chain(&g.truth.ny).all(|e| e.abs() <= 0.035));
        assert!(g.truth.t.iter().all(|t| (0.0..=1.0).contains(t)));
        let grid: Vec<f64> = (0..201).map(|i| i as f64 / 200.0).collect();
        let vs: Vec<f64> = grid.iter().map(|&t| g.curve.v(t)).collect();
        assert!(!is_grid_monotone(&vs), "seed {seed}");
        assert_eq!(g, gen_dataset1(200, seed, 4).unwrap());
    }
    let clean = generate(&GeneratorSpec { noise_scale: 0.0, ..GeneratorSpec::new(Dataset::Dataset1, 50, 3) }).unwrap();
    for k in 0..50 {
        assert_eq!(clean.sample.x[k], clean.curve.u(clean.truth.t[k]));
        assert_eq!(clean.sample.y[k], clean.curve.v(clean.truth.t[k]));
    }
    assert!(matches!(gen_dataset1(10, 0, 1), Err(Error::InvalidParameter(_))));
}

#[test]
fn dataset2_laws() {
    for seed in 0..10 {
        let g = gen_dataset2(200, seed).unwrap();
        assert!(g.truth.nx.iter().all(|e| e.abs() <= 0.008));
        assert!(g.truth.ny.iter().all(|e| (-0.0015..=0.0).contains(e)));
        let grid: Vec<f64> = (0..501).map(|i| i as f64 / 500.0).collect();
        let vs: Vec<f64> = grid.iter().map(|&t| g.curve.v(t)).collect();
        assert!(is_grid_monotone(&vs), "seed {seed}");
        // the reported curve carries the noise mean, so residuals are centred
        for k in 0..200 {
            let centred = g.sample.y[k] - g.curve.v(g.truth.t[k]);
            assert!((centred - (g.truth.ny[k] + 0.00075)).abs() < 1e-12);
        }
    }
}

/// Spearman rank correlation with a two-sided t-approximation p-value.
fn spearman(a: &[f64], b: &[f64]) -> (f64, f64) {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let (ma, va) = mean_var(&ra);
    let (mb, vb) = mean_var(&rb);
    let n = a.len() as f64;
    let cov = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    let rho = cov / (va * vb).sqrt();
    let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, n - 2.0).unwrap().cdf(t.abs()));
    (rho, p)
}

#[test]
fn dataset3_noise_grows_with_latent() {
    assert_eq!(dataset3_amplitude(0.0), 0.005);
    for seed in 0..5 {
        let g = gen_dataset3(200, seed).unwrap();
        let abs: Vec<f64> = g.truth.nx.iter().map(|e| e.abs()).collect();
        let (rho, p) = spearman(&abs, &g.truth.t);
        assert!(rho > 0.0 && p < 0.01, "seed {seed}: rho {rho}, p {p}");
        for (e, t) in g.truth.nx.iter().zip(&g.truth.t) {
            assert!(e.abs() <= dataset3_amplitude(*t));
        }
    }
}
