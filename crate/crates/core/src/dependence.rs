//! Gaussian-kernel HSIC with median-heuristic bandwidths.
//!
//! The statistic is the biased V-statistic `trace(K H L H) / n²`. Two null
//! approximations are provided: a two-parameter gamma fitted to `n · HSIC`
//! by moment matching, and a permutation test that shuffles `y`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::numeric::{exp_neg, kth_pair_difference};

/// Smallest sample size the gamma approximation accepts.
pub const MIN_GAMMA_SAMPLES: usize = 6;
/// Smallest sample size for any HSIC evaluation.
pub const MIN_HSIC_SAMPLES: usize = 4;

/// Gaussian Gram matrix `K_ij = exp(-(s_i - s_j)² / (2σ²))`, stored row-major.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    n: usize,
    bandwidth: f64,
    entries: Vec<f64>,
}

impl GramMatrix {
    pub fn new(samples: &[f64], bandwidth: f64) -> Self {
        let n = samples.len();
        let mut entries = vec![0.0; n * n];
        let scale = -1.0 / (2.0 * bandwidth * bandwidth);
        for i in 0..n {
            let si = samples[i];
            let row = &mut entries[i * n + i..(i + 1) * n];
            for (e, sj) in row.iter_mut().zip(&samples[i..]) {
                let d = si - sj;
                *e = exp_neg(scale * d * d);
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                entries[j * n + i] = entries[i * n + j];
            }
        }
        Self {
            n,
            bandwidth,
            entries,
        }
    }

    /// Builds the matrix with the median-heuristic bandwidth of `samples`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        Ok(Self::new(samples, median_bandwidth(samples)?))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `H K H` with `H = I - 11ᵀ/n`.
    pub fn centered(&self) -> Vec<f64> {
        let n = self.n;
        let nf = n as f64;
        let row_means: Vec<f64> = self
            .entries
            .chunks_exact(n)
            .map(|row| row.iter().sum::<f64>() / nf)
            .collect();
        let grand = row_means.iter().sum::<f64>() / nf;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let ri = row_means[i];
            let row = &self.entries[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                dst[j] = row[j] - ri - row_means[j] + grand;
            }
        }
        out
    }

    /// Mean of the off-diagonal entries.
    fn off_diagonal_mean(&self) -> f64 {
        let n = self.n as f64;
        let total: f64 = self.entries.iter().sum();
        (total - n) / (n * (n - 1.0))
    }
}

/// HSIC between the variables behind a centered Gram matrix and a raw one.
pub fn hsic_from_centered(centered: &[f64], other: &GramMatrix) -> f64 {
    let n = other.len() as f64;
    let s: f64 = centered
        .iter()
        .zip(other.entries())
        .map(|(a, b)| a * b)
        .sum();
    (s / (n * n)).max(0.0)
}

/// Bandwidth σ with `2σ²` equal to the median pairwise squared distance.
pub fn median_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: n,
            hint: "",
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = n * (n - 1) / 2;
    let mid = m / 2;
    let upper = kth_pair_difference(&sorted, mid);
    let median = if m % 2 == 1 {
        upper * upper
    } else {
        let below = kth_pair_difference(&sorted, mid - 1);
        0.5 * (below * below + upper * upper)
    };
    if !(median > 0.0) || !median.is_finite() {
        return Err(Error::DegenerateSample(
            "median pairwise distance is zero".into(),
        ));
    }
    Ok((median / 2.0).sqrt())
}

fn check_pair(x: &[f64], y: &[f64], needed: usize, hint: &'static str) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < needed {
        return Err(Error::TooFewSamples {
            needed,
            got: x.len(),
            hint,
        });
    }
    Ok(())
}

/// Biased HSIC `trace(K H L H) / n²` with median-heuristic bandwidths.
pub fn hsic_biased(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, MIN_HSIC_SAMPLES, "")?;
    let k = GramMatrix::from_samples(x)?;
    let l = GramMatrix::from_samples(y)?;
    Ok(hsic_from_centered(&k.centered(), &l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum PValueMethod {
    Gamma,
    Permutation { permutations: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub hsic: f64,
    /// Gamma-approximation p-value; absent when `n` is below
    /// [`MIN_GAMMA_SAMPLES`].
    pub p_gamma: Option<f64>,
    pub p_perm: Option<f64>,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub n: usize,
}

impl DependenceReport {
    /// The p-value used for decisions: the permutation value when one was
    /// computed, the gamma value otherwise.
    pub fn p_value(&self) -> f64 {
        self.p_perm.or(self.p_gamma).unwrap_or(f64::NAN)
    }
}

/// HSIC statistic plus p-value(s) for the null hypothesis of independence.
pub fn hsic_pvalue(x: &[f64], y: &[f64], method: PValueMethod) -> Result<DependenceReport> {
    let needed = match method {
        PValueMethod::Gamma => MIN_GAMMA_SAMPLES,
        PValueMethod::Permutation { .. } => MIN_HSIC_SAMPLES,
    };
    check_pair(x, y, needed, "; use the permutation method for small samples")?;
    let k = GramMatrix::from_samples(x)?;
    let l = GramMatrix::from_samples(y)?;
    Ok(report_from_grams(&k, &l, method))
}

pub(crate) fn report_from_grams(k: &GramMatrix, l: &GramMatrix, method: PValueMethod) -> DependenceReport {
    let n = k.len();
    let kc = k.centered();
    let hsic = hsic_from_centered(&kc, l);
    let p_gamma = (n >= MIN_GAMMA_SAMPLES).then(|| gamma_pvalue(k, l, &kc, hsic));
    let p_perm = match method {
        PValueMethod::Gamma => None,
        PValueMethod::Permutation { permutations, seed } => {
            Some(permutation_pvalue(&kc, l, hsic, permutations, seed))
        }
    };
    DependenceReport {
        hsic,
        p_gamma,
        p_perm,
        sigma_x: k.bandwidth(),
        sigma_y: l.bandwidth(),
        n,
    }
}

fn gamma_pvalue(k: &GramMatrix, l: &GramMatrix, kc: &[f64], hsic: f64) -> f64 {
    let n = k.len();
    let nf = n as f64;
    let lc = l.centered();

    let mut b_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let b = kc[i * n + j] * lc[i * n + j] / 6.0;
                b_sum += b * b;
            }
        }
    }
    let var = 72.0 * (nf - 4.0) * (nf - 5.0) / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0))
        * b_sum
        / (nf * (nf - 1.0));

    let mu_x = k.off_diagonal_mean();
    let mu_y = l.off_diagonal_mean();
    let mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / nf;

    let stat = nf * hsic;
    if !(var > 0.0) || !(mean > 0.0) {
        return if stat > 0.0 { 0.0 } else { 1.0 };
    }
    let shape = mean * mean / var;
    let scale = nf * var / mean;
    match Gamma::new(shape, 1.0 / scale) {
        Ok(g) => g.sf(stat).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

fn permutation_pvalue(kc: &[f64], l: &GramMatrix, observed: f64, permutations: usize, seed: u64) -> f64 {
    let n = l.len();
    let nf = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let lent = l.entries();
    let threshold = observed * nf * nf;
    let mut exceed = 0usize;
    for _ in 0..permutations {
        perm.shuffle(&mut rng);
        let mut s = 0.0;
        for i in 0..n {
            let row = &kc[i * n..(i + 1) * n];
            let pi = perm[i] * n;
            for j in 0..n {
                s += row[j] * lent[pi + perm[j]];
            }
        }
        // exact ties (e.g. the identity permutation) count as exceedances
        if s >= threshold - 1e-12 * threshold.abs() {
            exceed += 1;
        }
    }
    (1 + exceed) as f64 / (1 + permutations) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn median_bandwidth_small_cases() {
        let s = median_bandwidth(&[0.0, 1.0, 2.0]).unwrap();
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
        let s = median_bandwidth(&[0.0, -3.0]).unwrap();
        assert!((s - 3.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            median_bandwidth(&[0.0, 0.0, 0.0]),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn median_of_even_count_averages_central_pair() {
        // squared distances {1, 4, 9, 1, 4, 1} -> sorted {1,1,1,4,4,9}, median 2.5
        let s = median_bandwidth(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((2.0 * s * s - 2.5).abs() < 1e-14);
    }

    #[test]
    fn gram_matrix_invariants() {
        let g = GramMatrix::from_samples(&[0.3, -1.0, 2.0, 0.1]).unwrap();
        for i in 0..4 {
            assert_eq!(g.get(i, i), 1.0);
            for j in 0..4 {
                assert_eq!(g.get(i, j), g.get(j, i));
                assert!(g.get(i, j) > 0.0 && g.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn constant_input_is_degenerate() {
        let x = [1.0; 8];
        let y = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert!(matches!(hsic_biased(&x, &y), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn self_dependence_is_positive_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        assert!(hsic_biased(&x, &x).unwrap() > 0.0);
        assert!((hsic_biased(&x, &y).unwrap() - hsic_biased(&y, &x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_and_small_n() {
        assert!(matches!(
            hsic_biased(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]),
            Err(Error::LengthMismatch { .. })
        ));
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let err = hsic_pvalue(&x, &x, PValueMethod::Gamma).unwrap_err();
        assert!(err.to_string().contains("permutation"));
        let r = hsic_pvalue(
            &x,
            &[4.0, 0.0, 3.0, 1.0, 2.0],
            PValueMethod::Permutation {
                permutations: 50,
                seed: 1,
            },
        )
        .unwrap();
        assert!(r.p_gamma.is_none());
        assert!(r.p_perm.unwrap() > 0.0 && r.p_perm.unwrap() <= 1.0);
    }

    #[test]
    fn strong_dependence_has_tiny_pvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 1e-3 * rng.random::<f64>()).collect();
        let r = hsic_pvalue(
            &x,
            &y,
            PValueMethod::Permutation {
                permutations: 2000,
                seed: 5,
            },
        )
        .unwrap();
        assert!(r.p_gamma.unwrap() < 1e-3);
        assert!(r.p_perm.unwrap() < 1e-3);
    }

    #[test]
    fn permutation_pvalue_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let m = PValueMethod::Permutation {
            permutations: 200,
            seed: 9,
        };
        assert_eq!(hsic_pvalue(&x, &y, m).unwrap(), hsic_pvalue(&x, &y, m).unwrap());
    }
}
