//! Scalar Gaussian-process regression with a squared-exponential kernel.
//!
//! Hyperparameters are fitted by maximising the log marginal likelihood
//! with a box-constrained BFGS ascent in log coordinates, restarted from
//! several seeded starting points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::exp_neg;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscale: f64,
    pub signal_std: f64,
    pub noise_std: f64,
}

impl Hyperparameters {
    fn to_log(self) -> [f64; 3] {
        [self.lengthscale.ln(), self.signal_std.ln(), self.noise_std.ln()]
    }

    fn from_log(p: &[f64; 3]) -> Self {
        Self {
            lengthscale: p[0].exp(),
            signal_std: p[1].exp(),
            noise_std: p[2].exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.lengthscale, self.signal_std, self.noise_std]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "hyperparameters must be positive and finite: {self:?}"
            )))
        }
    }
}

/// Row-major `n × n` kernel matrix without the noise term.
fn kernel_matrix(t: &[f64], h: &Hyperparameters) -> Vec<f64> {
    let n = t.len();
    let sf2 = h.signal_std * h.signal_std;
    let scale = -0.5 / (h.lengthscale * h.lengthscale);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = sf2;
        for j in (i + 1)..n {
            let d = t[i] - t[j];
            let v = sf2 * exp_neg(scale * d * d);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for q in 0..4 {
            acc[q] += x[q] * y[q];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Lower Cholesky factor stored row-major.
struct Factor {
    n: usize,
    l: Vec<f64>,
}

impl Factor {
    fn new(a: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let v = a[i * n + j] - dot(ri, rj);
                if i == j {
                    if !(v > 0.0) {
                        return None;
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            z[i] = (z[i] - dot(&self.l[i * n..i * n + i], &z[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for k in (i + 1)..n {
                v -= self.l[k * n + i] * z[k];
            }
            z[i] = v / self.l[i * n + i];
        }
        z
    }

    /// Full inverse of `L Lᵀ`, row-major.
    fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // Rows of M = L⁻¹ (lower triangular).
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            let (done, rest) = m.split_at_mut(i * n);
            let row = &mut rest[..i];
            for k in 0..i {
                let lik = self.l[i * n + k];
                for (r, mk) in row[..=k].iter_mut().zip(&done[k * n..k * n + k + 1]) {
                    *r -= lik * mk;
                }
            }
            let d = 1.0 / self.l[i * n + i];
            for r in row.iter_mut() {
                *r *= d;
            }
            rest[i] = d;
        }
        // (L Lᵀ)⁻¹ = Mᵀ M
        let mut inv = vec![0.0; n * n];
        for k in 0..n {
            let row = &m[k * n..k * n + k + 1];
            for i in 0..=k {
                let mi = row[i];
                if mi == 0.0 {
                    continue;
                }
                let out = &mut inv[i * n..i * n + i + 1];
                for (o, mj) in out.iter_mut().zip(&row[..=i]) {
                    *o += mi * mj;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                inv[j * n + i] = inv[i * n + j];
            }
        }
        inv
    }
}

/// Cholesky factor of `K + σ_n² I`, escalating diagonal jitter on failure.
fn factor(k: &[f64], n: usize, noise_var: f64) -> Result<(Factor, f64)> {
    let mut jitter = 0.0;
    loop {
        let mut a = k.to_vec();
        for i in 0..n {
            a[i * n + i] += noise_var + jitter;
        }
        if let Some(c) = Factor::new(&a, n) {
            return Ok((c, jitter));
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::NotPositiveDefinite { jitter: JITTER_MAX });
        }
    }
}

fn check_training(t: &[f64], y: &[f64], needed: usize) -> Result<()> {
    if t.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: t.len(),
            right: y.len(),
        });
    }
    if t.len() < needed {
        return Err(Error::TooFewSamples {
            needed,
            got: t.len(),
            hint: "",
        });
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite training data".into()));
    }
    Ok(())
}

/// Log marginal likelihood and its gradient with respect to
/// `(ln λ, ln σ_f, ln σ_n)`.
pub fn log_marginal_likelihood(t: &[f64], y: &[f64], h: &Hyperparameters) -> Result<(f64, [f64; 3])> {
    check_training(t, y, 2)?;
    h.validate()?;
    let n = t.len();
    let k = kernel_matrix(t, h);
    let noise_var = h.noise_std * h.noise_std;
    let (chol, _) = factor(&k, n, noise_var)?;
    let alpha = chol.solve(y);
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let lml = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI;

    let kinv = chol.inverse();
    let inv_l2 = 1.0 / (h.lengthscale * h.lengthscale);
    let mut g = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - kinv[i * n + j];
            let kf = k[i * n + j];
            let d = t[i] - t[j];
            g[0] += w * kf * d * d * inv_l2;
            g[1] += w * 2.0 * kf;
        }
        g[2] += (alpha[i] * alpha[i] - kinv[i * n + i]) * 2.0 * noise_var;
    }
    for v in &mut g {
        *v *= 0.5;
    }
    Ok((lml, g))
}

#[derive(Debug, Clone)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Extra starting point tried before the data-driven guesses.
    pub initial: Option<Hyperparameters>,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 100,
            seed: 0,
            initial: None,
        }
    }
}

/// A fitted GP; immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModel {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    offset: f64,
    hyper: Hyperparameters,
    alpha: Vec<f64>,
    log_likelihood: f64,
    converged: bool,
}

impl GpModel {
    /// Conditions the GP on `(t, y)` with fixed hyperparameters.
    pub fn with_hyperparameters(t: &[f64], y: &[f64], hyper: Hyperparameters) -> Result<Self> {
        check_training(t, y, 1)?;
        hyper.validate()?;
        let offset = y.iter().sum::<f64>() / y.len() as f64;
        let centered: Vec<f64> = y.iter().map(|v| v - offset).collect();
        let k = kernel_matrix(t, &hyper);
        let (chol, _) = factor(&k, t.len(), hyper.noise_std * hyper.noise_std)?;
        let alpha = chol.solve(&centered);
        let fit: f64 = centered.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let lml = -0.5 * fit
            - 0.5 * chol.log_det()
            - 0.5 * t.len() as f64 * LN_2PI;
        Ok(Self {
            inputs: t.to_vec(),
            targets: y.to_vec(),
            offset,
            hyper,
            alpha,
            log_likelihood: lml,
            converged: true,
        })
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        self.hyper
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// False when no restart reached the convergence tolerance.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn predict_one(&self, tq: f64) -> f64 {
        let sf2 = self.hyper.signal_std * self.hyper.signal_std;
        let scale = -0.5 / (self.hyper.lengthscale * self.hyper.lengthscale);
        let s: f64 = self
            .inputs
            .iter()
            .zip(&self.alpha)
            .map(|(ti, ai)| {
                let d = tq - ti;
                ai * exp_neg(scale * d * d)
            })
            .sum();
        self.offset + sf2 * s
    }

    /// Posterior mean and its derivative at `tq`.
    pub fn predict_with_slope(&self, tq: f64) -> (f64, f64) {
        let sf2 = self.hyper.signal_std * self.hyper.signal_std;
        let scale = -0.5 / (self.hyper.lengthscale * self.hyper.lengthscale);
        let mut s = 0.0;
        let mut ds = 0.0;
        for (ti, ai) in self.inputs.iter().zip(&self.alpha) {
            let d = tq - ti;
            let w = ai * exp_neg(scale * d * d);
            s += w;
            ds += w * d;
        }
        (self.offset + sf2 * s, 2.0 * scale * sf2 * ds)
    }

    /// Posterior mean `k(tq, t) (K + σ_n² I)⁻¹ y`, plus the centering offset.
    pub fn predict_mean(&self, tq: &[f64]) -> Vec<f64> {
        tq.iter().map(|&t| self.predict_one(t)).collect()
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

fn median_abs_diff(t: &[f64]) -> f64 {
    let mut d = Vec::with_capacity(t.len() * (t.len() - 1) / 2);
    for i in 0..t.len() {
        for j in (i + 1)..t.len() {
            d.push((t[i] - t[j]).abs());
        }
    }
    let mid = d.len() / 2;
    *d.select_nth_unstable_by(mid, f64::total_cmp).1
}

struct Bounds {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Bounds {
    fn clamp(&self, p: &mut [f64; 3]) {
        for i in 0..3 {
            p[i] = p[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// Fits hyperparameters by maximising the marginal likelihood.
pub fn fit_gp(t: &[f64], y: &[f64]) -> Result<GpModel> {
    fit_gp_with(t, y, &GpFitOptions::default())
}

pub fn fit_gp_with(t: &[f64], y: &[f64], opts: &GpFitOptions) -> Result<GpModel> {
    check_training(t, y, 4)?;
    let offset = y.iter().sum::<f64>() / y.len() as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - offset).collect();

    let t_span = t.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - t.iter().copied().fold(f64::INFINITY, f64::min);
    if !(t_span > 0.0) {
        return Err(Error::DegenerateSample("GP inputs are all identical".into()));
    }
    let y_sd = match std_dev(y) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let bounds = Bounds {
        lo: [(1e-3 * t_span).ln(), (1e-4 * y_sd).ln(), (1e-6 * y_sd).ln()],
        hi: [(10.0 * t_span).ln(), (1e2 * y_sd).ln(), (10.0 * y_sd).ln()],
    };
    let guess = Hyperparameters {
        lengthscale: median_abs_diff(t).max(1e-3 * t_span),
        signal_std: y_sd,
        noise_std: 0.1 * y_sd,
    }
    .to_log();

    let mut starts: Vec<[f64; 3]> = Vec::new();
    if let Some(h) = opts.initial {
        starts.push(h.to_log());
    }
    starts.push(guess);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.restarts.max(1) + usize::from(opts.initial.is_some()) {
        let mut p = guess;
        for v in &mut p {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += z;
        }
        starts.push(p);
    }

    let objective = |p: &[f64; 3]| -> Option<(f64, [f64; 3])> {
        let h = Hyperparameters::from_log(p);
        log_marginal_likelihood(t, &centered, &h)
            .ok()
            .filter(|(l, g)| l.is_finite() && g.iter().all(|v| v.is_finite()))
    };

    let mut best: Option<([f64; 3], f64, bool)> = None;
    for mut start in starts {
        bounds.clamp(&mut start);
        if let Some((p, l, conv)) = bfgs_ascent(&objective, start, &bounds, opts.max_iter) {
            if best.as_ref().is_none_or(|b| l > b.1) {
                best = Some((p, l, conv));
            }
        }
    }
    let (p, _, converged) = best.ok_or(Error::NotPositiveDefinite { jitter: JITTER_MAX })?;
    let mut model = GpModel::with_hyperparameters(t, y, Hyperparameters::from_log(&p))?;
    model.converged = converged;
    Ok(model)
}

/// Projected BFGS ascent with Armijo backtracking. Returns the final point,
/// its objective value and whether the gradient tolerance was met.
fn bfgs_ascent<F>(f: &F, start: [f64; 3], bounds: &Bounds, max_iter: usize) -> Option<([f64; 3], f64, bool)>
where
    F: Fn(&[f64; 3]) -> Option<(f64, [f64; 3])>,
{
    let (mut val, mut grad) = f(&start)?;
    let mut x = start;
    // inverse Hessian approximation of the negated objective
    let mut hinv = [[0.0; 3]; 3];
    for (i, row) in hinv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let proj_grad_norm = |x: &[f64; 3], g: &[f64; 3]| -> f64 {
        (0..3)
            .map(|i| {
                let at_lo = x[i] <= bounds.lo[i] + 1e-12 && g[i] < 0.0;
                let at_hi = x[i] >= bounds.hi[i] - 1e-12 && g[i] > 0.0;
                if at_lo || at_hi {
                    0.0
                } else {
                    g[i] * g[i]
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let tol = 1e-5 * (1.0 + val.abs());
    for _ in 0..max_iter {
        if proj_grad_norm(&x, &grad) < tol {
            return Some((x, val, true));
        }
        let mut dir = [0.0; 3];
        for i in 0..3 {
            dir[i] = (0..3).map(|j| hinv[i][j] * grad[j]).sum();
        }
        if (0..3).map(|i| dir[i] * grad[i]).sum::<f64>() <= 0.0 {
            dir = grad;
            hinv = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        }
        let max_step = dir.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let mut step = if max_step > 2.0 { 2.0 / max_step } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand = [0.0; 3];
            for i in 0..3 {
                cand[i] = x[i] + step * dir[i];
            }
            bounds.clamp(&mut cand);
            let moved: f64 = (0..3).map(|i| (cand[i] - x[i]) * grad[i]).sum();
            if let Some((v, g)) = f(&cand) {
                if v >= val + 1e-4 * moved.max(0.0) {
                    accepted = Some((cand, v, g));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, vn, gn)) = accepted else {
            return Some((x, val, proj_grad_norm(&x, &grad) < 1e3 * tol));
        };
        let s: [f64; 3] = std::array::from_fn(|i| xn[i] - x[i]);
        // gradient of the negated objective changes by -(gn - grad)
        let yk: [f64; 3] = std::array::from_fn(|i| grad[i] - gn[i]);
        let sy: f64 = (0..3).map(|i| s[i] * yk[i]).sum();
        let improvement = vn - val;
        x = xn;
        val = vn;
        grad = gn;
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| hinv[i][j] * yk[j]).sum());
            let yhy: f64 = (0..3).map(|i| yk[i] * hy[i]).sum();
            for i in 0..3 {
                for j in 0..3 {
                    hinv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        if improvement.abs() < 1e-12 * (1.0 + val.abs()) && s.iter().all(|v| v.abs() < 1e-10) {
            return Some((x, val, true));
        }
    }
    let conv = proj_grad_norm(&x, &grad) < tol;
    Some((x, val, conv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(l: f64, f: f64, n: f64) -> Hyperparameters {
        Hyperparameters {
            lengthscale: l,
            signal_std: f,
            noise_std: n,
        }
    }

    #[test]
    fn zero_targets_give_log_det_only() {
        let h = hp(0.7, 1.3, 0.2);
        let (l, _) = log_marginal_likelihood(&[0.0, 1.0], &[0.0, 0.0], &h).unwrap();
        let a = 1.3f64.powi(2) + 0.04;
        let b = 1.3f64.powi(2) * (-0.5f64 / 0.49).exp();
        let expected = -0.5 * (a * a - b * b).ln() - (2.0 * std::f64::consts::PI).ln();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn vanishing_signal_recovers_iid_gaussian_density() {
        let y = [0.3, -1.2, 0.8, 0.1, -0.4];
        let t = [0.0, 0.2, 0.4, 0.6, 0.8];
        let (l, _) = log_marginal_likelihood(&t, &y, &hp(0.3, 1e-8, 1.0)).unwrap();
        let iid: f64 = y.iter().map(|v| -0.5 * v * v - 0.5 * LN_2PI).sum();
        assert!((l - iid).abs() < 1e-10);
    }

    #[test]
    fn constant_targets_predict_constant() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let y = vec![2.5; 20];
        let m = fit_gp(&t, &y).unwrap();
        for q in [0.0, 0.13, 0.5, 0.77, 1.0] {
            assert!((m.predict_one(q) - 2.5).abs() < 1e-3 * 3.5);
        }
    }

    #[test]
    fn far_queries_revert_to_prior_mean() {
        let t = [0.0, 0.1, 0.2, 0.3, 0.4];
        let y = [1.0, 2.0, 0.5, -1.0, 3.0];
        let m = GpModel::with_hyperparameters(&t, &y, hp(0.1, 1.0, 0.1)).unwrap();
        let mean = y.iter().sum::<f64>() / 5.0;
        assert!((m.predict_one(100.0) - mean).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_gp(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(log_marginal_likelihood(&[0.0, 1.0], &[1.0], &hp(1.0, 1.0, 1.0)).is_err());
        assert!(log_marginal_likelihood(&[0.0, 1.0], &[1.0, 2.0], &hp(-1.0, 1.0, 1.0)).is_err());
    }
}
