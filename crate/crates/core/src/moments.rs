//! Noise-moment recovery experiments.
//!
//! For independent `Z`, `W` the `n`th moments of `Z + c·W` at `n + 1`
//! distinct `c` determine `E(Zⁿ)` and `E(Wⁿ)` through a scaled Vandermonde
//! system. Applied to an invertible-curve model `X = T + N_X`,
//! `Y = v(T) + N_Y`, the centred conditional moments of X given `Y = y`
//! behave like moments of `N_X + β_y N_Y` with `β_y = -w'(y)`, `w = v⁻¹`,
//! up to an error that vanishes when the model is stretched by a factor ℓ.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Systems with a larger 2-norm condition number are flagged.
pub const CONDITION_WARNING: f64 = 1e12;
pub const MIN_LOCAL_POINTS: usize = 30;
const MIN_BETA_SPREAD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProblem {
    pub order: usize,
    pub c_values: Vec<f64>,
    /// `E((Z + c_j W)ⁿ)` for each `c_j`.
    pub observed: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `M_jk = c_j^k · C(n, k)`.
pub fn moment_matrix(order: usize, c_values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(c_values.len(), order + 1, |j, k| c_values[j].powi(k as i32) * binomial(order, k))
}

fn check_distinct(c: &[f64]) -> Result<()> {
    for i in 0..c.len() {
        for j in (i + 1)..c.len() {
            if c[i] == c[j] {
                return Err(Error::SingularSystem(format!("c values {i} and {j} coincide ({})", c[i])));
            }
        }
    }
    Ok(())
}

/// Solution of one order: `q_k = E(Z^{n-k}) E(W^k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSolution {
    pub order: usize,
    pub q: Vec<f64>,
    pub condition: f64,
}

impl OrderSolution {
    pub fn z_moment(&self) -> f64 {
        self.q[0]
    }

    pub fn w_moment(&self) -> f64 {
        self.q[self.order]
    }

    pub fn ill_conditioned(&self) -> bool {
        !(self.condition <= CONDITION_WARNING)
    }
}

pub fn solve_order(order: usize, c_values: &[f64], observed: &[f64]) -> Result<OrderSolution> {
    if order == 0 {
        return Err(Error::InvalidParameter("moment order must be positive".into()));
    }
    if c_values.len() != order + 1 || observed.len() != order + 1 {
        return Err(Error::InvalidParameter(format!(
            "order {order} needs {} c values and observed moments, got {} and {}",
            order + 1,
            c_values.len(),
            observed.len()
        )));
    }
    check_distinct(c_values)?;
    let m = moment_matrix(order, c_values);
    let sv = m.clone().singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let q = m
        .lu()
        .solve(&DVector::from_column_slice(observed))
        .ok_or_else(|| Error::SingularSystem(format!("moment matrix of order {order} is singular")))?;
    Ok(OrderSolution {
        order,
        q: q.as_slice().to_vec(),
        condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// Orders covered, ascending; entry `i` of the vectors below belongs to
    /// `orders[i]`.
    pub orders: Vec<usize>,
    pub moments_x: Vec<f64>,
    pub moments_y: Vec<f64>,
    pub conditions: Vec<f64>,
    pub ill_conditioned: bool,
    pub errors_x: Option<Vec<f64>>,
    pub errors_y: Option<Vec<f64>>,
}

impl MomentEstimate {
    fn from_solutions(mut sols: Vec<OrderSolution>) -> Self {
        sols.sort_by_key(|s| s.order);
        Self {
            orders: sols.iter().map(|s| s.order).collect(),
            moments_x: sols.iter().map(|s| s.z_moment()).collect(),
            moments_y: sols.iter().map(|s| s.w_moment()).collect(),
            conditions: sols.iter().map(|s| s.condition).collect(),
            ill_conditioned: sols.iter().any(|s| s.ill_conditioned()),
            errors_x: None,
            errors_y: None,
        }
    }

    pub fn moment_x(&self, order: usize) -> Option<f64> {
        self.orders.iter().position(|&o| o == order).map(|i| self.moments_x[i])
    }

    pub fn moment_y(&self, order: usize) -> Option<f64> {
        self.orders.iter().position(|&o| o == order).map(|i| self.moments_y[i])
    }

    /// Records absolute errors against known moments `E(Zᵐ)`, `E(Wᵐ)`.
    pub fn with_truth(mut self, truth_x: impl Fn(usize) -> f64, truth_y: impl Fn(usize) -> f64) -> Self {
        self.errors_x = Some(self.orders.iter().zip(&self.moments_x).map(|(&o, v)| (v - truth_x(o)).abs()).collect());
        self.errors_y = Some(self.orders.iter().zip(&self.moments_y).map(|(&o, v)| (v - truth_y(o)).abs()).collect());
        self
    }
}

/// Solves each order separately; lower moments come from the lower-order
/// problems.
pub fn reconstruct_moments(problems: &[MomentProblem]) -> Result<MomentEstimate> {
    if problems.is_empty() {
        return Err(Error::InvalidParameter("no moment problems given".into()));
    }
    let sols = problems
        .iter()
        .map(|p| solve_order(p.order, &p.c_values, &p.observed))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentEstimate::from_solutions(sols))
}

fn gaussian_weights<'a>(y: &'a [f64], y0: f64, h: f64) -> Result<impl Iterator<Item = (usize, f64)> + 'a> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
    }
    let local = y.iter().filter(|v| (*v - y0).abs() <= h).count();
    if local < MIN_LOCAL_POINTS {
        return Err(Error::InsufficientLocalData {
            found: local,
            needed: MIN_LOCAL_POINTS,
        });
    }
    let cut = 8.0 * h;
    Ok(y.iter().enumerate().filter_map(move |(k, v)| {
        let z = (v - y0) / h;
        ((v - y0).abs() <= cut).then(|| (k, (-0.5 * z * z).exp()))
    }))
}

/// Nadaraya–Watson estimate of `E(Xᵐ | Y = y0)` with a Gaussian kernel.
pub fn conditional_moment(x: &[f64], y: &[f64], y0: f64, m: u32, h: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (k, w) in gaussian_weights(y, y0, h)? {
        num += w * x[k].powi(m as i32);
        den += w;
    }
    Ok(num / den)
}

/// Rule-of-thumb bandwidth `1.06 · sd(y) · n^(-1/5)`.
pub fn default_bandwidth(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    1.06 * sd * n.powf(-0.2)
}

/// `-w'(y)` by central differences with step `1e-3 · range(y)`.
pub fn beta_values(w_hat: impl Fn(f64) -> f64, y: &[f64], y_points: &[f64]) -> Vec<f64> {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let step = 1e-3 * (hi - lo);
    y_points
        .iter()
        .map(|&y0| -(w_hat(y0 + step) - w_hat(y0 - step)) / (2.0 * step))
        .collect()
}

/// Centred conditional moment `E((X - E(X|y))ᵐ | Y = y0)` where X is first
/// detrended pointwise by `w_hat(Y)`, so the spread of `w(Y)` inside the
/// kernel window does not enter the estimate.
fn centred_local_moment(x: &[f64], y: &[f64], w_hat: &impl Fn(f64) -> f64, y0: f64, m: u32, h: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = gaussian_weights(y, y0, h)?
        .map(|(k, w)| (x[k] - w_hat(y[k]), w))
        .collect();
    let den: f64 = pts.iter().map(|p| p.1).sum();
    let mean = pts.iter().map(|(z, w)| z * w).sum::<f64>() / den;
    Ok(pts.iter().map(|(z, w)| w * (z - mean).powi(m as i32)).sum::<f64>() / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMomentOptions {
    /// Kernel bandwidth; the rule of thumb when absent.
    pub bandwidth: Option<f64>,
}

impl Default for NoiseMomentOptions {
    fn default() -> Self {
        Self { bandwidth: None }
    }
}

/// Estimates `E(N_Xᵐ)`, `E(N_Yᵐ)` for `m = 1..=n` from the sample, using
/// the first `m + 1` of `y_points` for order `m`. Negative estimates of
/// even moments are clamped to zero.
pub fn estimate_noise_moments(
    x: &[f64],
    y: &[f64],
    w_hat: impl Fn(f64) -> f64,
    y_points: &[f64],
    n: usize,
    opts: &NoiseMomentOptions,
) -> Result<MomentEstimate> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if n == 0 || y_points.len() < n + 1 {
        return Err(Error::InvalidParameter(format!(
            "order {n} needs {} y points, got {}",
            n + 1,
            y_points.len()
        )));
    }
    let h = opts.bandwidth.unwrap_or_else(|| default_bandwidth(y));
    let beta = beta_values(&w_hat, y, &y_points[..=n]);
    let mut sols = Vec::with_capacity(n);
    for m in 1..=n {
        let b = &beta[..=m];
        let spread = b.iter().copied().fold(f64::NEG_INFINITY, f64::max) - b.iter().copied().fold(f64::INFINITY, f64::min);
        let mut min_gap = f64::INFINITY;
        for i in 0..b.len() {
            for j in (i + 1)..b.len() {
                min_gap = min_gap.min((b[i] - b[j]).abs());
            }
        }
        if !(spread >= MIN_BETA_SPREAD) || min_gap == 0.0 {
            return Err(Error::IllPosed(format!(
                "moment system ill-posed: slopes at the y points spread by only {spread:.3e}"
            )));
        }
        let observed = y_points[..=m]
            .iter()
            .map(|&y0| centred_local_moment(x, y, &w_hat, y0, m as u32, h))
            .collect::<Result<Vec<_>>>()?;
        let mut sol = solve_order(m, b, &observed)?;
        if m % 2 == 0 {
            let last = sol.order;
            sol.q[0] = sol.q[0].max(0.0);
            sol.q[last] = sol.q[last].max(0.0);
        }
        sols.push(sol);
    }
    Ok(MomentEstimate::from_solutions(sols))
}

/// Zero-mean noise laws and latent densities used by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Density {
    Normal { sd: f64 },
    /// `G - shape·scale` with `G ~ Gamma(shape, scale)`.
    CenteredGamma { shape: f64, scale: f64 },
    Uniform { half_width: f64 },
}

impl Density {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Density::Normal { sd } => sd > 0.0 && sd.is_finite(),
            Density::CenteredGamma { shape, scale } => shape > 0.0 && scale > 0.0 && (shape * scale).is_finite(),
            Density::Uniform { half_width } => half_width > 0.0 && half_width.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid density {self:?}")))
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Density::Normal { sd } => crate::data::normal_pdf(x, 0.0, sd),
            Density::CenteredGamma { shape, scale } => {
                let g = x + shape * scale;
                if g <= 0.0 {
                    0.0
                } else {
                    let ln = (shape - 1.0) * g.ln() - g / scale - statrs::function::gamma::ln_gamma(shape) - shape * scale.ln();
                    ln.exp()
                }
            }
            Density::Uniform { half_width } => {
                if x.abs() <= half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Density::Normal { sd } => sd,
            Density::CenteredGamma { shape, scale } => shape.sqrt() * scale,
            Density::Uniform { half_width } => half_width / 3f64.sqrt(),
        }
    }

    /// `E(Nᵏ)`.
    pub fn moment(&self, k: usize) -> f64 {
        match *self {
            Density::Normal { sd } => {
                if k % 2 == 1 {
                    0.0
                } else {
                    (1..k).step_by(2).map(|i| i as f64).product::<f64>() * sd.powi(k as i32)
                }
            }
            Density::CenteredGamma { shape, scale } => {
                // Raw moments of G: scale^j Γ(shape + j) / Γ(shape).
                let mean = shape * scale;
                let mut raw = 1.0;
                let mut total = 0.0;
                for j in 0..=k {
                    if j > 0 {
                        raw *= scale * (shape + (j - 1) as f64);
                    }
                    total += binomial(k, j) * raw * (-mean).powi((k - j) as i32);
                }
                total
            }
            Density::Uniform { half_width } => {
                if k % 2 == 1 {
                    0.0
                } else {
                    half_width.powi(k as i32) / (k + 1) as f64
                }
            }
        }
    }

    /// An interval holding all but a negligible part of the mass: eight
    /// standard deviations, cut at the support.
    pub fn window(&self) -> (f64, f64) {
        let r = 8.0 * self.sd();
        match *self {
            Density::Normal { .. } => (-r, r),
            Density::CenteredGamma { shape, scale } => (-shape * scale, r.max(8.0 * shape * scale)),
            Density::Uniform { half_width } => (-half_width, half_width),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
        match *self {
            Density::Normal { sd } => {
                let d = Normal::new(0.0, sd).expect("validated sd");
                (0..count).map(|_| d.sample(rng)).collect()
            }
            Density::CenteredGamma { shape, scale } => {
                let d = Gamma::new(shape, scale).expect("validated gamma");
                (0..count).map(|_| d.sample(rng) - shape * scale).collect()
            }
            Density::Uniform { half_width } => {
                let d = Uniform::new_inclusive(-half_width, half_width).expect("validated width");
                (0..count).map(|_| d.sample(rng)).collect()
            }
        }
    }
}

/// Invertible curves `v` with known inverse `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveFamily {
    Linear { slope: f64 },
    Sinh,
    /// `v(t) = t + a t³` with `a > 0`.
    Cubic { a: f64 },
}

impl CurveFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CurveFamily::Linear { slope } if slope == 0.0 || !slope.is_finite() => {
                Err(Error::InvalidParameter("linear curve needs a non-zero slope".into()))
            }
            CurveFamily::Cubic { a } if !(a > 0.0 && a.is_finite()) => {
                Err(Error::InvalidParameter("cubic curve needs a > 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn v(&self, t: f64) -> f64 {
        match *self {
            CurveFamily::Linear { slope } => slope * t,
            CurveFamily::Sinh => t.sinh(),
            CurveFamily::Cubic { a } => t + a * t * t * t,
        }
    }

    pub fn dv(&self, t: f64) -> f64 {
        match *self {
            CurveFamily::Linear { slope } => slope,
            CurveFamily::Sinh => t.cosh(),
            CurveFamily::Cubic { a } => 1.0 + 3.0 * a * t * t,
        }
    }

    pub fn w(&self, y: f64) -> f64 {
        match *self {
            CurveFamily::Linear { slope } => y / slope,
            CurveFamily::Sinh => y.asinh(),
            CurveFamily::Cubic { a } => {
                // Real root of a t³ + t - y = 0 (Cardano, one real root).
                let p = 1.0 / a;
                let q = -y / a;
                let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
                (-q / 2.0 + disc).cbrt() + (-q / 2.0 - disc).cbrt()
            }
        }
    }
}

fn default_ells() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

fn default_samples() -> usize {
    100_000
}

fn default_seeds() -> usize {
    20
}

/// A stretched model `(ℓT + N_X, ℓ v(T) + N_Y)` over a list of ℓ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub curve: CurveFamily,
    pub noise_x: Density,
    pub noise_y: Density,
    pub latent: Density,
    #[serde(default = "default_ells")]
    pub ell_values: Vec<f64>,
    /// Base points; the conditional moments are taken at `ℓ·y_j`.
    pub y_points: Vec<f64>,
    pub order: usize,
    #[serde(default = "default_samples")]
    pub samples_per_ell: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

impl ScalingStudy {
    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        self.noise_x.validate()?;
        self.noise_y.validate()?;
        self.latent.validate()?;
        if self.ell_values.is_empty() || self.ell_values.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidParameter("ell values must be positive".into()));
        }
        if self.ell_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("ell values must increase".into()));
        }
        if self.order == 0 || self.y_points.len() < self.order + 1 {
            return Err(Error::InvalidParameter(format!(
                "order {} needs {} y points",
                self.order,
                self.order + 1
            )));
        }
        if self.samples_per_ell < MIN_LOCAL_POINTS || self.seeds == 0 {
            return Err(Error::InvalidParameter("too few samples or seeds".into()));
        }
        Ok(())
    }

    /// Draws `(x, y)` at stretch `ell` from the seeded base draws of
    /// `(T, N_X, N_Y)`; the same seed gives the same base draws for every ℓ.
    pub fn sample(&self, ell: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.samples_per_ell;
        let t = self.latent.sample(&mut rng, n);
        let nx = self.noise_x.sample(&mut rng, n);
        let ny = self.noise_y.sample(&mut rng, n);
        let x = t.iter().zip(&nx).map(|(t, e)| ell * t + e).collect();
        let y = t.iter().zip(&ny).map(|(t, e)| ell * self.curve.v(*t) + e).collect();
        (x, y)
    }

    /// Inverse of the stretched curve: `w̃(y) = ℓ w(y / ℓ)`.
    pub fn w_scaled(&self, ell: f64) -> impl Fn(f64) -> f64 + '_ {
        move |y| ell * self.curve.w(y / ell)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub ell: f64,
    pub order: usize,
    pub seed: u64,
    pub estimate_x: f64,
    pub estimate_y: f64,
    pub truth_x: f64,
    pub truth_y: f64,
    pub error_x: f64,
    pub error_y: f64,
}

impl ScalingRow {
    pub fn error(&self) -> f64 {
        self.error_x + self.error_y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    /// Median of `error_x + error_y` over seeds for one cell.
    pub fn median_error(&self, ell: f64, order: usize) -> Option<f64> {
        let mut e: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.ell == ell && r.order == order)
            .map(ScalingRow::error)
            .collect();
        if e.is_empty() {
            return None;
        }
        e.sort_by(f64::total_cmp);
        let m = e.len();
        Some(if m % 2 == 1 { e[m / 2] } else { 0.5 * (e[m / 2 - 1] + e[m / 2]) })
    }

    pub fn ells(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.ell) {
                v.push(r.ell);
            }
        }
        v
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let cols: [(&str, Box<dyn Fn(&ScalingRow) -> f64>); 9] = [
            ("ell", Box::new(|r| r.ell)),
            ("order", Box::new(|r| r.order as f64)),
            ("seed", Box::new(|r| r.seed as f64)),
            ("estimate_x", Box::new(|r| r.estimate_x)),
            ("estimate_y", Box::new(|r| r.estimate_y)),
            ("truth_x", Box::new(|r| r.truth_x)),
            ("truth_y", Box::new(|r| r.truth_y)),
            ("error_x", Box::new(|r| r.error_x)),
            ("error_y", Box::new(|r| r.error_y)),
        ];
        let header: Vec<&str> = cols.iter().map(|c| c.0).collect();
        let columns: Vec<Vec<f64>> = cols.iter().map(|(_, f)| self.rows.iter().map(f).collect()).collect();
        let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
        crate::data::write_columns(path, &header, &refs)
    }
}

/// Runs the noise-moment estimator for every ℓ and seed and records the
/// absolute errors against the known moments of both noise laws.
pub fn scaling_study(study: &ScalingStudy) -> Result<ScalingTable> {
    study.validate()?;
    let mut rows = Vec::new();
    for &ell in &study.ell_values {
        for s in 0..study.seeds as u64 {
            let seed = study.seed.wrapping_add(s);
            let (x, y) = study.sample(ell, seed);
            let pts: Vec<f64> = study.y_points.iter().map(|p| ell * p).collect();
            let est = estimate_noise_moments(
                &x,
                &y,
                study.w_scaled(ell),
                &pts,
                study.order,
                &NoiseMomentOptions {
                    bandwidth: study.bandwidth.map(|b| b * ell),
                },
            )?;
            for (i, &order) in est.orders.iter().enumerate() {
                let (tx, ty) = (study.noise_x.moment(order), study.noise_y.moment(order));
                rows.push(ScalingRow {
                    ell,
                    order,
                    seed,
                    estimate_x: est.moments_x[i],
                    estimate_y: est.moments_y[i],
                    truth_x: tx,
                    truth_y: ty,
                    error_x: (est.moments_x[i] - tx).abs(),
                    error_y: (est.moments_y[i] - ty).abs(),
                });
            }
        }
    }
    Ok(ScalingTable { rows })
}

/// `ε_n(y) = E_y((T̃ - w̃(y))ⁿ) - E((β_y N_Y)ⁿ)` for the model stretched by
/// `ell`, evaluated at `ell · y`, by adaptive quadrature.
pub fn epsilon_probe(study: &ScalingStudy, n: usize, y: f64, ell: f64) -> Result<f64> {
    study.validate()?;
    let yy = ell * y;
    let curve = study.curve;
    let w = |v: f64| ell * curve.w(v / ell);
    let s = study.latent;
    let r = study.noise_y;
    let wy = w(yy);
    let beta = -1.0 / curve.dv(curve.w(y));
    // Latent values where r(y - ṽ(t)) is non-negligible, cut to the window
    // of the stretched latent density.
    let (rlo, rhi) = r.window();
    let (a, b) = (w(yy - rhi), w(yy - rlo));
    let (slo, shi) = s.window();
    let lo = a.min(b).max(ell * slo);
    let hi = a.max(b).min(ell * shi);
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("no latent mass near y = {y}")));
    }
    let joint = |t: f64| r.pdf(yy - ell * curve.v(t / ell)) * s.pdf(t / ell) / ell;
    let den = quadrature::integrate(joint, lo, hi, quadrature::TOLERANCE)?;
    if !(den > 0.0) {
        return Err(Error::InvalidParameter(format!("zero density at y = {y}")));
    }
    let num = quadrature::integrate(|t| (t - wy).powi(n as i32) * joint(t), lo, hi, quadrature::TOLERANCE)?;
    Ok(num / den - beta.powi(n as i32) * r.moment(n))
}

pub mod quadrature {
    //! Globally adaptive Gauss–Kronrod (7/15) integration.

    use crate::error::{Error, Result};

    pub const TOLERANCE: f64 = 1e-10;
    const MAX_INTERVALS: usize = 20_000;

    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];

    /// Kronrod estimate and `|Kronrod - Gauss|` on `[a, b]`.
    pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut k = WGK[7] * fc;
        let mut g = WG[3] * fc;
        for i in 0..7 {
            let x = h * XGK[i];
            let s = f(c - x) + f(c + x);
            k += WGK[i] * s;
            if i % 2 == 1 {
                g += WG[i / 2] * s;
            }
        }
        (k * h, ((k - g) * h).abs())
    }

    /// Integrates `f` over `[a, b]` to absolute tolerance `tol`, splitting
    /// the interval with the largest error estimate until the summed
    /// estimate meets the tolerance.
    pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
        let (v, e) = gk15(&f, a, b);
        let mut parts = vec![(a, b, v, e)];
        loop {
            let total_err: f64 = parts.iter().map(|p| p.3).sum();
            if total_err <= tol {
                return Ok(parts.iter().map(|p| p.2).sum());
            }
            if parts.len() >= MAX_INTERVALS {
                return Err(Error::Quadrature {
                    achieved: total_err,
                    tolerance: tol,
                });
            }
            let worst = (0..parts.len())
                .max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3))
                .unwrap_or(0);
            let (lo, hi, _, _) = parts.swap_remove(worst);
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                return Err(Error::Quadrature {
                    achieved: total_err,
                    tolerance: tol,
                });
            }
            let (v1, e1) = gk15(&f, lo, mid);
            let (v2, e2) = gk15(&f, mid, hi);
            parts.push((lo, mid, v1, e1));
            parts.push((mid, hi, v2, e2));
        }
    }
}
