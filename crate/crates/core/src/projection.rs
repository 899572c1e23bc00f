//! Dependence-minimising projection of observations onto a fixed curve.

use crate::curve::{Curve, LatentAssignment};
use crate::data::PairedSample;
use crate::dependence::{hsic_from_centered, median_bandwidth, report_from_grams, DependenceReport, GramMatrix, PValueMethod};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Latent coordinates are clamped to this box (in the unit-rescaled
/// parameterisation) whenever the objective is evaluated.
pub const LATENT_CLAMP: (f64, f64) = (-0.5, 1.5);
pub const DEFAULT_BUDGET: usize = 5000;

const DIAMETER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    /// True when the evaluation budget ran out before the simplex collapsed.
    pub budget_exhausted: bool,
}

/// Simplex coefficients and the size of the initial simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub budget: usize,
    /// Vertex `i` of the initial simplex moves coordinate `i` by
    /// `max(relative_step·|x0_i|, absolute_step)`.
    pub relative_step: f64,
    pub absolute_step: f64,
    /// Dimension-dependent expansion, contraction and shrink coefficients
    /// (`1 + 2/n`, `0.75 - 1/(2n)`, `1 - 1/n`) instead of `2, 1/2, 1/2`.
    pub adaptive: bool,
    /// The budget is split evenly over this many runs, each restarting
    /// from a fresh simplex around the best point so far.
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            relative_step: 0.05,
            absolute_step: 0.00025,
            adaptive: false,
            restarts: 1,
        }
    }
}

/// Nelder–Mead minimisation with a hard budget on objective evaluations.
/// Non-finite objective values are treated as `+∞`.
pub fn simplex_minimize<F>(f: F, x0: &[f64], budget: usize) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    simplex_minimize_with(
        f,
        x0,
        &SimplexOptions {
            budget,
            ..SimplexOptions::default()
        },
    )
}

pub fn simplex_minimize_with<F>(f: F, x0: &[f64], opts: &SimplexOptions) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let steps: Vec<f64> = x0
        .iter()
        .map(|x| (opts.relative_step * x.abs()).max(opts.absolute_step))
        .collect();
    simplex_minimize_steps(f, x0, &steps, opts)
}

/// Nelder–Mead from the simplex `x0, x0 + steps[i]·e_i`.
pub fn simplex_minimize_steps<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &SimplexOptions) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if steps.len() != x0.len() {
        return Err(Error::LengthMismatch {
            left: x0.len(),
            right: steps.len(),
        });
    }
    let budget = opts.budget;
    let n = x0.len();
    let nf = n as f64;
    const REFLECTION: f64 = 1.0;
    let (expansion, contraction, shrink_by) = if opts.adaptive {
        (1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (2.0, 0.5, 0.5)
    };
    if n == 0 {
        return Err(Error::InvalidParameter("empty starting point".into()));
    }
    if budget < n + 1 {
        return Err(Error::InvalidParameter(format!(
            "budget {budget} is smaller than the {} evaluations of the initial simplex",
            n + 1
        )));
    }
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();
    let mut sum = vec![0.0; n];
    let resum = |simplex: &[Vec<f64>], sum: &mut [f64]| {
        sum.iter_mut().for_each(|s| *s = 0.0);
        for v in simplex {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
    };
    resum(&simplex, &mut sum);

    let mut order: Vec<usize> = (0..=n).collect();
    let mut iteration = 0usize;
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if diameter < DIAMETER_TOL {
            return Ok(SimplexResult {
                x: simplex[best].clone(),
                f: values[best],
                evaluations: evals,
                budget_exhausted: false,
            });
        }
        if evals >= budget {
            break;
        }

        iteration += 1;
        if iteration % 64 == 0 {
            resum(&simplex, &mut sum);
        }
        let centroid: Vec<f64> = sum
            .iter()
            .zip(&simplex[worst])
            .map(|(s, w)| (s - w) / n as f64)
            .collect();

        for j in 0..n {
            trial[j] = centroid[j] + REFLECTION * (centroid[j] - simplex[worst][j]);
        }
        let fr = eval(&trial, &mut evals);

        let mut replacement: Option<(bool, f64)> = None; // (use trial2?, value)
        let mut shrink = false;
        if fr < values[best] {
            if evals < budget {
                for j in 0..n {
                    trial2[j] = centroid[j] + expansion * (centroid[j] - simplex[worst][j]);
                }
                let fe = eval(&trial2, &mut evals);
                replacement = Some(if fe < fr { (true, fe) } else { (false, fr) });
            } else {
                replacement = Some((false, fr));
            }
        } else if fr < values[second] {
            replacement = Some((false, fr));
        } else if evals < budget {
            if fr < values[worst] {
                for j in 0..n {
                    trial2[j] = centroid[j] + contraction * (trial[j] - centroid[j]);
                }
                let fc = eval(&trial2, &mut evals);
                if fc <= fr {
                    replacement = Some((true, fc));
                } else {
                    shrink = true;
                }
            } else {
                for j in 0..n {
                    trial2[j] = centroid[j] + contraction * (simplex[worst][j] - centroid[j]);
                }
                let fcc = eval(&trial2, &mut evals);
                if fcc < values[worst] {
                    replacement = Some((true, fcc));
                } else {
                    shrink = true;
                }
            }
        } else if fr < values[worst] {
            replacement = Some((false, fr));
        }

        if let Some((second_trial, value)) = replacement {
            let src = if second_trial { &trial2 } else { &trial };
            for j in 0..n {
                sum[j] += src[j] - simplex[worst][j];
            }
            simplex[worst].copy_from_slice(src);
            values[worst] = value;
        } else if shrink {
            let anchor = simplex[best].clone();
            for &i in order.iter().skip(1) {
                if evals >= budget {
                    break;
                }
                for j in 0..n {
                    simplex[i][j] = anchor[j] + shrink_by * (simplex[i][j] - anchor[j]);
                }
                values[i] = eval(&simplex[i], &mut evals);
            }
            resum(&simplex, &mut sum);
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Ok(SimplexResult {
        x: simplex[best].clone(),
        f: values[best],
        evaluations: evals,
        budget_exhausted: true,
    })
}

pub fn clamp_latent(t: &[f64]) -> Vec<f64> {
    t.iter().map(|v| v.clamp(LATENT_CLAMP.0, LATENT_CLAMP.1)).collect()
}

/// Residuals `(x - u(t), y - v(t))`.
pub fn residuals<C: Curve + ?Sized>(curve: &C, data: &PairedSample, t: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (u, v) = curve.points(t);
    let nx = data.x.iter().zip(&u).map(|(a, b)| a - b).collect();
    let ny = data.y.iter().zip(&v).map(|(a, b)| a - b).collect();
    (nx, ny)
}

fn check_lengths(t: &[f64], data: &PairedSample) -> Result<()> {
    if t.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: t.len(),
            right: data.len(),
        });
    }
    Ok(())
}

/// `HSIC(N̂x, N̂y) + HSIC(N̂x, T) + HSIC(N̂y, T)` with the latent values
/// clamped to [`LATENT_CLAMP`].
pub fn dependence_objective<C: Curve + ?Sized>(t: &LatentAssignment, curve: &C, data: &PairedSample) -> Result<f64> {
    check_lengths(t.values(), data)?;
    objective_raw(t.values(), curve, data)
}

fn objective_raw<C: Curve + ?Sized>(t: &[f64], curve: &C, data: &PairedSample) -> Result<f64> {
    objective_with(t, curve, data, None)
}

/// Bandwidths for `(N̂x, N̂y, T)`; `None` recomputes the median heuristic.
fn objective_with<C: Curve + ?Sized>(
    t: &[f64],
    curve: &C,
    data: &PairedSample,
    bandwidths: Option<[f64; 3]>,
) -> Result<f64> {
    let t = clamp_latent(t);
    let (nx, ny) = residuals(curve, data, &t);
    let (kx, ky, kt) = match bandwidths {
        Some(b) => (GramMatrix::new(&nx, b[0]), GramMatrix::new(&ny, b[1]), GramMatrix::new(&t, b[2])),
        None => (
            GramMatrix::from_samples(&nx)?,
            GramMatrix::from_samples(&ny)?,
            GramMatrix::from_samples(&t)?,
        ),
    };
    let cx = kx.centered();
    let cy = ky.centered();
    Ok(hsic_from_centered(&cx, &ky) + hsic_from_centered(&cx, &kt) + hsic_from_centered(&cy, &kt))
}

/// The three pairwise reports, ordered `(N̂x, N̂y)`, `(N̂x, T)`, `(N̂y, T)`.
pub fn residual_reports<C: Curve + ?Sized>(
    t: &LatentAssignment,
    curve: &C,
    data: &PairedSample,
    method: PValueMethod,
) -> Result<[DependenceReport; 3]> {
    check_lengths(t.values(), data)?;
    let (nx, ny) = residuals(curve, data, t.values());
    let kx = GramMatrix::from_samples(&nx)?;
    let ky = GramMatrix::from_samples(&ny)?;
    let kt = GramMatrix::from_samples(t.values())?;
    Ok([
        report_from_grams(&kx, &ky, method),
        report_from_grams(&kx, &kt, method),
        report_from_grams(&ky, &kt, method),
    ])
}

#[derive(Debug, Clone)]
pub struct ProjectionOptions {
    pub simplex: SimplexOptions,
    pub steps: StepRule,
    pub method: PValueMethod,
    /// Keep the kernel bandwidths of the starting point fixed during the
    /// search instead of re-deriving them at every evaluation.
    pub freeze_bandwidths: bool,
}

/// How the initial simplex around the starting latent values is sized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// Relative/absolute steps from [`SimplexOptions`].
    Coordinate,
    /// Each coordinate moves its curve point by the median residual
    /// distance: `step_i = median_dist / |s'(t_i)|`, capped at `max_step`.
    CurveSpeed { max_step: f64 },
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            simplex: SimplexOptions::default(),
            steps: StepRule::Coordinate,
            method: PValueMethod::Gamma,
            freeze_bandwidths: false,
        }
    }
}

fn speed_steps<C: Curve + ?Sized>(curve: &C, data: &PairedSample, t: &[f64], max_step: f64, min_step: f64) -> Vec<f64> {
    const H: f64 = 1e-5;
    let mut dist: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(k, &tk)| {
            let p = curve.point(tk);
            (p[0] - data.x[k]).hypot(p[1] - data.y[k])
        })
        .collect();
    dist.sort_by(f64::total_cmp);
    let typical = dist[dist.len() / 2];
    t.iter()
        .map(|&tk| {
            let (a, b) = (curve.point(tk + H), curve.point(tk - H));
            let speed = (a[0] - b[0]).hypot(a[1] - b[1]) / (2.0 * H);
            let step = typical / speed;
            if step.is_finite() {
                step.clamp(min_step, max_step)
            } else {
                max_step
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub latent: LatentAssignment,
    pub reports: [DependenceReport; 3],
    pub objective_initial: f64,
    pub objective_final: f64,
    pub evaluations: usize,
    pub budget_exhausted: bool,
}

/// Moves all latent values jointly to minimise [`dependence_objective`] with
/// the curve held fixed, starting from `t0`.
pub fn optimize_projection<C: Curve + ?Sized>(
    curve: &C,
    data: &PairedSample,
    t0: &LatentAssignment,
    opts: &ProjectionOptions,
) -> Result<ProjectionOutcome> {
    check_lengths(t0.values(), data)?;
    let start = clamp_latent(t0.values());
    let objective_initial = objective_raw(&start, curve, data)?;
    let frozen = if opts.freeze_bandwidths {
        let (nx, ny) = residuals(curve, data, &start);
        Some([median_bandwidth(&nx)?, median_bandwidth(&ny)?, median_bandwidth(&start)?])
    } else {
        None
    };
    let objective = |t: &[f64]| objective_with(t, curve, data, frozen).unwrap_or(f64::INFINITY);
    let runs = opts.simplex.restarts.max(1);
    let mut result = SimplexResult {
        x: start.clone(),
        f: objective_initial,
        evaluations: 0,
        budget_exhausted: false,
    };
    for r in 0..runs {
        let remaining = opts.simplex.budget - result.evaluations;
        let share = remaining / (runs - r);
        if share < start.len() + 2 {
            break;
        }
        let sub = SimplexOptions {
            budget: share,
            ..opts.simplex
        };
        let x0 = clamp_latent(&result.x);
        let run = match opts.steps {
            StepRule::Coordinate => simplex_minimize_with(objective, &x0, &sub)?,
            StepRule::CurveSpeed { max_step } => {
                let steps = speed_steps(curve, data, &x0, max_step, opts.simplex.absolute_step);
                simplex_minimize_steps(objective, &x0, &steps, &sub)?
            }
        };
        let evaluations = result.evaluations + run.evaluations;
        if run.f <= result.f {
            result = SimplexResult { evaluations, ..run };
        } else {
            result.evaluations = evaluations;
            result.budget_exhausted = run.budget_exhausted;
        }
    }
    let candidate = clamp_latent(&result.x);
    let candidate_value = if frozen.is_some() {
        objective_raw(&candidate, curve, data).unwrap_or(f64::INFINITY)
    } else {
        result.f
    };
    let (latent, objective_final) = if candidate_value <= objective_initial {
        (LatentAssignment(candidate), candidate_value)
    } else {
        (LatentAssignment(start), objective_initial)
    };
    let reports = residual_reports(&latent, curve, data, opts.method)?;
    Ok(ProjectionOutcome {
        latent,
        reports,
        objective_initial,
        objective_final,
        evaluations: result.evaluations,
        budget_exhausted: result.budget_exhausted,
    })
}
