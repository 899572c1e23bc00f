//! The ICAN driver: curve initialisation, dependence-minimising projection,
//! independence tests and re-regression, followed by the causal decision.

use serde::{Deserialize, Serialize};

use crate::curve::{principal_curve_fit, CurveModel, CurveOptions, LatentAssignment};
use crate::data::PairedSample;
use crate::dependence::{hsic_pvalue, DependenceReport, PValueMethod};
use crate::error::{Error, Result};
use crate::gp::{fit_gp_with, GpFitOptions, GpModel};
use crate::projection::{
    optimize_projection, residual_reports, residuals, ProjectionOptions, SimplexOptions, StepRule,
    DEFAULT_BUDGET,
};

/// Residual variances below this on both axes mean a deterministic relation.
pub const DETERMINISTIC_VARIANCE: f64 = 1e-10;
const INVERTIBILITY_NODES: usize = 500;
const INVERTIBILITY_MARGIN: f64 = 1e-6;
const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcanConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    pub eval_budget: usize,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub seed: u64,
    pub neighbors: usize,
    pub max_alternations: usize,
    pub steps: StepRule,
}

impl Default for IcanConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            max_iterations: 10,
            eval_budget: DEFAULT_BUDGET,
            ratio_low: 0.2,
            ratio_high: 5.0,
            seed: 0,
            neighbors: crate::curve::DEFAULT_NEIGHBORS,
            max_alternations: crate::curve::DEFAULT_MAX_ALTERNATIONS,
            steps: ProjectionOptions::default().steps,
        }
    }
}

impl IcanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.ratio_low > 0.0 && self.ratio_low < 1.0 && self.ratio_high > 1.0) {
            return bad("ratio thresholds must satisfy 0 < ratio_low < 1 < ratio_high");
        }
        if self.neighbors == 0 {
            return bad("neighbors must be positive");
        }
        Ok(())
    }

    fn gp_options(&self) -> GpFitOptions {
        GpFitOptions {
            seed: self.seed,
            ..GpFitOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    XtoY,
    YtoX,
    Confounder,
    NoCanFit,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Decision::XtoY => "XtoY",
            Decision::YtoX => "YtoX",
            Decision::Confounder => "Confounder",
            Decision::NoCanFit => "NoCanFit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective_initial: f64,
    pub objective_final: f64,
    pub evaluations: usize,
    /// p-values for `(N̂x, N̂y)`, `(N̂x, T)`, `(N̂y, T)`.
    pub p_values: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct IcanResult {
    pub decision: Decision,
    pub t_hat: LatentAssignment,
    pub curve: CurveModel,
    pub var_ratio: f64,
    pub reports: [DependenceReport; 3],
    /// Reports at the ℓ2-optimal initial projection.
    pub initial_reports: [DependenceReport; 3],
    pub iterations_used: usize,
    pub log: Vec<IterationRecord>,
    /// Objective log of the principal-curve initialisation.
    pub l2_log: Vec<f64>,
}

impl IcanResult {
    pub fn p_values(&self) -> [f64; 3] {
        p_values(&self.reports)
    }
}

fn p_values(reports: &[DependenceReport; 3]) -> [f64; 3] {
    [reports[0].p_value(), reports[1].p_value(), reports[2].p_value()]
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

/// True iff the posterior mean is strictly monotone on a 500-node grid over
/// `t_range`, every step exceeding the margin.
pub fn check_invertible(model: &GpModel, t_range: (f64, f64)) -> bool {
    let (lo, hi) = t_range;
    if !(hi > lo) {
        return false;
    }
    let step = (hi - lo) / (INVERTIBILITY_NODES - 1) as f64;
    let values: Vec<f64> = (0..INVERTIBILITY_NODES)
        .map(|i| model.predict_one(lo + step * i as f64))
        .collect();
    let inc = values.windows(2).all(|w| w[1] - w[0] > INVERTIBILITY_MARGIN);
    let dec = values.windows(2).all(|w| w[0] - w[1] > INVERTIBILITY_MARGIN);
    inc || dec
}

/// Decision rule for an accepted CAN fit: a small noise ratio with an
/// invertible `û` means X causes Y, a large one with an invertible `v̂`
/// means Y causes X; anything else is a confounder.
pub fn decide(
    var_ratio: f64,
    curve: &CurveModel,
    t_range: (f64, f64),
    reports: &[DependenceReport; 3],
    config: &IcanConfig,
) -> Decision {
    if p_values(reports).iter().any(|p| !(*p >= config.alpha)) {
        return Decision::NoCanFit;
    }
    if var_ratio < config.ratio_low && check_invertible(&curve.u_model, t_range) {
        Decision::XtoY
    } else if var_ratio > config.ratio_high && check_invertible(&curve.v_model, t_range) {
        Decision::YtoX
    } else {
        Decision::Confounder
    }
}

/// Runs the full algorithm on (already normalised) data.
pub fn run_ican(data: &PairedSample, config: &IcanConfig) -> Result<IcanResult> {
    config.validate()?;
    if data.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: data.len(),
            hint: "",
        });
    }
    let curve_opts = CurveOptions {
        neighbors: config.neighbors,
        max_alternations: config.max_alternations,
        gp: config.gp_options(),
        ..CurveOptions::default()
    };
    let init = principal_curve_fit(data, &curve_opts)?;
    let (nx, ny) = residuals(&init.curve, data, init.latent.values());
    if variance(&nx) < DETERMINISTIC_VARIANCE && variance(&ny) < DETERMINISTIC_VARIANCE {
        return Err(Error::DeterministicRelation(DETERMINISTIC_VARIANCE));
    }
    let method = PValueMethod::Gamma;
    let initial_reports = residual_reports(&init.latent, &init.curve, data, method)?;

    let proj_opts = ProjectionOptions {
        simplex: SimplexOptions {
            budget: config.eval_budget,
            ..SimplexOptions::default()
        },
        method,
        steps: config.steps,
        ..ProjectionOptions::default()
    };
    let mut curve = init.curve;
    let mut t_hat = init.latent;
    let mut log = Vec::new();
    let mut reports = initial_reports.clone();
    for iteration in 1..=config.max_iterations {
        let out = optimize_projection(&curve, data, &t_hat, &proj_opts)?;
        t_hat = out.latent;
        reports = out.reports;
        let ps = p_values(&reports);
        log.push(IterationRecord {
            iteration,
            objective_initial: out.objective_initial,
            objective_final: out.objective_final,
            evaluations: out.evaluations,
            p_values: ps,
        });
        if ps.iter().all(|p| *p >= config.alpha) {
            let (nx, ny) = residuals(&curve, data, t_hat.values());
            let var_ratio = variance(&nx) / variance(&ny);
            let decision = decide(var_ratio, &curve, t_hat.min_max(), &reports, config);
            return Ok(IcanResult {
                decision,
                t_hat,
                curve,
                var_ratio,
                reports,
                initial_reports,
                iterations_used: iteration,
                log,
                l2_log: init.log,
            });
        }
        if iteration < config.max_iterations {
            curve = CurveModel::fit(&t_hat, data, &config.gp_options())?;
            reports = residual_reports(&t_hat, &curve, data, method)?;
        }
    }
    let (nx, ny) = residuals(&curve, data, t_hat.values());
    let var_ratio = variance(&nx) / variance(&ny);
    Ok(IcanResult {
        decision: Decision::NoCanFit,
        t_hat,
        curve,
        var_ratio,
        reports,
        initial_reports,
        iterations_used: config.max_iterations,
        log,
        l2_log: init.log,
    })
}

/// Direct additive-noise check `y = f(x) + N`: GP-regress `y` on `x` and
/// test the residuals against `x`.
pub fn fit_direct_anm(x: &[f64], y: &[f64]) -> Result<DependenceReport> {
    fit_direct_anm_with(x, y, &GpFitOptions::default())
}

pub fn fit_direct_anm_with(x: &[f64], y: &[f64], gp: &GpFitOptions) -> Result<DependenceReport> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: x.len(),
            hint: "",
        });
    }
    let model = fit_gp_with(x, y, gp)?;
    let fitted = model.predict_mean(x);
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    hsic_pvalue(x, &resid, PValueMethod::Gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Hyperparameters;

    fn model(t: &[f64], y: &[f64]) -> GpModel {
        GpModel::with_hyperparameters(
            t,
            y,
            Hyperparameters {
                lengthscale: 0.3,
                signal_std: 1.0,
                noise_std: 1e-3,
            },
        )
        .unwrap()
    }

    #[test]
    fn invertibility() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        assert!(check_invertible(&model(&t, &t), (0.0, 1.0)));
        let bump: Vec<f64> = t.iter().map(|s| (-(s - 0.5) * (s - 0.5) / 0.02).exp()).collect();
        assert!(!check_invertible(&model(&t, &bump), (0.0, 1.0)));
        assert!(!check_invertible(&model(&t, &vec![1.0; 30]), (0.0, 1.0)));
    }

    #[test]
    fn config_validation() {
        assert!(IcanConfig::default().validate().is_ok());
        let bad = IcanConfig {
            ratio_low: 2.0,
            ..IcanConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = IcanConfig {
            alpha: 1.5,
            ..IcanConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
