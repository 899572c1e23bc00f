//! JSON report of a fit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::Curve;
use crate::data::Normalization;
use crate::ican::{Decision, IcanConfig, IcanResult, IterationRecord};

pub const REPORT_GRID_NODES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValues {
    pub nxny: f64,
    pub nxt: f64,
    pub nyt: f64,
}

/// The fitted curve sampled on an even grid over the latent range, in the
/// coordinates the fit ran in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEval {
    pub grid: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub decision: Decision,
    pub var_ratio: f64,
    pub p_values: PValues,
    pub iterations: usize,
    pub config: IcanConfig,
    /// Raw-to-fit transform; `None` when the fit ran on raw data.
    pub normalization: Option<Normalization>,
    pub t_hat: Vec<f64>,
    pub curve_eval: CurveEval,
    pub log: Vec<IterationRecord>,
    pub l2_log: Vec<f64>,
}

impl FitReport {
    pub fn new(result: &IcanResult, config: &IcanConfig, normalization: Option<Normalization>) -> Self {
        let p = result.p_values();
        let (lo, hi) = result.t_hat.min_max();
        let grid: Vec<f64> = (0..REPORT_GRID_NODES)
            .map(|i| lo + (hi - lo) * i as f64 / (REPORT_GRID_NODES - 1) as f64)
            .collect();
        let (u, v) = result.curve.points(&grid);
        Self {
            decision: result.decision,
            var_ratio: result.var_ratio,
            p_values: PValues {
                nxny: p[0],
                nxt: p[1],
                nyt: p[2],
            },
            iterations: result.iterations_used,
            config: config.clone(),
            normalization,
            t_hat: result.t_hat.values().to_vec(),
            curve_eval: CurveEval { grid, u, v },
            log: result.log.clone(),
            l2_log: result.l2_log.clone(),
        }
    }

    pub fn to_json(&self) -> crate::Result<String> {
        // Non-finite floats have no JSON form; serde_json writes them as null.
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
