//! Initial dimensionality reduction: Isomap embedding, nearest-point
//! projection onto a curve, and the alternating regression/projection fits.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{normal_pdf, PairedSample};
use crate::error::{Error, Result};
use crate::gp::{fit_gp_with, GpFitOptions, GpModel};
use crate::projection::{simplex_minimize_with, SimplexOptions, LATENT_CLAMP};

pub const DEFAULT_NEIGHBORS: usize = 10;
pub const DEFAULT_GRID_NODES: usize = 2000;
pub const DEFAULT_MAX_ALTERNATIONS: usize = 10;
const RANGE_MARGIN: f64 = 0.05;
const REFINE_CANDIDATES: usize = 3;
/// Random restarts for refits that also start from the previous optimum.
const WARM_RESTARTS: usize = 1;
const PARAMETRIC_NEIGHBORS: [usize; 3] = [5, 10, 20];
const EXTENT_ROUNDS: usize = 5;
const ENDPOINT_PICKS: usize = 4;
const POLISH_BUDGET: usize = 900;
const EXTENT_TOL: f64 = 1e-6;

/// Latent values, one per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentAssignment(pub Vec<f64>);

impl LatentAssignment {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.0
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Affine map onto `[0, 1]`.
    pub fn rescaled_unit(&self) -> LatentAssignment {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        if !(span > 0.0) {
            return LatentAssignment(vec![0.5; self.0.len()]);
        }
        LatentAssignment(self.0.iter().map(|v| (v - lo) / span).collect())
    }
}

/// Curve nodes cached for nearest-point search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionGrid {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ProjectionGrid {
    pub fn build(range: (f64, f64), nodes: usize, eval: impl Fn(f64) -> [f64; 2]) -> Self {
        let nodes = nodes.max(2);
        let step = (range.1 - range.0) / (nodes - 1) as f64;
        let t: Vec<f64> = (0..nodes).map(|i| range.0 + step * i as f64).collect();
        let (x, y) = t.iter().map(|&s| eval(s)).map(|p| (p[0], p[1])).unzip();
        Self { t, x, y }
    }
}

/// A parametric plane curve `t ↦ (u(t), v(t))` over a closed latent range.
pub trait Curve {
    fn point(&self, t: f64) -> [f64; 2];
    fn t_range(&self) -> (f64, f64);
    fn grid(&self) -> &ProjectionGrid;

    fn points(&self, ts: &[f64]) -> (Vec<f64>, Vec<f64>) {
        ts.iter().map(|&t| self.point(t)).map(|p| (p[0], p[1])).unzip()
    }
}

/// Piecewise cubic Hermite interpolant of both components on a uniform
/// grid, built from exact values and slopes.
#[derive(Debug, Clone)]
struct HermiteTable {
    lo: f64,
    step: f64,
    /// Per node: `[u, u', v, v']`.
    nodes: Vec<[f64; 4]>,
}

impl HermiteTable {
    const MIN_NODES: usize = 2001;
    const MAX_NODES: usize = 100_001;
    /// Nodes per lengthscale; the interpolation error then sits near 1e-9
    /// of the signal scale.
    const NODES_PER_LENGTHSCALE: f64 = 40.0;

    fn build(u: &GpModel, v: &GpModel, range: (f64, f64)) -> Option<Self> {
        let ls = u.hyperparameters().lengthscale.min(v.hyperparameters().lengthscale);
        let span = range.1 - range.0;
        let wanted = (span / ls * Self::NODES_PER_LENGTHSCALE).ceil() as usize + 1;
        if wanted > Self::MAX_NODES || !(span > 0.0) {
            return None;
        }
        let count = wanted.max(Self::MIN_NODES);
        let step = span / (count - 1) as f64;
        let nodes = (0..count)
            .map(|i| {
                let t = range.0 + step * i as f64;
                let (a, da) = u.predict_with_slope(t);
                let (b, db) = v.predict_with_slope(t);
                [a, da, b, db]
            })
            .collect();
        Some(Self {
            lo: range.0,
            step,
            nodes,
        })
    }

    fn eval(&self, t: f64) -> Option<[f64; 2]> {
        let z = (t - self.lo) / self.step;
        if !(z >= 0.0) || z > (self.nodes.len() - 1) as f64 {
            return None;
        }
        let i = (z as usize).min(self.nodes.len() - 2);
        let s = z - i as f64;
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * self.step;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * self.step;
        Some([
            h00 * a[0] + h10 * a[1] + h01 * b[0] + h11 * b[1],
            h00 * a[2] + h10 * a[3] + h01 * b[2] + h11 * b[3],
        ])
    }
}

/// Curve whose components are GP posterior means over the latent value.
///
/// Evaluation inside the latent window (the fitted range joined with the
/// clamp range of the projection step) goes through a dense cubic Hermite
/// table; outside it the GP means are evaluated exactly.
#[derive(Debug, Clone)]
pub struct CurveModel {
    pub u_model: GpModel,
    pub v_model: GpModel,
    pub t_range: (f64, f64),
    grid: ProjectionGrid,
    table: Option<HermiteTable>,
}

impl CurveModel {
    /// Regresses x on `t` and y on `t` and caches a projection grid over the
    /// range of `t` widened by 5% on each side.
    pub fn fit(t: &LatentAssignment, data: &PairedSample, gp: &GpFitOptions) -> Result<Self> {
        Self::fit_pair(t, data, gp, gp)
    }

    /// Refits on new latent values, adding the current hyperparameters of
    /// each component as an extra starting point.
    pub fn refit(&self, t: &LatentAssignment, data: &PairedSample, gp: &GpFitOptions) -> Result<Self> {
        let gu = GpFitOptions {
            initial: Some(self.u_model.hyperparameters()),
            ..gp.clone()
        };
        let gv = GpFitOptions {
            initial: Some(self.v_model.hyperparameters()),
            ..gp.clone()
        };
        Self::fit_pair(t, data, &gu, &gv)
    }

    fn fit_pair(t: &LatentAssignment, data: &PairedSample, gu: &GpFitOptions, gv: &GpFitOptions) -> Result<Self> {
        let u_model = fit_gp_with(t.values(), &data.x, gu)?;
        let v_model = fit_gp_with(t.values(), &data.y, gv)?;
        let (lo, hi) = t.min_max();
        let margin = RANGE_MARGIN * (hi - lo);
        Ok(Self::from_models(u_model, v_model, (lo - margin, hi + margin), DEFAULT_GRID_NODES))
    }

    pub fn from_models(u_model: GpModel, v_model: GpModel, t_range: (f64, f64), nodes: usize) -> Self {
        let window = (t_range.0.min(LATENT_CLAMP.0), t_range.1.max(LATENT_CLAMP.1));
        let table = HermiteTable::build(&u_model, &v_model, window);
        let mut curve = Self {
            u_model,
            v_model,
            t_range,
            grid: ProjectionGrid {
                t: Vec::new(),
                x: Vec::new(),
                y: Vec::new(),
            },
            table,
        };
        curve.grid = ProjectionGrid::build(t_range, nodes, |t| curve.point(t));
        curve
    }

    /// Exact GP means, bypassing the interpolation table.
    pub fn point_exact(&self, t: f64) -> [f64; 2] {
        [self.u_model.predict_one(t), self.v_model.predict_one(t)]
    }
}

impl Curve for CurveModel {
    fn point(&self, t: f64) -> [f64; 2] {
        self.table
            .as_ref()
            .and_then(|tab| tab.eval(t))
            .unwrap_or_else(|| self.point_exact(t))
    }

    fn t_range(&self) -> (f64, f64) {
        self.t_range
    }

    fn grid(&self) -> &ProjectionGrid {
        &self.grid
    }
}

pub const BUMP_CENTERS: [f64; 2] = [-0.1, 1.1];
pub const BUMP_SD: f64 = 0.1;

/// `s_i(t) = α_i φ_{-0.1}(t) + β_i φ_{1.1}(t)` on `[0, 1]`, where `φ_μ` is
/// the N(μ, 0.1²) density. Coefficients are stored as `[α₁, β₁, α₂, β₂]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpCurve {
    pub coefficients: [f64; 4],
    grid: ProjectionGrid,
}

fn bump_basis(t: f64) -> [f64; 2] {
    [normal_pdf(t, BUMP_CENTERS[0], BUMP_SD), normal_pdf(t, BUMP_CENTERS[1], BUMP_SD)]
}

impl BumpCurve {
    pub fn new(coefficients: [f64; 4]) -> Self {
        let c = coefficients;
        let grid = ProjectionGrid::build((0.0, 1.0), DEFAULT_GRID_NODES, |t| {
            let b = bump_basis(t);
            [c[0] * b[0] + c[1] * b[1], c[2] * b[0] + c[3] * b[1]]
        });
        Self { coefficients, grid }
    }
}

impl Curve for BumpCurve {
    fn point(&self, t: f64) -> [f64; 2] {
        let b = bump_basis(t);
        let c = &self.coefficients;
        [c[0] * b[0] + c[1] * b[1], c[2] * b[0] + c[3] * b[1]]
    }

    fn t_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn grid(&self) -> &ProjectionGrid {
        &self.grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub t: f64,
    pub dist: f64,
}

fn sq_dist<C: Curve + ?Sized>(curve: &C, t: f64, p: [f64; 2]) -> f64 {
    let q = curve.point(t);
    let dx = q[0] - p[0];
    let dy = q[1] - p[1];
    dx * dx + dy * dy
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Nearest point of `curve` to `point`: a grid scan followed by golden-section
/// refinement over the two cells adjacent to the best grid local minima.
pub fn project_to_curve<C: Curve + ?Sized>(curve: &C, point: [f64; 2]) -> Projection {
    let g = curve.grid();
    let m = g.t.len();
    let d: Vec<f64> = (0..m)
        .map(|i| {
            let dx = g.x[i] - point[0];
            let dy = g.y[i] - point[1];
            dx * dx + dy * dy
        })
        .collect();
    let mut minima: Vec<usize> = (0..m)
        .filter(|&i| (i == 0 || d[i] <= d[i - 1]) && (i + 1 == m || d[i] <= d[i + 1]))
        .collect();
    minima.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    minima.truncate(REFINE_CANDIDATES);

    let mut best = Projection {
        t: g.t[minima[0]],
        dist: d[minima[0]],
    };
    for &i in &minima {
        let lo = g.t[i.saturating_sub(1)];
        let hi = g.t[(i + 1).min(m - 1)];
        let tol = 1e-9 * (hi - lo).abs().max(1e-300);
        let (t, v) = golden_section(|t| sq_dist(curve, t, point), lo, hi, tol);
        if v < best.dist {
            best = Projection { t, dist: v };
        }
        if d[i] < best.dist {
            best = Projection { t: g.t[i], dist: d[i] };
        }
    }
    best.dist = best.dist.sqrt();
    best
}

/// Sum of Euclidean distances between observations and their curve points.
pub fn l2_objective<C: Curve + ?Sized>(curve: &C, data: &PairedSample, t: &LatentAssignment) -> f64 {
    (0..data.len())
        .map(|k| sq_dist(curve, t.0[k], data.point(k)).sqrt())
        .sum()
}

/// Projects every observation, keeping its current latent value when that
/// is already at least as close. Returns the assignment and per-point
/// distances.
fn project_all<C: Curve + ?Sized>(curve: &C, data: &PairedSample, current: Option<&LatentAssignment>) -> (LatentAssignment, Vec<f64>) {
    let mut t = Vec::with_capacity(data.len());
    let mut dist = Vec::with_capacity(data.len());
    for k in 0..data.len() {
        let p = data.point(k);
        let mut proj = project_to_curve(curve, p);
        if let Some(cur) = current {
            let dc = sq_dist(curve, cur.0[k], p).sqrt();
            if dc <= proj.dist {
                proj = Projection { t: cur.0[k], dist: dc };
            }
        }
        t.push(proj.t);
        dist.push(proj.dist);
    }
    (LatentAssignment(t), dist)
}

// ---------------------------------------------------------------------------
// Isomap

/// One-dimensional Isomap embedding: symmetric k-nearest-neighbour graph,
/// all-pairs shortest paths, classical MDS, first coordinate. `k` grows by 2
/// until the graph is connected.
pub fn isomap_embed_1d(points: &[[f64; 2]], k: usize) -> Result<LatentAssignment> {
    let n = points.len();
    if k == 0 || n < k + 1 {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            got: n,
            hint: " points for the neighbour graph",
        });
    }
    let dist = |i: usize, j: usize| (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
    let order: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            idx.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut k = k;
    let geo = loop {
        let mut g = vec![f64::INFINITY; n * n];
        for i in 0..n {
            g[i * n + i] = 0.0;
            for &j in order[i].iter().take(k) {
                let d = dist(i, j);
                g[i * n + j] = d;
                g[j * n + i] = d;
            }
        }
        for m in 0..n {
            for i in 0..n {
                let dim = g[i * n + m];
                if dim.is_infinite() {
                    continue;
                }
                for j in 0..n {
                    let cand = dim + g[m * n + j];
                    if cand < g[i * n + j] {
                        g[i * n + j] = cand;
                    }
                }
            }
        }
        if g.iter().all(|v| v.is_finite()) {
            break g;
        }
        if k >= n - 1 {
            return Err(Error::DegenerateSample("neighbour graph cannot be connected".into()));
        }
        k = (k + 2).min(n - 1);
    };

    // classical MDS on squared geodesic distances
    let sq = DMatrix::from_fn(n, n, |i, j| geo[i * n + j] * geo[i * n + j]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let top = eig.eigenvalues.imax();
    let lambda = eig.eigenvalues[top].max(0.0);
    let vec = eig.eigenvectors.column(top);
    let pivot = vec.iamax();
    let sign = if vec[pivot] < 0.0 { -1.0 } else { 1.0 };
    Ok(LatentAssignment(vec.iter().map(|v| sign * lambda.sqrt() * v).collect()))
}

// ---------------------------------------------------------------------------
// Alternating fits

#[derive(Debug, Clone)]
pub struct CurveOptions {
    pub neighbors: usize,
    pub max_alternations: usize,
    pub relative_tolerance: f64,
    pub gp: GpFitOptions,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            max_alternations: DEFAULT_MAX_ALTERNATIONS,
            relative_tolerance: 1e-4,
            gp: GpFitOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrincipalCurve {
    pub curve: CurveModel,
    pub latent: LatentAssignment,
    pub l2: f64,
    /// Objective of every accepted state, starting with the Isomap one.
    pub log: Vec<f64>,
}

fn check_curve_data(data: &PairedSample, needed: usize) -> Result<()> {
    if data.len() < needed {
        return Err(Error::TooFewSamples {
            needed,
            got: data.len(),
            hint: "",
        });
    }
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    if !(var(&data.x) > 0.0) || !(var(&data.y) > 0.0) {
        return Err(Error::DegenerateSample("zero variance in x or y".into()));
    }
    Ok(())
}

fn initial_latent(data: &PairedSample, neighbors: usize) -> Result<LatentAssignment> {
    let points: Vec<[f64; 2]> = (0..data.len()).map(|k| data.point(k)).collect();
    Ok(isomap_embed_1d(&points, neighbors.min(data.len() - 1))?.rescaled_unit())
}

/// Principal-curve style fit: GP regression of each coordinate on the latent
/// values alternated with nearest-point projection. A refit is kept only when
/// it lowers the summed distance; the loop stops once the relative gain
/// drops below the tolerance.
pub fn principal_curve_fit(data: &PairedSample, opts: &CurveOptions) -> Result<PrincipalCurve> {
    check_curve_data(data, 10)?;
    let t0 = initial_latent(data, opts.neighbors)?;
    principal_curve_from(data, t0, opts)
}

/// Same as [`principal_curve_fit`] from a given latent assignment.
pub fn principal_curve_from(data: &PairedSample, t0: LatentAssignment, opts: &CurveOptions) -> Result<PrincipalCurve> {
    check_curve_data(data, 10)?;
    let mut curve = CurveModel::fit(&t0, data, &opts.gp)?;
    let mut log = vec![l2_objective(&curve, data, &t0)];
    let (mut latent, dist) = project_all(&curve, data, Some(&t0));
    let mut l2: f64 = dist.iter().sum();
    log.push(l2);

    let warm = GpFitOptions {
        restarts: WARM_RESTARTS,
        ..opts.gp.clone()
    };
    for _ in 1..opts.max_alternations {
        let cand_curve = curve.refit(&latent, data, &warm)?;
        let (cand_latent, dist) = project_all(&cand_curve, data, Some(&latent));
        let cand_l2: f64 = dist.iter().sum();
        if !(cand_l2 < l2) {
            break;
        }
        let gain = (l2 - cand_l2) / l2;
        curve = cand_curve;
        latent = cand_latent;
        l2 = cand_l2;
        log.push(l2);
        if gain < opts.relative_tolerance {
            break;
        }
    }
    Ok(PrincipalCurve { curve, latent, l2, log })
}

#[derive(Debug, Clone)]
pub struct ParametricFit {
    pub curve: BumpCurve,
    pub latent: LatentAssignment,
    pub l2: f64,
    pub log: Vec<f64>,
}

impl ParametricFit {
    pub fn coefficients(&self) -> [f64; 4] {
        self.curve.coefficients
    }
}

fn weighted_ls(basis: &[[f64; 2]], w: &[f64], target: &[f64]) -> Result<[f64; 2]> {
    let (mut a00, mut a01, mut a11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((p, wk), z) in basis.iter().zip(w).zip(target) {
        a00 += wk * p[0] * p[0];
        a01 += wk * p[0] * p[1];
        a11 += wk * p[1] * p[1];
        b0 += wk * p[0] * z;
        b1 += wk * p[1] * z;
    }
    let det = a00 * a11 - a01 * a01;
    if !(det.abs() > 1e-12 * (a00 * a11).abs()) || !det.is_finite() {
        return Err(Error::SingularSystem("bump basis is collinear on the latent values".into()));
    }
    Ok([(a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det])
}

/// Fits the two-bump family by minimising the summed distance over
/// coefficients and projections jointly: iteratively reweighted least squares
/// for the coefficients alternated with nearest-point projection.
///
/// The family is symmetric under `t ↦ 1 - t` with swapped coefficients; the
/// result is reported in the orientation with `α₂ ≥ β₂`.
pub fn fit_parametric_l2(data: &PairedSample, max_iterations: usize) -> Result<ParametricFit> {
    if data.len() < 4 {
        return Err(Error::TooFewSamples {
            needed: 4,
            got: data.len(),
            hint: "",
        });
    }
    let mut starts = Vec::new();
    for k in PARAMETRIC_NEIGHBORS {
        if let Ok(t) = initial_latent(data, k) {
            starts.push(t);
        }
    }
    starts.extend(endpoint_latents(data));
    if starts.is_empty() {
        starts.push(LatentAssignment((0..data.len()).map(|k| k as f64 / (data.len() - 1) as f64).collect()));
    }
    let mut best: Option<ParametricFit> = None;
    for t0 in starts {
        let Ok(fit) = fit_parametric_from(data, t0, max_iterations) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| fit.l2 < b.l2) {
            best = Some(fit);
        }
    }
    let best = best.ok_or_else(|| Error::SingularSystem("no parametric fit".into()))?;
    Ok(shortest_extent(data, polish(data, best)))
}

/// Simplex search over the four coefficients with full re-projection, to
/// leave basins where the alternation stalls (typically one shortened arm).
fn polish(data: &PairedSample, mut fit: ParametricFit) -> ParametricFit {
    let l2_of = |c: &[f64]| project_all(&BumpCurve::new([c[0], c[1], c[2], c[3]]), data, None).1.iter().sum::<f64>();
    let opts = SimplexOptions {
        budget: POLISH_BUDGET,
        relative_step: 0.1,
        absolute_step: 0.05,
        adaptive: false,
        restarts: 3,
    };
    let Ok(res) = simplex_minimize_with(l2_of, &fit.curve.coefficients, &opts) else {
        return fit;
    };
    if res.f < fit.l2 {
        let mut c = [res.x[0], res.x[1], res.x[2], res.x[3]];
        let (mut latent, _) = project_all(&BumpCurve::new(c), data, None);
        if c[2] < c[3] {
            c = [c[1], c[0], c[3], c[2]];
            latent = LatentAssignment(latent.0.iter().map(|t| 1.0 - t).collect());
        }
        fit.curve = BumpCurve::new(c);
        fit.latent = latent;
        fit.l2 = res.f;
        fit.log.push(res.f);
    }
    fit
}

/// The bumps barely overlap on `[0, 1]`, so each one traces an almost
/// straight arm whose excess length does not change the ℓ2 objective.
/// Shrinks each arm until the projections span the whole unit interval,
/// keeping a shrink only when the objective does not grow.
fn shortest_extent(data: &PairedSample, mut fit: ParametricFit) -> ParametricFit {
    for _ in 0..EXTENT_ROUNDS {
        let (lo, hi) = fit.latent.min_max();
        if lo <= EXTENT_TOL && hi >= 1.0 - EXTENT_TOL {
            break;
        }
        let peak = |t: f64, mu: f64| normal_pdf(t, mu, BUMP_SD);
        let fa = if lo > 0.0 { peak(lo, BUMP_CENTERS[0]) / peak(0.0, BUMP_CENTERS[0]) } else { 1.0 };
        let fb = if hi < 1.0 { peak(hi, BUMP_CENTERS[1]) / peak(1.0, BUMP_CENTERS[1]) } else { 1.0 };
        let c = fit.curve.coefficients;
        let cand = BumpCurve::new([c[0] * fa, c[1] * fb, c[2] * fa, c[3] * fb]);
        let (latent, dist) = project_all(&cand, data, None);
        let l2: f64 = dist.iter().sum();
        if l2 > fit.l2 * (1.0 + 1e-9) {
            break;
        }
        fit.curve = cand;
        fit.latent = latent;
        fit.l2 = l2;
        fit.log.push(l2);
    }
    fit
}

/// Latent starts from the curves through pairs of extreme observations,
/// placed at `t = 0` and `t = 1`. The extremes are a farthest-point sample
/// seeded by the mutually farthest pair.
fn endpoint_latents(data: &PairedSample) -> Vec<LatentAssignment> {
    let n = data.len();
    let dist = |i: usize, j: usize| (data.x[i] - data.x[j]).hypot(data.y[i] - data.y[j]);
    let mut far = (0, 0, -1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(i, j);
            if d > far.2 {
                far = (i, j, d);
            }
        }
    }
    let mut picks = vec![far.0, far.1];
    let mut gap: Vec<f64> = (0..n).map(|k| dist(k, far.0).min(dist(k, far.1))).collect();
    while picks.len() < ENDPOINT_PICKS.min(n) {
        let (k, _) = gap.iter().enumerate().fold((0, -1.0), |b, (k, &g)| if g > b.1 { (k, g) } else { b });
        picks.push(k);
        for (m, g) in gap.iter_mut().enumerate() {
            *g = g.min(dist(m, k));
        }
    }
    let (b0, b1) = (bump_basis(0.0), bump_basis(1.0));
    let det = b0[0] * b1[1] - b0[1] * b1[0];
    if !(det.abs() > 0.0) {
        return Vec::new();
    }
    let solve = |za: f64, zb: f64| [(za * b1[1] - zb * b0[1]) / det, (b0[0] * zb - b1[0] * za) / det];
    let mut out = Vec::new();
    for (ia, &i) in picks.iter().enumerate() {
        for &j in &picks[ia + 1..] {
            let (a, b) = (data.point(i), data.point(j));
            let cx = solve(a[0], b[0]);
            let cy = solve(a[1], b[1]);
            let curve = BumpCurve::new([cx[0], cx[1], cy[0], cy[1]]);
            out.push(project_all(&curve, data, None).0);
        }
    }
    out
}

pub fn fit_parametric_from(data: &PairedSample, t0: LatentAssignment, max_iterations: usize) -> Result<ParametricFit> {
    let n = data.len();
    let mut latent = t0;
    let mut weights = vec![1.0; n];
    let mut curve: Option<BumpCurve> = None;
    let mut l2 = f64::INFINITY;
    let mut log = Vec::new();
    for _ in 0..max_iterations.max(1) {
        let basis: Vec<[f64; 2]> = latent.0.iter().map(|&t| bump_basis(t)).collect();
        let cx = weighted_ls(&basis, &weights, &data.x)?;
        let cy = weighted_ls(&basis, &weights, &data.y)?;
        let cand = BumpCurve::new([cx[0], cx[1], cy[0], cy[1]]);
        let (cand_latent, dist) = project_all(&cand, data, Some(&latent));
        let cand_l2: f64 = dist.iter().sum();
        if cand_l2 > l2 {
            break;
        }
        let gain = (l2 - cand_l2) / cand_l2.max(1e-300);
        weights = dist.iter().map(|d| 1.0 / d.max(1e-8)).collect();
        curve = Some(cand);
        latent = cand_latent;
        l2 = cand_l2;
        log.push(l2);
        if gain < 1e-10 {
            break;
        }
    }
    let mut curve = curve.ok_or_else(|| Error::SingularSystem("no parametric fit".into()))?;
    let c = curve.coefficients;
    if c[2] < c[3] {
        curve = BumpCurve::new([c[1], c[0], c[3], c[2]]);
        latent = LatentAssignment(latent.0.iter().map(|t| 1.0 - t).collect());
    }
    Ok(ParametricFit { curve, latent, l2, log })
}
