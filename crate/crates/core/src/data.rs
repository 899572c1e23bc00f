//! Paired samples, normalisation, CSV I/O and the synthetic generators.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `normalized = (raw - offset) / scale` for one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisTransform {
    pub offset: f64,
    pub scale: f64,
}

impl AxisTransform {
    pub const IDENTITY: Self = Self {
        offset: 0.0,
        scale: 1.0,
    };

    fn then(self, inner: AxisTransform) -> AxisTransform {
        AxisTransform {
            offset: self.offset + self.scale * inner.offset,
            scale: self.scale * inner.scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x: AxisTransform,
    pub y: AxisTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Generator { name: String, seed: u64 },
    File { path: String },
    Memory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Transform from raw to current coordinates; `None` for raw data.
    pub normalization: Option<Normalization>,
    pub provenance: Provenance,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (m, if v.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

impl PairedSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::TooFewSamples {
                needed: 1,
                got: 0,
                hint: "",
            });
        }
        Ok(Self {
            x,
            y,
            normalization: None,
            provenance: Provenance::Memory,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        [self.x[k], self.y[k]]
    }

    /// Shifts and scales each axis to mean 0 and variance 1 (n - 1 denominator).
    pub fn normalize(&self) -> Result<PairedSample> {
        let (mx, vx) = mean_var(&self.x);
        let (my, vy) = mean_var(&self.y);
        if !(vx > 0.0) || !(vy > 0.0) {
            return Err(Error::DegenerateSample("zero variance axis".into()));
        }
        let tx = AxisTransform {
            offset: mx,
            scale: vx.sqrt(),
        };
        let ty = AxisTransform {
            offset: my,
            scale: vy.sqrt(),
        };
        let x = self.x.iter().map(|v| (v - tx.offset) / tx.scale).collect();
        let y = self.y.iter().map(|v| (v - ty.offset) / ty.scale).collect();
        let prior = self.normalization.unwrap_or(Normalization {
            x: AxisTransform::IDENTITY,
            y: AxisTransform::IDENTITY,
        });
        Ok(PairedSample {
            x,
            y,
            normalization: Some(Normalization {
                x: prior.x.then(tx),
                y: prior.y.then(ty),
            }),
            provenance: self.provenance.clone(),
        })
    }

    /// Maps back to raw coordinates.
    pub fn denormalize(&self) -> PairedSample {
        let Some(n) = self.normalization else {
            return self.clone();
        };
        PairedSample {
            x: self.x.iter().map(|v| n.x.offset + n.x.scale * v).collect(),
            y: self.y.iter().map(|v| n.y.offset + n.y.scale * v).collect(),
            normalization: None,
            provenance: self.provenance.clone(),
        }
    }
}

/// Reads a two-column numeric CSV. A non-numeric first line is treated as a
/// header. The sample is returned unnormalised.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PairedSample> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: name.clone(),
        line,
        message,
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 columns, found {}", record.len())));
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        match (&parsed[0], &parsed[1]) {
            (Ok(a), Ok(b)) => {
                x.push(*a);
                y.push(*b);
            }
            _ if line == 1 => continue,
            _ => {
                let bad = record
                    .iter()
                    .zip(&parsed)
                    .find(|(_, p)| p.is_err())
                    .map(|(f, _)| f.to_string())
                    .unwrap_or_default();
                return Err(parse_err(line, format!("not a number: {bad:?}")));
            }
        }
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: x.len(),
            hint: " data rows",
        });
    }
    Ok(PairedSample {
        x,
        y,
        normalization: None,
        provenance: Provenance::File { path: name },
    })
}

/// Writes columns under a header line; floats use shortest round-trip form.
pub fn write_columns(path: impl AsRef<Path>, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let n = columns.first().map_or(0, |c| c.len());
    for k in 0..n {
        w.write_record(columns.iter().map(|c| c[k].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, sample: &PairedSample) -> Result<()> {
    write_columns(path, &["x", "y"], &[&sample.x, &sample.y])
}

// ---------------------------------------------------------------------------
// Generators

/// Density of N(mu, sd²) at `t`.
pub fn normal_pdf(t: f64, mu: f64, sd: f64) -> f64 {
    let z = (t - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// A curve whose components are linear combinations of Gaussian bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSum {
    pub centers: Vec<f64>,
    pub width: f64,
    pub coef_u: Vec<f64>,
    pub coef_v: Vec<f64>,
    /// Use normalised densities instead of unit-height bumps.
    pub normalized: bool,
    pub shift_u: f64,
    pub shift_v: f64,
}

impl BumpSum {
    fn basis(&self, t: f64, c: f64) -> f64 {
        if self.normalized {
            normal_pdf(t, c, self.width)
        } else {
            let z = (t - c) / self.width;
            (-0.5 * z * z).exp()
        }
    }

    pub fn u(&self, t: f64) -> f64 {
        self.shift_u
            + self
                .centers
                .iter()
                .zip(&self.coef_u)
                .map(|(c, a)| a * self.basis(t, *c))
                .sum::<f64>()
    }

    pub fn v(&self, t: f64) -> f64 {
        self.shift_v
            + self
                .centers
                .iter()
                .zip(&self.coef_v)
                .map(|(c, a)| a * self.basis(t, *c))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Section3,
    Dataset1,
    Dataset2,
    Dataset3,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Section3 => "section3",
            Dataset::Dataset1 => "dataset1",
            Dataset::Dataset2 => "dataset2",
            Dataset::Dataset3 => "dataset3",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "section3" => Ok(Dataset::Section3),
            "1" | "dataset1" => Ok(Dataset::Dataset1),
            "2" | "dataset2" => Ok(Dataset::Dataset2),
            "3" | "dataset3" => Ok(Dataset::Dataset3),
            other => Err(Error::InvalidParameter(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub dataset: Dataset,
    pub n: usize,
    pub seed: u64,
    /// Multiplies every noise draw; 0 gives points exactly on the curve.
    pub noise_scale: f64,
    pub bump_count: usize,
}

impl GeneratorSpec {
    pub fn new(dataset: Dataset, n: usize, seed: u64) -> Self {
        Self {
            dataset,
            n,
            seed,
            noise_scale: 1.0,
            bump_count: DEFAULT_BUMP_COUNT,
        }
    }
}

/// Latent values and the raw noise draws behind a generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t: Vec<f64>,
    pub nx: Vec<f64>,
    pub ny: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub sample: PairedSample,
    pub truth: GroundTruth,
    pub curve: BumpSum,
}

pub const DEFAULT_BUMP_COUNT: usize = 4;
const BUMP_WIDTH: f64 = 0.3;
const CENTER_RANGE: (f64, f64) = (-0.25, 1.25);
const DATASET1_NOISE: f64 = 0.035;
const DATASET2_NOISE_X: f64 = 0.008;
const DATASET2_NOISE_Y: f64 = 0.0015;
const MAX_CURVE_ATTEMPTS: usize = 100;
const MAX_SIGN_SEARCH: usize = 10;

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    if spec.n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(spec.noise_scale >= 0.0) {
        return Err(Error::InvalidParameter("noise_scale must be non-negative".into()));
    }
    match spec.dataset {
        Dataset::Section3 => Ok(section3_impl(spec)),
        Dataset::Dataset1 | Dataset::Dataset2 | Dataset::Dataset3 => bump_dataset(spec),
    }
}

pub fn gen_section3(n: usize, seed: u64) -> Generated {
    section3_impl(&GeneratorSpec::new(Dataset::Section3, n, seed))
}

pub fn gen_dataset1(n: usize, seed: u64, bump_count: usize) -> Result<Generated> {
    generate(&GeneratorSpec {
        bump_count,
        ..GeneratorSpec::new(Dataset::Dataset1, n, seed)
    })
}

pub fn gen_dataset2(n: usize, seed: u64) -> Result<Generated> {
    generate(&GeneratorSpec::new(Dataset::Dataset2, n, seed))
}

pub fn gen_dataset3(n: usize, seed: u64) -> Result<Generated> {
    generate(&GeneratorSpec::new(Dataset::Dataset3, n, seed))
}

/// Noise half-width of the heteroscedastic generator at latent value `t`.
pub fn dataset3_amplitude(t: f64) -> f64 {
    0.005 + 0.07 * t
}

/// The two-bump curve with coefficients `(4, 4)` for x and `(1, -1)` for y.
pub fn section3_curve() -> BumpSum {
    BumpSum {
        centers: vec![-0.1, 1.1],
        width: 0.1,
        coef_u: vec![4.0, 4.0],
        coef_v: vec![1.0, -1.0],
        normalized: true,
        shift_u: 0.0,
        shift_v: 0.0,
    }
}

fn section3_impl(spec: &GeneratorSpec) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let mut t = Vec::with_capacity(n);
    let mut nx = Vec::with_capacity(n);
    let mut ny = Vec::with_capacity(n);
    for _ in 0..n {
        t.push(rng.random::<f64>());
        nx.push(spec.noise_scale * rng.random_range(-0.1..=0.1));
        ny.push(spec.noise_scale * rng.random_range(-0.1..=0.1));
    }
    assemble(spec, section3_curve(), GroundTruth { t, nx, ny }, 0.0)
}

fn grid(m: usize) -> impl Iterator<Item = f64> {
    (0..m).map(move |i| i as f64 / (m - 1) as f64)
}

/// True when consecutive grid values strictly increase or strictly decrease.
pub fn is_grid_monotone(values: &[f64]) -> bool {
    let inc = values.windows(2).all(|w| w[1] > w[0]);
    let dec = values.windows(2).all(|w| w[1] < w[0]);
    inc || dec
}

fn random_coefficients(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m)
        .map(|_| {
            let mag = rng.random_range(0.5..1.5);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn span(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Rejects curves that fold back close to themselves.
fn well_separated(us: &[f64], vs: &[f64]) -> bool {
    let m = us.len();
    let scale = span(us).max(span(vs));
    let min_gap = 0.15 * scale;
    let lag = m / 5;
    for i in 0..m {
        for j in (i + lag)..m {
            let d = (us[i] - us[j]).hypot(vs[i] - vs[j]);
            if d < min_gap {
                return false;
            }
        }
    }
    true
}

fn admissible(us: &[f64], vs: &[f64]) -> bool {
    span(us) >= 0.5 && span(vs) >= 0.5 && well_separated(us, vs)
}

/// Keeps the drawn magnitudes of the v coefficients and looks for signs
/// that make v monotone: first falling bumps left of the midpoint and
/// rising ones right of it, then the other patterns in random order.
fn monotone_signs(curve: &mut BumpSum, nodes: &[f64], rng: &mut ChaCha8Rng) -> bool {
    let m = curve.coef_v.len().min(MAX_SIGN_SEARCH);
    let mags: Vec<f64> = curve.coef_v.iter().map(|c| c.abs()).collect();
    let preferred: Vec<bool> = curve.centers.iter().map(|&mu| mu >= 0.5).collect();
    let mut patterns: Vec<u32> = (0..1u32 << m).collect();
    patterns.shuffle(rng);
    let signs = |p: Option<u32>| -> Vec<bool> {
        match p {
            None => preferred.clone(),
            Some(bits) => (0..mags.len()).map(|i| if i < m { bits >> i & 1 == 1 } else { preferred[i] }).collect(),
        }
    };
    for p in std::iter::once(None).chain(patterns.into_iter().map(Some)) {
        curve.coef_v = mags.iter().zip(signs(p)).map(|(a, up)| if up { *a } else { -a }).collect();
        let vs: Vec<f64> = nodes.iter().map(|&t| curve.v(t)).collect();
        if is_grid_monotone(&vs) {
            return true;
        }
    }
    false
}

fn bump_dataset(spec: &GeneratorSpec) -> Result<Generated> {
    let m = spec.bump_count;
    if m < 2 {
        return Err(Error::InvalidParameter("bump_count must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nodes: Vec<f64> = grid(201).collect();
    let mut curve = None;
    for _ in 0..MAX_CURVE_ATTEMPTS {
        let centers: Vec<f64> = (0..m).map(|_| rng.random_range(CENTER_RANGE.0..CENTER_RANGE.1)).collect();
        let coef_u = random_coefficients(&mut rng, m);
        let coef_v = random_coefficients(&mut rng, m);
        let mut candidate = BumpSum {
            centers,
            width: BUMP_WIDTH,
            coef_u,
            coef_v,
            normalized: false,
            shift_u: 0.0,
            shift_v: 0.0,
        };
        let us: Vec<f64> = nodes.iter().map(|&t| candidate.u(t)).collect();
        let ok = if spec.dataset == Dataset::Dataset2 {
            monotone_signs(&mut candidate, &nodes, &mut rng) && {
                let vs: Vec<f64> = nodes.iter().map(|&t| candidate.v(t)).collect();
                admissible(&us, &vs) && !is_grid_monotone(&us)
            }
        } else {
            let vs: Vec<f64> = nodes.iter().map(|&t| candidate.v(t)).collect();
            admissible(&us, &vs) && !is_grid_monotone(&us) && !is_grid_monotone(&vs)
        };
        if ok {
            curve = Some(candidate);
            break;
        }
    }
    let curve = curve.ok_or_else(|| {
        Error::Generator(format!(
            "no admissible curve after {MAX_CURVE_ATTEMPTS} attempts (seed {})",
            spec.seed
        ))
    })?;

    let n = spec.n;
    let s = spec.noise_scale;
    let mut t = Vec::with_capacity(n);
    let mut nx = Vec::with_capacity(n);
    let mut ny = Vec::with_capacity(n);
    for _ in 0..n {
        let tk: f64 = rng.random();
        let (ex, ey) = match spec.dataset {
            Dataset::Dataset2 => (
                rng.random_range(-DATASET2_NOISE_X..=DATASET2_NOISE_X),
                rng.random_range(-DATASET2_NOISE_Y..=0.0),
            ),
            Dataset::Dataset3 => {
                let a = dataset3_amplitude(tk);
                (rng.random_range(-a..=a), rng.random_range(-a..=a))
            }
            _ => (
                rng.random_range(-DATASET1_NOISE..=DATASET1_NOISE),
                rng.random_range(-DATASET1_NOISE..=DATASET1_NOISE),
            ),
        };
        t.push(tk);
        nx.push(s * ex);
        ny.push(s * ey);
    }
    // N_Y is drawn on [-0.0015, 0]; its mean belongs to the curve
    let shift_y = if spec.dataset == Dataset::Dataset2 {
        -0.5 * DATASET2_NOISE_Y * s
    } else {
        0.0
    };
    Ok(assemble(spec, curve, GroundTruth { t, nx, ny }, shift_y))
}

/// Builds the sample from curve and noise draws. The truth keeps the raw
/// noise draws; the reported curve absorbs the y-noise mean.
fn assemble(spec: &GeneratorSpec, curve: BumpSum, truth: GroundTruth, noise_mean_y: f64) -> Generated {
    let x = truth.t.iter().zip(&truth.nx).map(|(t, e)| curve.u(*t) + e).collect();
    let y = truth.t.iter().zip(&truth.ny).map(|(t, e)| curve.v(*t) + e).collect();
    let sample = PairedSample {
        x,
        y,
        normalization: None,
        provenance: Provenance::Generator {
            name: spec.dataset.name().into(),
            seed: spec.seed,
        },
    };
    let curve = BumpSum {
        shift_v: curve.shift_v + noise_mean_y,
        ..curve
    };
    Generated {
        sample,
        truth,
        curve,
    }
}
