//! Velocity-dependent (heteroscedastic) LiDAR range-noise model.
//!
//! The motion term is learned from `(speed, residual)` samples with a two-stage
//! kernel ridge regression: first the mean residual, then the log of squared
//! stage-one residuals (bias-corrected for the log-chi-square offset) for the
//! variance. Both curves are projected onto non-decreasing functions. The
//! distance term is linear in range and has zero mean.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{isotonic_increasing, MonotoneCubic};

/// Version tag of the synthetic reference law written into dataset headers.
pub const REFERENCE_LAW_VERSION: &str = "v1";

/// Speeds (m/s) at which the reference residuals are drawn.
pub const REFERENCE_SPEEDS: [f64; 6] = [0.1, 2.0, 4.0, 6.0, 8.0, 10.0];

/// Reference mean range residual, meters.
pub fn reference_mean(v: f64) -> f64 {
    0.004 * v * v
}

/// Reference residual standard deviation, meters.
pub fn reference_std(v: f64) -> f64 {
    0.01 + 0.006 * v
}

/// E[ln X] for X ~ chi-square(1); the offset between mean log squared residual and ln sigma^2.
pub const LOG_CHI2_1_MEAN: f64 = -1.270_362_845_461_478;

const RIDGE: f64 = 1e-3;
const MONOTONE_GRID: usize = 201;
const MIN_SQUARED_RESIDUAL: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySample {
    pub v: f64,
    pub residual: f64,
}

/// Draw residuals from the reference law at each speed.
pub fn generate_reference_dataset(
    n_per_speed: usize,
    speeds: &[f64],
    seed: u64,
) -> Result<Vec<UncertaintySample>> {
    if speeds.is_empty() {
        return Err(Error::validation("speeds", "must be non-empty"));
    }
    if n_per_speed < 2 {
        return Err(Error::validation("n_per_speed", "must be >= 2"));
    }
    if speeds.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::validation("speeds", "must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_per_speed * speeds.len());
    for &v in speeds {
        let dist = Normal::new(reference_mean(v), reference_std(v)).expect("positive std");
        for _ in 0..n_per_speed {
            out.push(UncertaintySample {
                v,
                residual: dist.sample(&mut rng),
            });
        }
    }
    Ok(out)
}

pub fn dataset_header(seed: u64, n_per_speed: usize) -> String {
    format!(
        "# reference law {REFERENCE_LAW_VERSION}: mu(v)=0.004*v^2 m, sigma(v)=0.01+0.006*v m; seed={seed}; n_per_speed={n_per_speed}"
    )
}

/// Write the `v,residual` CSV preceded by a `#` header line.
pub fn write_dataset<W: Write>(
    mut w: W,
    header: &str,
    data: &[UncertaintySample],
) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "v,residual")?;
    for s in data {
        writeln!(w, "{},{}", s.v, s.residual)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<Vec<UncertaintySample>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["v", "residual"] {
        return Err(Error::Schema {
            line: reader.position().line(),
            msg: format!("expected columns v,residual, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Schema {
                    line,
                    msg: format!("column {i} is not a finite number"),
                })
        };
        let v = parse(0)?;
        if v < 0.0 {
            return Err(Error::Schema {
                line,
                msg: "speed must be >= 0".into(),
            });
        }
        out.push(UncertaintySample {
            v,
            residual: parse(1)?,
        });
    }
    Ok(out)
}

pub fn save_dataset(path: impl AsRef<Path>, header: &str, data: &[UncertaintySample]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(f, header, data)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<UncertaintySample>> {
    read_dataset(std::fs::File::open(path)?)
}

/// Gaussian-kernel ridge regression curve with a constant offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCurve {
    pub centers: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub offset: f64,
    pub lengthscale: f64,
    pub ridge: f64,
}

impl KernelCurve {
    /// Weighted fit on unique inputs. With `counts[k]` repeated observations whose
    /// mean is `means[k]`, solving `(K + ridge * W^-1) c = y - offset` gives the same
    /// curve as ridge regression over every individual sample.
    pub fn fit(centers: &[f64], means: &[f64], counts: &[usize], lengthscale: f64, ridge: f64) -> Result<Self> {
        let n = centers.len();
        let total: usize = counts.iter().sum();
        let offset = means
            .iter()
            .zip(counts)
            .map(|(m, c)| m * *c as f64)
            .sum::<f64>()
            / total as f64;
        let k = DMatrix::from_fn(n, n, |i, j| {
            rbf(centers[i], centers[j], lengthscale) + if i == j { ridge / counts[i] as f64 } else { 0.0 }
        });
        let rhs = DVector::from_iterator(n, means.iter().map(|m| m - offset));
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::InsufficientData("kernel matrix is not positive definite".into()))?;
        let coeffs = chol.solve(&rhs);
        Ok(KernelCurve {
            centers: centers.to_vec(),
            coeffs: coeffs.iter().copied().collect(),
            offset,
            lengthscale,
            ridge,
        })
    }

    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let l2 = self.lengthscale * self.lengthscale;
        let mut value = self.offset;
        let mut deriv = 0.0;
        for (c, a) in self.centers.iter().zip(&self.coeffs) {
            let kv = a * rbf(x, *c, self.lengthscale);
            value += kv;
            deriv -= kv * (x - c) / l2;
        }
        (value, deriv)
    }
}

fn rbf(a: f64, b: f64, lengthscale: f64) -> f64 {
    let d = (a - b) / lengthscale;
    (-0.5 * d * d).exp()
}

/// A fitted smooth scalar curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    Kernel(KernelCurve),
    /// Monotone re-smoothing used when the kernel fit violated monotonicity.
    Monotone(MonotoneCubic),
}

impl Curve {
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        match self {
            Curve::Kernel(k) => k.eval_with_derivative(x),
            Curve::Monotone(m) => m.eval_with_derivative(x),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }
}

/// Replace `curve` by a non-decreasing curve on `[lo, hi]` if it is not one already.
fn enforce_monotone(curve: KernelCurve, lo: f64, hi: f64) -> Result<(Curve, bool)> {
    let grid: Vec<f64> = (0..MONOTONE_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / (MONOTONE_GRID - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|x| curve.eval_with_derivative(*x).0).collect();
    if values.windows(2).all(|w| w[1] >= w[0]) {
        return Ok((Curve::Kernel(curve), false));
    }
    let projected = isotonic_increasing(&values);
    Ok((Curve::Monotone(MonotoneCubic::new(grid, projected)?), true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Fraction of held-out samples with |residual - mean| <= std.
    pub held_out_coverage: f64,
    pub n_train: usize,
    pub n_held_out: usize,
    pub mean_projected: bool,
    pub std_projected: bool,
}

/// Fitted motion-induced noise: mean `mu_M(V)` and standard deviation `sigma_M(V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionUncertaintyModel {
    pub mean_fn: Curve,
    /// ln sigma_M^2 as a function of speed.
    pub log_variance_fn: Curve,
    pub train_domain: (f64, f64),
    pub fit_report: FitReport,
}

impl MotionUncertaintyModel {
    /// Speed-independent noise; handy for isolating the geometric part of the FIM.
    pub fn constant(mean: f64, std: f64, train_domain: (f64, f64)) -> Self {
        let flat = |value: f64| {
            Curve::Kernel(KernelCurve {
                centers: Vec::new(),
                coeffs: Vec::new(),
                offset: value,
                lengthscale: 1.0,
                ridge: RIDGE,
            })
        };
        MotionUncertaintyModel {
            mean_fn: flat(mean),
            log_variance_fn: flat((std * std).ln()),
            train_domain,
            fit_report: FitReport {
                held_out_coverage: 0.0,
                n_train: 0,
                n_held_out: 0,
                mean_projected: false,
                std_projected: false,
            },
        }
    }

    fn clamp(&self, v: f64) -> (f64, bool) {
        let (lo, hi) = self.train_domain;
        if v < lo {
            (lo, true)
        } else if v > hi {
            (hi, true)
        } else {
            (v, false)
        }
    }

    /// `(mu_M, d mu_M / dV)`; the derivative is zero where `v` is clamped.
    pub fn mean_with_derivative(&self, v: f64) -> (f64, f64) {
        let (vc, clamped) = self.clamp(v);
        let (m, dm) = self.mean_fn.eval_with_derivative(vc);
        (m, if clamped { 0.0 } else { dm })
    }

    /// `(sigma_M, d sigma_M / dV)`; the derivative is zero where `v` is clamped.
    pub fn std_with_derivative(&self, v: f64) -> (f64, f64) {
        let (vc, clamped) = self.clamp(v);
        let (g, dg) = self.log_variance_fn.eval_with_derivative(vc);
        let s = (0.5 * g).exp();
        (s, if clamped { 0.0 } else { 0.5 * s * dg })
    }

    pub fn mean(&self, v: f64) -> f64 {
        self.mean_with_derivative(v).0
    }

    pub fn std(&self, v: f64) -> f64 {
        self.std_with_derivative(v).0
    }

    /// Fraction of `data` whose residual lies within one standard deviation of the mean.
    pub fn coverage(&self, data: &[UncertaintySample]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .iter()
            .filter(|s| (s.residual - self.mean(s.v)).abs() <= self.std(s.v))
            .count();
        hits as f64 / data.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct SpeedGroups {
    speeds: Vec<f64>,
    means: Vec<f64>,
    counts: Vec<usize>,
}

fn group_by_speed(samples: &[UncertaintySample], value: impl Fn(&UncertaintySample) -> f64) -> SpeedGroups {
    let mut sorted: Vec<(f64, f64)> = samples.iter().map(|s| (s.v, value(s))).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups = SpeedGroups {
        speeds: Vec::new(),
        means: Vec::new(),
        counts: Vec::new(),
    };
    for (v, y) in sorted {
        if groups.speeds.last() == Some(&v) {
            let k = groups.speeds.len() - 1;
            groups.means[k] += y;
            groups.counts[k] += 1;
        } else {
            groups.speeds.push(v);
            groups.means.push(y);
            groups.counts.push(1);
        }
    }
    for (m, c) in groups.means.iter_mut().zip(&groups.counts) {
        *m /= *c as f64;
    }
    groups
}

/// Mean curve, log-variance curve, training range, and whether each curve was projected.
type FittedCurves = (Curve, Curve, (f64, f64), bool, bool);

fn fit_curves(train: &[UncertaintySample]) -> Result<FittedCurves> {
    let mean_groups = group_by_speed(train, |s| s.residual);
    if mean_groups.speeds.len() < 2 {
        return Err(Error::InsufficientSpeedDiversity(mean_groups.speeds.len()));
    }
    let lo = mean_groups.speeds[0];
    let hi = *mean_groups.speeds.last().unwrap();
    let lengthscale = (hi - lo) / 4.0;

    let mean_kernel = KernelCurve::fit(
        &mean_groups.speeds,
        &mean_groups.means,
        &mean_groups.counts,
        lengthscale,
        RIDGE,
    )?;
    let (mean_fn, mean_projected) = enforce_monotone(mean_kernel, lo, hi)?;

    let log_groups = group_by_speed(train, |s| {
        let r = s.residual - mean_fn.eval(s.v);
        (r * r).max(MIN_SQUARED_RESIDUAL).ln()
    });
    let mut log_kernel = KernelCurve::fit(
        &log_groups.speeds,
        &log_groups.means,
        &log_groups.counts,
        lengthscale,
        RIDGE,
    )?;
    log_kernel.offset -= LOG_CHI2_1_MEAN;
    let (log_variance_fn, std_projected) = enforce_monotone(log_kernel, lo, hi)?;
    Ok((mean_fn, log_variance_fn, (lo, hi), mean_projected, std_projected))
}

/// Fit the motion noise model; every fifth sample is held out for the coverage report.
pub fn fit_motion_model(data: &[UncertaintySample]) -> Result<MotionUncertaintyModel> {
    if data.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need >= 10 samples, got {}",
            data.len()
        )));
    }
    if data.iter().any(|s| !s.v.is_finite() || s.v < 0.0 || !s.residual.is_finite()) {
        return Err(Error::InsufficientData("samples must be finite with v >= 0".into()));
    }
    let distinct = group_by_speed(data, |s| s.residual).speeds.len();
    if distinct < 2 {
        return Err(Error::InsufficientSpeedDiversity(distinct));
    }
    let (train, held_out): (Vec<_>, Vec<_>) = data
        .iter()
        .enumerate()
        .partition(|(i, _)| i % 5 != 4);
    let train: Vec<UncertaintySample> = train.into_iter().map(|(_, s)| *s).collect();
    let held_out: Vec<UncertaintySample> = held_out.into_iter().map(|(_, s)| *s).collect();

    let (mean_fn, log_variance_fn, train_domain, mean_projected, std_projected) = fit_curves(&train)?;
    let mut model = MotionUncertaintyModel {
        mean_fn,
        log_variance_fn,
        train_domain,
        fit_report: FitReport {
            held_out_coverage: 0.0,
            n_train: train.len(),
            n_held_out: held_out.len(),
            mean_projected,
            std_projected,
        },
    };
    model.fit_report.held_out_coverage = model.coverage(&held_out);
    Ok(model)
}

/// Range-dependent noise `sigma_D(d) = k_d * d`; its mean is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceUncertaintyModel {
    pub k_d: f64,
}

impl Default for DistanceUncertaintyModel {
    fn default() -> Self {
        DistanceUncertaintyModel { k_d: 0.001 }
    }
}

impl DistanceUncertaintyModel {
    pub fn mu_d(&self) -> f64 {
        0.0
    }

    pub fn sigma_d(&self, d: f64) -> f64 {
        self.k_d * d
    }

    pub fn sigma_d_derivative(&self, _d: f64) -> f64 {
        self.k_d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorNoise {
    pub mu_sens: f64,
    pub sigma_sens: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDerivatives {
    pub dmu_dv: f64,
    pub dsigma_dv: f64,
    pub dsigma_dd: f64,
}

/// Motion and distance models together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModels {
    pub motion: MotionUncertaintyModel,
    pub distance: DistanceUncertaintyModel,
}

impl UncertaintyModels {
    /// Fit on the reference law (500 samples per reference speed).
    pub fn reference(seed: u64) -> Self {
        let data = generate_reference_dataset(500, &REFERENCE_SPEEDS, seed).expect("valid reference args");
        UncertaintyModels {
            motion: fit_motion_model(&data).expect("reference data is well-posed"),
            distance: DistanceUncertaintyModel::default(),
        }
    }

    pub fn noise(&self, v: f64, d: f64) -> SensorNoise {
        sensor_noise(&self.motion, &self.distance, v, d)
    }

    pub fn derivatives(&self, v: f64, d: f64) -> NoiseDerivatives {
        noise_derivatives(&self.motion, &self.distance, v, d)
    }
}

/// Speed-dependent terms of the noise, evaluated once per state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionTerms {
    pub mu: f64,
    pub dmu_dv: f64,
    pub sigma: f64,
    pub dsigma_dv: f64,
}

impl MotionTerms {
    pub fn at(model: &MotionUncertaintyModel, v: f64) -> Self {
        let (mu, dmu_dv) = model.mean_with_derivative(v);
        let (sigma, dsigma_dv) = model.std_with_derivative(v);
        MotionTerms {
            mu,
            dmu_dv,
            sigma,
            dsigma_dv,
        }
    }

    /// Combine with the range term at distance `d`.
    pub fn with_range(&self, model_d: &DistanceUncertaintyModel, d: f64) -> (SensorNoise, NoiseDerivatives) {
        let sd = model_d.sigma_d(d);
        let sigma = (sd * sd + self.sigma * self.sigma).sqrt();
        (
            SensorNoise {
                mu_sens: model_d.mu_d() + self.mu,
                sigma_sens: sigma,
            },
            NoiseDerivatives {
                dmu_dv: self.dmu_dv,
                dsigma_dv: self.sigma * self.dsigma_dv / sigma,
                dsigma_dd: sd * model_d.sigma_d_derivative(d) / sigma,
            },
        )
    }
}

/// Combined sensor noise: `mu = mu_M(v)`, `sigma^2 = sigma_D(d)^2 + sigma_M(v)^2`.
pub fn sensor_noise(
    model_m: &MotionUncertaintyModel,
    model_d: &DistanceUncertaintyModel,
    v: f64,
    d: f64,
) -> SensorNoise {
    let sd = model_d.sigma_d(d);
    let sm = model_m.std(v);
    SensorNoise {
        mu_sens: model_d.mu_d() + model_m.mean(v),
        sigma_sens: (sd * sd + sm * sm).sqrt(),
    }
}

/// Analytic partials of `mu_sens` and `sigma_sens` with respect to speed and range.
pub fn noise_derivatives(
    model_m: &MotionUncertaintyModel,
    model_d: &DistanceUncertaintyModel,
    v: f64,
    d: f64,
) -> NoiseDerivatives {
    let (_, dmu_dv) = model_m.mean_with_derivative(v);
    let (sm, dsm) = model_m.std_with_derivative(v);
    let sd = model_d.sigma_d(d);
    let sigma = (sd * sd + sm * sm).sqrt();
    NoiseDerivatives {
        dmu_dv,
        dsigma_dv: sm * dsm / sigma,
        dsigma_dd: sd * model_d.sigma_d_derivative(d) / sigma,
    }
}
