//! Data-driven power models and the normalized segment energy cost.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

/// Command speeds (m/s) of the reference power dataset.
pub const POWER_SPEEDS: [f64; 6] = [1.0, 2.0, 4.0, 6.0, 8.0, 10.0];
pub const POWER_NOISE_STD: f64 = 5.0;
pub const POWER_SAMPLES_PER_SPEED: usize = 50;

/// Largest velocity step of the ramp quadrature, m/s.
pub const RAMP_QUADRATURE_STEP: f64 = 0.05;

/// Reference constant-speed power, watts.
pub fn reference_power_const(v: f64) -> f64 {
    220.0 - 14.0 * v + 2.2 * v * v
}

pub fn reference_power(mode: PowerMode, v: f64) -> f64 {
    let p = reference_power_const(v);
    match mode {
        PowerMode::Constant => p,
        PowerMode::Accel => 1.25 * p,
        PowerMode::Decel => 0.9 * p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    Constant,
    Accel,
    Decel,
}

impl PowerMode {
    pub const ALL: [PowerMode; 3] = [PowerMode::Constant, PowerMode::Accel, PowerMode::Decel];

    pub fn as_str(&self) -> &'static str {
        match self {
            PowerMode::Constant => "constant",
            PowerMode::Accel => "accel",
            PowerMode::Decel => "decel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub v: f64,
    pub mode: PowerMode,
    pub power: f64,
}

/// Samples around the reference law at every (speed, mode) pair.
pub fn generate_power_dataset(seed: u64, n_per_speed: usize, noise_std: f64) -> Vec<PowerSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("finite noise std");
    let mut out = Vec::with_capacity(POWER_SPEEDS.len() * 3 * n_per_speed);
    for mode in PowerMode::ALL {
        for &v in &POWER_SPEEDS {
            let mean = reference_power(mode, v);
            for _ in 0..n_per_speed {
                let p = mean + noise.sample(&mut rng);
                out.push(PowerSample {
                    v,
                    mode,
                    power: p.max(1e-3),
                });
            }
        }
    }
    out
}

pub fn generate_reference_power_dataset(seed: u64) -> Vec<PowerSample> {
    generate_power_dataset(seed, POWER_SAMPLES_PER_SPEED, POWER_NOISE_STD)
}

pub fn power_dataset_header(seed: u64) -> String {
    format!(
        "# reference power law v1: P_const(v)=220-14*v+2.2*v^2 W, P_acc=1.25*P_const, P_dec=0.9*P_const, noise sigma={POWER_NOISE_STD} W; seed={seed}; n_per_speed={POWER_SAMPLES_PER_SPEED}"
    )
}

pub fn write_power_dataset<W: Write>(mut w: W, header: &str, data: &[PowerSample]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "v,mode,power_w")?;
    for s in data {
        writeln!(w, "{},{},{}", s.v, s.mode.as_str(), s.power)?;
    }
    Ok(())
}

pub fn read_power_dataset<R: Read>(r: R) -> Result<Vec<PowerSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["v", "mode", "power_w"] {
        return Err(Error::Schema {
            line: reader.position().line(),
            msg: "expected columns v,mode,power_w".into(),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: &str| Error::Schema {
            line,
            msg: msg.to_string(),
        };
        let v: f64 = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .filter(|v: &f64| v.is_finite() && *v > 0.0)
            .ok_or_else(|| bad("v must be a positive number"))?;
        let mode = rec
            .get(1)
            .and_then(PowerMode::parse)
            .ok_or_else(|| bad("mode must be constant, accel or decel"))?;
        let power: f64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .filter(|p: &f64| p.is_finite() && *p > 0.0)
            .ok_or_else(|| bad("power_w must be a positive number"))?;
        out.push(PowerSample { v, mode, power });
    }
    Ok(out)
}

pub fn save_power_dataset(path: impl AsRef<Path>, header: &str, data: &[PowerSample]) -> Result<()> {
    write_power_dataset(std::io::BufWriter::new(std::fs::File::create(path)?), header, data)
}

pub fn load_power_dataset(path: impl AsRef<Path>) -> Result<Vec<PowerSample>> {
    read_power_dataset(std::fs::File::open(path)?)
}

/// Interpolated power curves per flight mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub p_const: MonotoneCubic,
    pub p_acc: MonotoneCubic,
    pub p_dec: MonotoneCubic,
    pub train_domain: (f64, f64),
}

/// Normalized energy cost and time of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentEnergy {
    /// Energy divided by `p_max` (seconds at full power).
    pub c_e: f64,
    pub duration: f64,
}

impl EnergyModel {
    pub fn reference(seed: u64) -> Self {
        fit_energy_model(&generate_reference_power_dataset(seed)).expect("reference data is well-posed")
    }

    pub fn power(&self, mode: PowerMode, v: f64) -> f64 {
        self.curve(mode).eval(v)
    }

    fn curve(&self, mode: PowerMode) -> &MonotoneCubic {
        match mode {
            PowerMode::Constant => &self.p_const,
            PowerMode::Accel => &self.p_acc,
            PowerMode::Decel => &self.p_dec,
        }
    }

    pub fn p_const_fn(&self, v: f64) -> f64 {
        self.p_const.eval(v)
    }

    /// Energy per meter at constant speed, J/m.
    pub fn e_per_dist_fn(&self, v: f64) -> f64 {
        self.p_const_fn(v) / v
    }

    /// Energy (J) spent ramping from `v_cur` to `v_end` at `a_max`, by trapezoidal
    /// quadrature over speed with steps of at most `step`.
    pub fn ramp_energy(&self, v_cur: f64, v_end: f64, a_max: f64, step: f64) -> f64 {
        let dv = v_end - v_cur;
        if dv == 0.0 {
            return 0.0;
        }
        let mode = if dv > 0.0 { PowerMode::Accel } else { PowerMode::Decel };
        let curve = self.curve(mode);
        let n = (dv.abs() / step).ceil().max(1.0) as usize;
        let h = dv / n as f64;
        let mut sum = 0.5 * (curve.eval(v_cur) + curve.eval(v_end));
        for k in 1..n {
            sum += curve.eval(v_cur + h * k as f64);
        }
        sum * h.abs() / a_max
    }

    /// Energy (J) consumed during the first `t` seconds of the ramp-then-cruise profile.
    pub fn energy_until(&self, v_cur: f64, v_tmp: f64, a_max: f64, t: f64) -> f64 {
        let t_ramp = (v_tmp - v_cur).abs() / a_max;
        if t <= t_ramp {
            let v_t = v_cur + (v_tmp - v_cur).signum() * a_max * t;
            self.ramp_energy(v_cur, v_t, a_max, RAMP_QUADRATURE_STEP)
        } else {
            self.ramp_energy(v_cur, v_tmp, a_max, RAMP_QUADRATURE_STEP)
                + self.p_const_fn(v_tmp) * (t - t_ramp)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Distance covered while ramping between two speeds at `a_max`.
pub fn ramp_distance(v_cur: f64, v_tmp: f64, a_max: f64) -> f64 {
    (v_tmp * v_tmp - v_cur * v_cur).abs() / (2.0 * a_max)
}

/// Fit shape-preserving cubic curves through the per-speed mean power of each mode.
pub fn fit_energy_model(data: &[PowerSample]) -> Result<EnergyModel> {
    let mut curves = Vec::with_capacity(3);
    for mode in PowerMode::ALL {
        let mut rows: Vec<(f64, f64)> = data
            .iter()
            .filter(|s| s.mode == mode)
            .map(|s| (s.v, s.power))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut speeds: Vec<f64> = Vec::new();
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for (v, p) in rows {
            if speeds.last() == Some(&v) {
                let last = sums.last_mut().unwrap();
                last.0 += p;
                last.1 += 1;
            } else {
                speeds.push(v);
                sums.push((p, 1));
            }
        }
        if speeds.len() < 3 {
            return Err(Error::InsufficientSpeeds {
                mode: mode.as_str().to_string(),
                found: speeds.len(),
            });
        }
        let means = sums.iter().map(|(s, n)| s / *n as f64).collect();
        curves.push(MonotoneCubic::new(speeds, means)?);
    }
    let p_dec = curves.pop().unwrap();
    let p_acc = curves.pop().unwrap();
    let p_const = curves.pop().unwrap();
    let lo = p_const.domain().0.max(p_acc.domain().0).max(p_dec.domain().0);
    let hi = p_const.domain().1.min(p_acc.domain().1).min(p_dec.domain().1);
    Ok(EnergyModel {
        p_const,
        p_acc,
        p_dec,
        train_domain: (lo, hi),
    })
}

/// Normalized energy of a segment of length `d` flown as a constant-acceleration
/// ramp from `v_cur` to `v_tmp` followed by a cruise at `v_tmp`.
pub fn segment_energy_cost(
    model: &EnergyModel,
    v_cur: f64,
    v_tmp: f64,
    d: f64,
    a_max: f64,
    p_max: f64,
) -> Result<SegmentEnergy> {
    if !(v_cur > 0.0 && v_tmp > 0.0) {
        return Err(Error::validation("velocity", "must be > 0"));
    }
    if !(d > 0.0) {
        return Err(Error::validation("d", "segment length must be > 0"));
    }
    let ramp = ramp_distance(v_cur, v_tmp, a_max);
    if ramp > d * (1.0 + 1e-12) {
        return Err(Error::RampTooLong {
            needed: ramp,
            available: d,
        });
    }
    let d_cruise = (d - ramp).max(0.0);
    let ramp_energy = model.ramp_energy(v_cur, v_tmp, a_max, RAMP_QUADRATURE_STEP);
    let cruise_energy = model.p_const_fn(v_tmp) / v_tmp * d_cruise;
    Ok(SegmentEnergy {
        c_e: (ramp_energy + cruise_energy) / p_max,
        duration: (v_tmp - v_cur).abs() / a_max + d_cruise / v_tmp,
    })
}
