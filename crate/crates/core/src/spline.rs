//! Natural cubic spline smoothing of tree nodes with arc-length lookup.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::types::{Point, UavState};

// 5-point Gauss-Legendre nodes and weights on [-1, 1]
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683,
    0.538_469_310_105_683,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
    0.236_926_885_056_189,
];

/// One cubic piece, `p(t) = c0 + c1 t + c2 t^2 + c3 t^3` for `t` in `[0, h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub h: f64,
    pub x: [f64; 4],
    pub y: [f64; 4],
}

impl Span {
    pub fn point(&self, t: f64) -> Point {
        let p = |c: &[f64; 4]| c[0] + t * (c[1] + t * (c[2] + t * c[3]));
        Point::new(p(&self.x), p(&self.y))
    }

    pub fn tangent(&self, t: f64) -> Vector2<f64> {
        let d = |c: &[f64; 4]| c[1] + t * (2.0 * c[2] + 3.0 * t * c[3]);
        Vector2::new(d(&self.x), d(&self.y))
    }

    fn speed(&self, t: f64) -> f64 {
        self.tangent(t).norm()
    }

    /// Arc length over `[t0, t1]` by 5-point Gauss-Legendre quadrature.
    pub fn length_between(&self, t0: f64, t1: f64) -> f64 {
        let half = 0.5 * (t1 - t0);
        let mid = 0.5 * (t1 + t0);
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Arc-length parameterized planar curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPath {
    pub spans: Vec<Span>,
    /// Chord-length knot parameter at the start of each span, plus the end.
    pub knots: Vec<f64>,
    /// Cumulative arc length at each knot; strictly increasing, starts at 0.
    pub length_table: Vec<f64>,
    /// Per span, cumulative length at `PANELS` equal parameter steps.
    panel_table: Vec<[f64; PANELS + 1]>,
}

// each span is integrated as a composite of Gauss-Legendre panels so sharp
// turns inside one span stay accurate
const PANELS: usize = 16;

fn natural_second_derivatives(knots: &[f64], values: &[f64]) -> Vec<f64> {
    let n = knots.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        upper[i] = h[i + 1];
        rhs[i] = 6.0 * ((values[i + 2] - values[i + 1]) / h[i + 1] - (values[i + 1] - values[i]) / h[i]);
    }
    for i in 1..k {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
    }
    m
}

fn span_coeffs(h: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> [f64; 4] {
    [
        y0,
        (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0,
        0.5 * m0,
        (m1 - m0) / (6.0 * h),
    ]
}

/// Interpolating natural cubic spline through `control_points` with chord-length knots.
pub fn smooth(control_points: &[Point]) -> Result<SmoothPath> {
    if control_points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: control_points.len(),
        });
    }
    let mut knots = vec![0.0];
    for (i, w) in control_points.windows(2).enumerate() {
        let chord = (w[1] - w[0]).norm();
        if !(chord > 1e-9) {
            return Err(Error::DuplicatePoints(i + 1));
        }
        knots.push(knots[i] + chord);
    }
    let xs: Vec<f64> = control_points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = control_points.iter().map(|p| p.y).collect();
    let mx = natural_second_derivatives(&knots, &xs);
    let my = natural_second_derivatives(&knots, &ys);
    let spans: Vec<Span> = (0..control_points.len() - 1)
        .map(|k| {
            let h = knots[k + 1] - knots[k];
            Span {
                h,
                x: span_coeffs(h, xs[k], xs[k + 1], mx[k], mx[k + 1]),
                y: span_coeffs(h, ys[k], ys[k + 1], my[k], my[k + 1]),
            }
        })
        .collect();
    Ok(SmoothPath::from_spans(spans, knots))
}

/// Smooth all control points but keep only the final span (last two points).
pub fn smooth_last_span(control_points: &[Point]) -> Result<SmoothPath> {
    Ok(smooth(control_points)?.tail(1))
}

impl SmoothPath {
    fn from_spans(spans: Vec<Span>, knots: Vec<f64>) -> Self {
        let mut length_table = Vec::with_capacity(spans.len() + 1);
        let mut panel_table = Vec::with_capacity(spans.len());
        length_table.push(0.0);
        for s in &spans {
            let mut panels = [0.0; PANELS + 1];
            let w = s.h / PANELS as f64;
            for j in 0..PANELS {
                panels[j + 1] = panels[j] + s.length_between(w * j as f64, w * (j + 1) as f64);
            }
            let last = *length_table.last().unwrap();
            length_table.push(last + panels[PANELS]);
            panel_table.push(panels);
        }
        SmoothPath {
            spans,
            knots,
            length_table,
            panel_table,
        }
    }

    /// Keep only the last `n` spans.
    pub fn tail(self, n: usize) -> SmoothPath {
        let skip = self.spans.len().saturating_sub(n);
        let spans = self.spans[skip..].to_vec();
        let knots = self.knots[skip..].to_vec();
        SmoothPath::from_spans(spans, knots)
    }

    pub fn total_length(&self) -> f64 {
        *self.length_table.last().unwrap()
    }

    pub fn start(&self) -> Point {
        self.spans[0].point(0.0)
    }

    pub fn end(&self) -> Point {
        let s = self.spans.last().unwrap();
        s.point(s.h)
    }

    fn locate_param(&self, u: f64) -> (usize, f64) {
        let n = self.spans.len();
        let i = self.knots.partition_point(|k| *k <= u).clamp(1, n) - 1;
        (i, (u - self.knots[i]).clamp(0.0, self.spans[i].h))
    }

    /// Position at knot parameter `u` (clamped to the path).
    pub fn point_at_param(&self, u: f64) -> Point {
        let (i, t) = self.locate_param(u);
        self.spans[i].point(t)
    }

    /// Derivative of position with respect to the knot parameter.
    pub fn tangent_at_param(&self, u: f64) -> Vector2<f64> {
        let (i, t) = self.locate_param(u);
        self.spans[i].tangent(t)
    }

    /// Span index and local parameter at arc length `s`.
    pub fn param_at_length(&self, s: f64) -> (usize, f64) {
        let total = self.total_length();
        let s = s.clamp(0.0, total);
        let n = self.spans.len();
        let i = self.length_table.partition_point(|l| *l <= s).clamp(1, n) - 1;
        let span = &self.spans[i];
        let panels = &self.panel_table[i];
        let target = s - self.length_table[i];
        if target <= 0.0 {
            return (i, 0.0);
        }
        if target >= panels[PANELS] {
            return (i, span.h);
        }
        let j = panels.partition_point(|l| *l <= target).clamp(1, PANELS) - 1;
        let w = span.h / PANELS as f64;
        let t0 = w * j as f64;
        let target = target - panels[j];
        let panel_len = panels[j + 1] - panels[j];
        // bisection bracket with Newton steps where they stay inside it
        let (mut lo, mut hi) = (t0, t0 + w);
        let mut t = t0 + w * target / panel_len;
        for _ in 0..60 {
            let f = span.length_between(t0, t) - target;
            if f.abs() < 1e-12 {
                break;
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let speed = span.speed(t);
            let newton = t - f / speed;
            t = if speed > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-13 * span.h {
                break;
            }
        }
        (i, t)
    }

    pub fn point_at_length(&self, s: f64) -> Point {
        let (i, t) = self.param_at_length(s);
        self.spans[i].point(t)
    }
}

/// Constant-acceleration ramp from `v_cur` to `v_tmp`, then cruise at `v_tmp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityProfile {
    pub v_cur: f64,
    pub v_tmp: f64,
    pub a_max: f64,
}

impl VelocityProfile {
    pub fn ramp_time(&self) -> f64 {
        (self.v_tmp - self.v_cur).abs() / self.a_max
    }

    pub fn ramp_distance(&self) -> f64 {
        crate::energy::ramp_distance(self.v_cur, self.v_tmp, self.a_max)
    }

    fn accel(&self) -> f64 {
        (self.v_tmp - self.v_cur).signum() * self.a_max
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        if t >= self.ramp_time() {
            self.v_tmp
        } else {
            self.v_cur + self.accel() * t
        }
    }

    pub fn distance_at(&self, t: f64) -> f64 {
        let tr = self.ramp_time();
        if t <= tr {
            self.v_cur * t + 0.5 * self.accel() * t * t
        } else {
            self.ramp_distance() + self.v_tmp * (t - tr)
        }
    }

    /// Time to cover `length` meters; fails if the ramp alone is longer.
    pub fn duration(&self, length: f64) -> Result<f64> {
        let ramp = self.ramp_distance();
        if ramp > length * (1.0 + 1e-12) {
            return Err(Error::RampTooLong {
                needed: ramp,
                available: length,
            });
        }
        Ok(self.ramp_time() + (length - ramp).max(0.0) / self.v_tmp)
    }
}

/// States along `path` every `dt` seconds under `profile`; the last state sits
/// exactly at the path end. Times start at zero.
pub fn sample_states(path: &SmoothPath, profile: VelocityProfile, dt: f64) -> Result<Vec<UavState>> {
    let length = path.total_length();
    let total = profile.duration(length)?;
    let mut states = Vec::with_capacity((total / dt) as usize + 2);
    let mut k = 0usize;
    loop {
        let t = k as f64 * dt;
        if t >= total - 1e-9 * dt.max(1.0) {
            break;
        }
        let s = profile.distance_at(t).min(length);
        let p = path.point_at_length(s);
        states.push(UavState::new(p.x, p.y, profile.speed_at(t)).with_time(t));
        k += 1;
    }
    if states.is_empty() {
        let p = path.start();
        states.push(UavState::new(p.x, p.y, profile.v_cur));
    }
    let end = path.end();
    states.push(UavState::new(end.x, end.y, profile.speed_at(total)).with_time(total.max(states.last().unwrap().t + 1e-12)));
    Ok(states)
}
