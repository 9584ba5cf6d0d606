//! Domain types shared by every module.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Point2<f64>;

/// Planning state: horizontal position, speed, and the (inert) gimbal angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub x: f64,
    pub y: f64,
    /// Horizontal speed along the path tangent, m/s.
    pub v: f64,
    /// Gimbal roll. Carried but never read by the planner.
    #[serde(default)]
    pub theta_r: f64,
    /// Gimbal pitch. Carried but never read by the planner.
    #[serde(default)]
    pub theta_p: f64,
    /// Seconds since the start of the owning trajectory (or segment).
    #[serde(default)]
    pub t: f64,
}

impl UavState {
    pub fn new(x: f64, y: f64, v: f64) -> Self {
        Self {
            x,
            y,
            v,
            theta_r: 0.0,
            theta_p: 0.0,
            t: 0.0,
        }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Same position and speed (the planner's notion of "same tip state").
    pub fn same_tip(&self, other: &UavState, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol
            && (self.y - other.y).abs() <= tol
            && (self.v - other.v).abs() <= tol
    }
}

/// Scalar reduction applied to a Fisher information matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Smallest eigenvalue of the 2x2 position block.
    #[default]
    MinEigenvalue,
    /// Determinant of the 2x2 position block.
    Determinant,
    /// Smallest eigenvalue of the full (x, y, V) matrix.
    FullMinEigenvalue,
    /// Determinant of the full (x, y, V) matrix.
    FullDeterminant,
}

/// Planner configuration. Sampling knobs (`max_samples`, `near_radius_gamma`,
/// `step_len`, `goal_bias`) are tuned for the bundled scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub alpha_p: f64,
    pub alpha_e: f64,
    pub r_max: f64,
    pub r_min: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub v_max: f64,
    pub v_min: f64,
    pub p_max: f64,
    pub a_max: f64,
    pub max_samples: usize,
    pub goal_bias: f64,
    pub near_radius_gamma: f64,
    pub step_len: f64,
    pub dt: f64,
    pub n_vel_candidates: usize,
    pub epsilon_fim: f64,
    pub rng_seed: u64,
    /// Number of ancestors (besides the parent) used as spline control points.
    pub smoothing_window: usize,
    pub fim_metric: MetricKind,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            alpha_p: 4.0,
            alpha_e: 1.0,
            r_max: 41.0,
            r_min: 5.0,
            n_r: 6,
            n_theta: 12,
            v_max: 10.0,
            v_min: 1.0,
            p_max: 600.0,
            a_max: 1.0,
            max_samples: 1000,
            goal_bias: 0.1,
            near_radius_gamma: 200.0,
            step_len: 12.0,
            dt: 0.1,
            n_vel_candidates: 10,
            epsilon_fim: 1e-3,
            rng_seed: 0,
            smoothing_window: 4,
            fim_metric: MetricKind::MinEigenvalue,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, reason: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(format!("params.{field}"), reason))
            }
        };
        let finite = [
            ("alpha_p", self.alpha_p),
            ("alpha_e", self.alpha_e),
            ("r_max", self.r_max),
            ("r_min", self.r_min),
            ("v_max", self.v_max),
            ("v_min", self.v_min),
            ("p_max", self.p_max),
            ("a_max", self.a_max),
            ("goal_bias", self.goal_bias),
            ("near_radius_gamma", self.near_radius_gamma),
            ("step_len", self.step_len),
            ("dt", self.dt),
            ("epsilon_fim", self.epsilon_fim),
        ];
        for (name, value) in finite {
            check(value.is_finite(), name, "must be finite")?;
        }
        check(self.alpha_p >= 0.0, "alpha_p", "must be >= 0")?;
        check(self.alpha_e >= 0.0, "alpha_e", "must be >= 0")?;
        check(self.r_min >= 0.0, "r_min", "must be >= 0")?;
        check(self.r_min < self.r_max, "r_max", "must exceed r_min")?;
        check(self.n_r >= 1, "n_r", "must be >= 1")?;
        check(self.n_theta >= 3, "n_theta", "must be >= 3")?;
        check(self.v_min > 0.0, "v_min", "must be > 0")?;
        check(self.v_min < self.v_max, "v_max", "must exceed v_min")?;
        check(self.p_max > 0.0, "p_max", "must be > 0")?;
        check(self.a_max > 0.0, "a_max", "must be > 0")?;
        check(self.dt > 0.0, "dt", "must be > 0")?;
        check(self.epsilon_fim > 0.0, "epsilon_fim", "must be > 0")?;
        check(self.step_len > 0.0, "step_len", "must be > 0")?;
        check(self.near_radius_gamma > 0.0, "near_radius_gamma", "must be > 0")?;
        check(
            (0.0..=1.0).contains(&self.goal_bias),
            "goal_bias",
            "must lie in [0, 1]",
        )?;
        check(self.n_vel_candidates >= 1, "n_vel_candidates", "must be >= 1")?;
        check(self.max_samples >= 1, "max_samples", "must be >= 1")?;
        Ok(())
    }

    /// Candidate cruise speeds, evenly spaced over `[v_min, v_max]`.
    pub fn velocity_candidates(&self) -> Vec<f64> {
        let n = self.n_vel_candidates;
        if n == 1 {
            return vec![self.v_min];
        }
        let step = (self.v_max - self.v_min) / (n - 1) as f64;
        (0..n).map(|i| self.v_min + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
}

/// Obstacle disc, serialized as `[cx, cy, r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Obstacle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl From<[f64; 3]> for Obstacle {
    fn from(v: [f64; 3]) -> Self {
        Obstacle {
            cx: v[0],
            cy: v[1],
            radius: v[2],
        }
    }
}

impl From<Obstacle> for [f64; 3] {
    fn from(o: Obstacle) -> Self {
        [o.cx, o.cy, o.radius]
    }
}

impl Obstacle {
    pub fn contains(&self, p: &Point) -> bool {
        let dx = p.x - self.cx;
        let dy = p.y - self.cy;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Feature points (the SLAM landmarks) plus optional obstacle discs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub features: Vec<Point>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub bounds: Bounds,
}

impl FeatureMap {
    pub fn new(features: Vec<Point>, obstacles: Vec<Obstacle>, bounds: Bounds) -> Result<Self> {
        let map = FeatureMap {
            features,
            obstacles,
            bounds,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn empty(bounds: Bounds) -> Self {
        FeatureMap {
            features: Vec::new(),
            obstacles: Vec::new(),
            bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !(b.xmin.is_finite() && b.xmax.is_finite() && b.ymin.is_finite() && b.ymax.is_finite())
        {
            return Err(Error::validation("bounds", "must be finite"));
        }
        if b.xmin >= b.xmax {
            return Err(Error::validation("bounds.xmax", "must exceed xmin"));
        }
        if b.ymin >= b.ymax {
            return Err(Error::validation("bounds.ymax", "must exceed ymin"));
        }
        for (i, f) in self.features.iter().enumerate() {
            if !b.contains(f) {
                return Err(Error::validation(
                    format!("features[{i}]"),
                    "lies outside bounds",
                ));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) {
                return Err(Error::validation(
                    format!("obstacles[{i}].radius"),
                    "must be > 0",
                ));
            }
        }
        Ok(())
    }

    pub fn in_collision(&self, p: &Point) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }

    /// Subset of this map holding only features within `radius` of any of `centers`.
    pub fn revealed_by(&self, centers: &[Point], radius: f64) -> Vec<Point> {
        let r2 = radius * radius;
        self.features
            .iter()
            .filter(|f| centers.iter().any(|c| (*f - c).norm_squared() < r2))
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl GoalRegion {
    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (p - self.center()).norm() <= self.radius
    }
}

/// One spline-smoothed piece of the plan tree, ending at a tip state.
///
/// State times are local to the segment (the first state has `t = 0`); they are
/// re-stamped when a [`Trajectory`] is extracted, since rewiring can change the
/// time at which a segment starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub states: Vec<UavState>,
    pub parent_tip_index: Option<usize>,
    pub c_p: f64,
    pub c_e: f64,
    pub cost: f64,
    pub cum_cost: f64,
    pub arc_length: f64,
    /// Speed at the segment start (inherited from the parent tip).
    pub v_cur: f64,
    /// Cruise speed chosen for this segment.
    pub v_tmp: f64,
}

impl TrajectorySegment {
    pub fn tip(&self) -> &UavState {
        self.states.last().expect("segment holds at least one state")
    }

    pub fn first(&self) -> &UavState {
        &self.states[0]
    }

    pub fn duration(&self) -> f64 {
        self.tip().t - self.first().t
    }
}

/// A flattened trajectory sample with running costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub state: UavState,
    /// Scalar FIM metric at this state.
    pub metric: f64,
    pub c_p_cum: f64,
    pub c_e_cum: f64,
}

/// Root-to-goal plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub segments: Vec<TrajectorySegment>,
    /// Unique states in time order, with per-state metric and running costs.
    pub points: Vec<TrajectoryPoint>,
    pub total_energy_j: f64,
    /// Sum of the FIM metric over every state.
    pub total_perception: f64,
    pub duration_s: f64,
    pub n_samples_used: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &UavState {
        &self.points.last().expect("trajectory is non-empty").state
    }

    pub fn positions(&self) -> Vec<Point> {
        self.points.iter().map(|p| p.state.position()).collect()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.arc_length).sum()
    }
}
