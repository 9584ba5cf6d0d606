//! Scenario files and the bundled scenarios.
//!
//! A scenario file is JSON:
//!
//! ```json
//! {
//!   "features": [[x, y], ...],
//!   "obstacles": [[cx, cy, r], ...],
//!   "start": {"x": 0.0, "y": 0.0, "v": 1.0},
//!   "goal": {"cx": 240.0, "cy": 0.0, "radius": 10.0},
//!   "params": {"alpha_p": 4.0, ...},
//!   "bounds": {"xmin": -20.0, "xmax": 260.0, "ymin": -110.0, "ymax": 120.0}
//! }
//! ```
//!
//! `obstacles`, `params` (and any field inside it) and `start.v` are optional.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Bounds, FeatureMap, GoalRegion, Obstacle, PlannerParams, Point, UavState};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub map: FeatureMap,
    pub start: UavState,
    pub goal: GoalRegion,
    pub params: PlannerParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct StartFile {
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    features: Vec<Point>,
    #[serde(default)]
    obstacles: Vec<Obstacle>,
    start: StartFile,
    goal: GoalRegion,
    #[serde(default)]
    params: PlannerParams,
    bounds: Bounds,
}

impl Scenario {
    pub fn new(
        id: impl Into<String>,
        map: FeatureMap,
        start: UavState,
        goal: GoalRegion,
        params: PlannerParams,
    ) -> Result<Self> {
        let s = Scenario {
            id: id.into(),
            map,
            start,
            goal,
            params,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.map.validate()?;
        if !(self.goal.radius > 0.0) {
            return Err(Error::validation("goal.radius", "must be > 0"));
        }
        if !self.goal.cx.is_finite() || !self.goal.cy.is_finite() {
            return Err(Error::validation("goal", "center must be finite"));
        }
        let p = self.start.position();
        if !self.map.bounds.contains(&p) {
            return Err(Error::validation("start", "lies outside bounds"));
        }
        let v = self.start.v;
        if !(v >= self.params.v_min && v <= self.params.v_max) {
            return Err(Error::validation("start.v", "must lie in [v_min, v_max]"));
        }
        if self.map.in_collision(&p) {
            return Err(Error::validation("start", "lies inside an obstacle"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let start_v = file.start.v.unwrap_or(file.params.v_min);
        let scenario = Scenario {
            id: file.id.unwrap_or_else(|| "scenario".to_string()),
            map: FeatureMap {
                features: file.features,
                obstacles: file.obstacles,
                bounds: file.bounds,
            },
            start: UavState::new(file.start.x, file.start.y, start_v),
            goal: file.goal,
            params: file.params,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ScenarioFile {
            id: Some(self.id.clone()),
            features: self.map.features.clone(),
            obstacles: self.map.obstacles.clone(),
            start: StartFile {
                x: self.start.x,
                y: self.start.y,
                v: Some(self.start.v),
            },
            goal: self.goal,
            params: self.params.clone(),
            bounds: self.map.bounds,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn with_alpha_p(mut self, alpha_p: f64) -> Self {
        self.params.alpha_p = alpha_p;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.params.rng_seed = seed;
        self
    }
}

/// Read and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_json(&text)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scenario.to_json()?)?;
    Ok(())
}

/// Names accepted by [`bundled`].
pub const BUNDLED: [&str; 3] = ["scenario1", "scenario2", "validation"];

/// Look up a bundled scenario by name.
pub fn bundled(name: &str) -> Option<Scenario> {
    match name {
        "scenario1" => Some(scenario1()),
        "scenario2" => Some(scenario2()),
        "validation" => Some(validation()),
        _ => None,
    }
}

const LAYOUT_SEED: u64 = 0x5eed_f00d;

fn common_bounds() -> Bounds {
    Bounds {
        xmin: -20.0,
        xmax: 260.0,
        ymin: -110.0,
        ymax: 120.0,
    }
}

fn common_goal() -> GoalRegion {
    GoalRegion {
        cx: 240.0,
        cy: 0.0,
        radius: 10.0,
    }
}

fn jittered_line(rng: &mut ChaCha8Rng, a: Point, b: Point, spacing: f64, out: &mut Vec<Point>) {
    let len = (b - a).norm();
    let n = (len / spacing).round().max(1.0) as usize;
    let normal = {
        let d = (b - a) / len;
        nalgebra::Vector2::new(-d.y, d.x)
    };
    for i in 0..=n {
        let p = a + (b - a) * (i as f64 / n as f64);
        // two rows: the wall face and a slightly recessed row
        for row in [0.0, 2.0] {
            let jitter = rng.random_range(-0.8..0.8);
            out.push(p + normal * (row + jitter));
        }
    }
}

fn cluster(rng: &mut ChaCha8Rng, c: Point, radius: f64, n: usize, out: &mut Vec<Point>) {
    for _ in 0..n {
        let r = radius * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..2.0 * PI);
        out.push(Point::new(c.x + r * a.cos(), c.y + r * a.sin()));
    }
}

/// L-shaped feature wall north of the direct line.
pub fn scenario1() -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(LAYOUT_SEED);
    let mut features = Vec::new();
    jittered_line(
        &mut rng,
        Point::new(40.0, 10.0),
        Point::new(40.0, 75.0),
        3.0,
        &mut features,
    );
    jittered_line(
        &mut rng,
        Point::new(43.0, 75.0),
        Point::new(220.0, 75.0),
        3.0,
        &mut features,
    );
    let map = FeatureMap::new(features, Vec::new(), common_bounds()).expect("valid layout");
    Scenario::new(
        "scenario1",
        map,
        UavState::new(0.0, 0.0, 1.0),
        common_goal(),
        PlannerParams::default(),
    )
    .expect("valid scenario")
}

/// Two feature clusters on opposite sides of the direct line.
pub fn scenario2() -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(LAYOUT_SEED + 1);
    let mut features = Vec::new();
    cluster(&mut rng, Point::new(80.0, 60.0), 12.0, 45, &mut features);
    cluster(&mut rng, Point::new(160.0, -60.0), 12.0, 45, &mut features);
    let map = FeatureMap::new(features, Vec::new(), common_bounds()).expect("valid layout");
    Scenario::new(
        "scenario2",
        map,
        UavState::new(0.0, 0.0, 1.0),
        common_goal(),
        PlannerParams::default(),
    )
    .expect("valid scenario")
}

/// Sparse feature clusters along a curved detour; the straight line between
/// start and goal is out of sensor range for most of its length.
pub fn validation() -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(LAYOUT_SEED + 2);
    let mut features = Vec::new();
    // circular arc through start, goal and (120, 70)
    let sagitta = 70.0;
    let half_chord = 120.0;
    let radius = (half_chord * half_chord + sagitta * sagitta) / (2.0 * sagitta);
    let center = Point::new(half_chord, sagitta - radius);
    let a0 = (0.0 - center.y).atan2(0.0 - center.x);
    let a1 = (0.0 - center.y).atan2(240.0 - center.x);
    let arc_len = radius * (a0 - a1);
    let spacing = 20.0;
    let n = (arc_len / spacing).round() as usize;
    for i in 0..=n {
        let a = a0 - (a0 - a1) * i as f64 / n as f64;
        let offset = if i % 2 == 0 { 10.0 } else { -10.0 };
        let r = radius + offset;
        let c = Point::new(center.x + r * a.cos(), center.y + r * a.sin());
        cluster(&mut rng, c, 4.0, 4, &mut features);
    }
    let map = FeatureMap::new(features, Vec::new(), common_bounds()).expect("valid layout");
    Scenario::new(
        "validation",
        map,
        UavState::new(0.0, 0.0, 1.0),
        common_goal(),
        PlannerParams::default(),
    )
    .expect("valid scenario")
}
