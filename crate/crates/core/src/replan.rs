//! Receding-horizon execution with progressive map discovery and a simple
//! localization-drift proxy.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::Result;
use crate::perception::state_metrics;
use crate::planner::plan;
use crate::scenario::Scenario;
use crate::types::{FeatureMap, Point, Trajectory, UavState};
use crate::uncertainty::UncertaintyModels;

/// Drift grows by `k_drift / max(s(I), epsilon_fim)` per meter flown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub k_drift: f64,
    /// Accumulated drift (m) beyond which the run counts as lost.
    pub drift_limit: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel {
            k_drift: 1e-3,
            drift_limit: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplanOptions {
    /// Meters executed between replans.
    pub horizon: f64,
    pub drift: DriftModel,
    pub max_replans: usize,
}

impl Default for ReplanOptions {
    fn default() -> Self {
        ReplanOptions {
            horizon: 30.0,
            drift: DriftModel::default(),
            max_replans: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplanOutcome {
    pub success: bool,
    pub final_drift: f64,
    pub trace: Vec<DriftSample>,
    /// The plan made at each replanning step.
    pub plans: Vec<Trajectory>,
    /// Where the drift first exceeded the limit, if it did.
    pub exceed_point: Option<Point>,
}

impl ReplanOutcome {
    pub fn final_state(&self) -> Option<&DriftSample> {
        self.trace.last()
    }
}

/// Plan, fly the first `horizon` meters (whole segments), sense, repeat.
///
/// The planner only sees features that came within sensor range of a flown
/// state; drift is accumulated against the true map.
pub fn replan_loop(
    scenario: &Scenario,
    unc: &UncertaintyModels,
    energy: &EnergyModel,
    opts: &ReplanOptions,
) -> Result<ReplanOutcome> {
    scenario.validate()?;
    let params = &scenario.params;
    let truth = &scenario.map.features;
    let mut known = vec![false; truth.len()];
    let reveal = |known: &mut Vec<bool>, at: &[UavState]| {
        let r2 = params.r_max * params.r_max;
        for (k, f) in truth.iter().enumerate() {
            if !known[k] && at.iter().any(|s| (f - s.position()).norm_squared() < r2) {
                known[k] = true;
            }
        }
    };

    let mut current = scenario.start.with_time(0.0);
    reveal(&mut known, &[current]);
    let mut drift = 0.0;
    let mut clock = 0.0;
    let mut trace = vec![DriftSample {
        t: 0.0,
        x: current.x,
        y: current.y,
        v: current.v,
        drift,
    }];
    let mut plans = Vec::new();
    let done = |success, drift, trace, plans, exceed_point| ReplanOutcome {
        success,
        final_drift: drift,
        trace,
        plans,
        exceed_point,
    };
    if scenario.goal.contains(&current.position()) {
        return Ok(done(true, drift, trace, plans, None));
    }

    for round in 0..opts.max_replans {
        let features: Vec<Point> = truth.iter().zip(&known).filter(|(_, k)| **k).map(|(f, _)| *f).collect();
        let mut local = scenario.clone();
        local.map = FeatureMap {
            features,
            obstacles: scenario.map.obstacles.clone(),
            bounds: scenario.map.bounds,
        };
        local.start = current;
        local.params.rng_seed = params.rng_seed.wrapping_add(round as u64);
        let traj = plan(&local, unc, energy)?;

        let mut flown = 0.0;
        for seg in traj.segments.iter().skip(1) {
            let states = &seg.states[1..];
            let metrics = state_metrics(states, truth, unc, params);
            let mut prev = current;
            for (s, m) in states.iter().zip(&metrics) {
                let step = (s.position() - prev.position()).norm();
                drift += step * opts.drift.k_drift / m.max(params.epsilon_fim);
                flown += step;
                trace.push(DriftSample {
                    t: clock + s.t,
                    x: s.x,
                    y: s.y,
                    v: s.v,
                    drift,
                });
                prev = *s;
                if drift > opts.drift.drift_limit {
                    let at = s.position();
                    plans.push(traj);
                    return Ok(done(false, drift, trace, plans, Some(at)));
                }
                if scenario.goal.contains(&s.position()) {
                    plans.push(traj);
                    return Ok(done(true, drift, trace, plans, None));
                }
            }
            reveal(&mut known, states);
            clock += seg.tip().t;
            current = seg.tip().with_time(0.0);
            if flown >= opts.horizon {
                break;
            }
        }
        plans.push(traj);
    }
    Ok(done(false, drift, trace, plans, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Bounds, GoalRegion, PlannerParams};
    use std::sync::OnceLock;

    fn models() -> &'static (UncertaintyModels, EnergyModel) {
        static M: OnceLock<(UncertaintyModels, EnergyModel)> = OnceLock::new();
        M.get_or_init(|| (UncertaintyModels::reference(1), EnergyModel::reference(1)))
    }

    fn dense_scenario() -> Scenario {
        let bounds = Bounds {
            xmin: -10.0,
            xmax: 90.0,
            ymin: -30.0,
            ymax: 30.0,
        };
        let mut feats = Vec::new();
        for i in 0..=20 {
            for j in 0..=6 {
                feats.push(Point::new(-10.0 + 5.0 * i as f64, -30.0 + 10.0 * j as f64));
            }
        }
        let params = PlannerParams {
            max_samples: 60,
            ..PlannerParams::default()
        };
        Scenario::new(
            "dense",
            FeatureMap::new(feats, vec![], bounds).unwrap(),
            UavState::new(0.0, 0.0, 1.0),
            GoalRegion { cx: 60.0, cy: 0.0, radius: 6.0 },
            params,
        )
        .unwrap()
    }

    #[test]
    fn benign_world_succeeds() {
        let (u, e) = models();
        let out = replan_loop(&dense_scenario(), u, e, &ReplanOptions::default()).unwrap();
        assert!(out.success);
        assert!(out.final_drift < 0.01 * 30.0, "{}", out.final_drift);
        assert!(out.trace.windows(2).all(|w| w[1].drift >= w[0].drift && w[1].t > w[0].t));
    }

    #[test]
    fn zero_limit_fails_at_once() {
        let (u, e) = models();
        let opts = ReplanOptions {
            drift: DriftModel {
                k_drift: 1e-3,
                drift_limit: 0.0,
            },
            ..ReplanOptions::default()
        };
        let out = replan_loop(&dense_scenario(), u, e, &opts).unwrap();
        assert!(!out.success);
        assert_eq!(out.trace.len(), 2);
        assert!(out.exceed_point.is_some());
    }
}
