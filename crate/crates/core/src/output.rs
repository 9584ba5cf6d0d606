//! File writers for planned trajectories and run summaries.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::replan::DriftSample;
use crate::types::Trajectory;

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "x", "y", "v", "c_p_cum", "c_e_cum"];

pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_HEADER)?;
    for p in &traj.points {
        let s = &p.state;
        out.write_record([s.t, s.x, s.y, s.v, p.c_p_cum, p.c_e_cum].map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_trajectory_csv(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    write_trajectory_csv(std::fs::File::create(path)?, traj)
}

/// Per-state metric field, `t,x,y,v,s_of_I`.
pub fn save_metric_csv(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let states: Vec<_> = traj.points.iter().map(|p| p.state).collect();
    let metrics: Vec<f64> = traj.points.iter().map(|p| p.metric).collect();
    crate::perception::write_metric_csv(std::fs::File::create(path)?, &states, &metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    #[serde(rename = "total_energy_J")]
    pub total_energy_j: f64,
    pub total_perception: f64,
    pub duration_s: f64,
    pub n_samples_used: usize,
}

impl From<&Trajectory> for TrajectorySummary {
    fn from(t: &Trajectory) -> Self {
        TrajectorySummary {
            total_energy_j: t.total_energy_j,
            total_perception: t.total_perception,
            duration_s: t.duration_s,
            n_samples_used: t.n_samples_used,
        }
    }
}

pub fn write_drift_csv<W: Write>(w: W, trace: &[DriftSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "x", "y", "v", "drift"])?;
    for s in trace {
        out.write_record([s.t, s.x, s.y, s.v, s.drift].map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{TrajectoryPoint, UavState};

    #[test]
    fn summary_field_names() {
        let t = Trajectory {
            segments: vec![],
            points: vec![TrajectoryPoint {
                state: UavState::new(0.0, 0.0, 1.0),
                metric: 0.0,
                c_p_cum: 0.0,
                c_e_cum: 0.0,
            }],
            total_energy_j: 12.5,
            total_perception: 3.0,
            duration_s: 0.0,
            n_samples_used: 7,
        };
        let json = serde_json::to_value(TrajectorySummary::from(&t)).unwrap();
        assert_eq!(json["total_energy_J"], 12.5);
        assert_eq!(json["n_samples_used"], 7);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x,y,v,c_p_cum,c_e_cum");
        assert_eq!(text.lines().count(), 2);
    }
}
