use rand::Rng;

use crate::energy::{segment_energy_cost, EnergyModel};
use crate::error::{Error, Result};
use crate::perception::{features_near, perception_cost_from_metrics, state_metrics};
use crate::spline::{sample_states, SmoothPath, VelocityProfile};
use crate::types::{Bounds, FeatureMap, GoalRegion, PlannerParams, Point, TrajectorySegment, UavState};
use crate::uncertainty::UncertaintyModels;

use super::tree::PlanTree;

/// Everything a cost evaluation reads. Immutable during planning.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub map: &'a FeatureMap,
    pub unc: &'a UncertaintyModels,
    pub energy: &'a EnergyModel,
    pub params: &'a PlannerParams,
}

pub fn sample_node<R: Rng + ?Sized>(bounds: &Bounds, goal: &GoalRegion, goal_bias: f64, rng: &mut R) -> Point {
    if goal_bias > 0.0 && rng.random::<f64>() < goal_bias {
        let r = goal.radius * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        Point::new(goal.cx + r * a.cos(), goal.cy + r * a.sin())
    } else {
        Point::new(
            rng.random_range(bounds.xmin..=bounds.xmax),
            rng.random_range(bounds.ymin..=bounds.ymax),
        )
    }
}

/// Tip closest to `p`; ties go to the lowest index.
pub fn nearest(tree: &PlanTree, p: &Point) -> usize {
    let mut best = (0, f64::INFINITY);
    for i in 0..tree.len() {
        let d = (tree.position(i) - p).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

pub fn extend(from: &Point, toward: &Point, step_len: f64) -> Result<Point> {
    let d = toward - from;
    let dist = d.norm();
    if !(dist > 0.0) {
        return Err(Error::CoincidentPoints);
    }
    if dist <= step_len {
        Ok(*toward)
    } else {
        Ok(from + d * (step_len / dist))
    }
}

pub fn near_radius(n: usize, params: &PlannerParams) -> f64 {
    let n = n.max(1) as f64;
    (params.near_radius_gamma * (n.ln() / n).sqrt()).min(2.0 * params.step_len)
}

/// Tips inside the shrinking ball around `p`, or the nearest tip if the ball is empty.
pub fn near_tip_states(tree: &PlanTree, p: &Point, params: &PlannerParams) -> Vec<usize> {
    let r = near_radius(tree.len(), params);
    let out: Vec<usize> = (0..tree.len()).filter(|&i| (tree.position(i) - p).norm() <= r).collect();
    if out.is_empty() {
        vec![nearest(tree, p)]
    } else {
        out
    }
}

/// Best velocity choice for one smoothed path.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityChoice {
    pub states: Vec<UavState>,
    pub v_tmp: f64,
    pub c_p: f64,
    pub c_e: f64,
    pub cost: f64,
    pub arc_length: f64,
}

impl VelocityChoice {
    pub fn into_segment(self, v_cur: f64) -> TrajectorySegment {
        TrajectorySegment {
            states: self.states,
            parent_tip_index: None,
            c_p: self.c_p,
            c_e: self.c_e,
            cost: self.cost,
            cum_cost: 0.0,
            arc_length: self.arc_length,
            v_cur,
            v_tmp: self.v_tmp,
        }
    }
}

/// Sample `path` at one cruise speed. The first state is `start` exactly and
/// the last sits exactly on `end`. `None` when the ramp does not fit or a
/// state hits an obstacle.
fn sample_candidate(path: &SmoothPath, start: &UavState, end: Point, v_tmp: f64, ctx: &PlanContext) -> Option<Vec<UavState>> {
    let profile = VelocityProfile {
        v_cur: start.v,
        v_tmp,
        a_max: ctx.params.a_max,
    };
    let mut states = sample_states(path, profile, ctx.params.dt).ok()?;
    states[0] = start.with_time(0.0);
    let last = states.last_mut().unwrap();
    last.x = end.x;
    last.y = end.y;
    if states.iter().any(|s| ctx.map.in_collision(&s.position())) {
        return None;
    }
    Some(states)
}

fn perception_cost(states: &[UavState], features: &[Point], ctx: &PlanContext) -> f64 {
    // the first state belongs to the parent segment
    perception_cost_from_metrics(state_metrics(&states[1..], features, ctx.unc, ctx.params), ctx.params).c_p
}

/// Try every candidate cruise speed on `path` starting from `start` and keep the
/// cheapest; equal costs keep the faster speed. `candidates` overrides the
/// parameter grid when given.
pub fn opt_vel(
    path: &SmoothPath,
    start: &UavState,
    end: Point,
    ctx: &PlanContext,
    candidates: Option<&[f64]>,
) -> Option<VelocityChoice> {
    let p = ctx.params;
    let grid;
    let speeds = match candidates {
        Some(c) => c,
        None => {
            grid = p.velocity_candidates();
            &grid[..]
        }
    };
    let length = path.total_length();
    let mut local: Option<Vec<Point>> = None;
    let mut best: Option<VelocityChoice> = None;
    for &v_tmp in speeds.iter().rev() {
        let Ok(energy) = segment_energy_cost(ctx.energy, start.v, v_tmp, length, p.a_max, p.p_max) else {
            continue;
        };
        let energy_cost = p.alpha_e * energy.c_e;
        let bound = best.as_ref().map_or(f64::INFINITY, |b| b.cost);
        // perception cost is never negative, so this candidate cannot win
        if energy_cost >= bound {
            continue;
        }
        let Some(states) = sample_candidate(path, start, end, v_tmp, ctx) else {
            continue;
        };
        let (c_p, cost) = if p.alpha_p > 0.0 {
            // every candidate lies on the same curve, at most one sample gap
            // away from this candidate's states
            let features =
                local.get_or_insert_with(|| features_near(&ctx.map.features, &states, p.r_max + p.v_max * p.dt));
            let c_p = perception_cost(&states, features, ctx);
            (c_p, p.alpha_p * c_p + energy_cost)
        } else {
            (f64::NAN, energy_cost)
        };
        if cost < bound {
            best = Some(VelocityChoice {
                states,
                v_tmp,
                c_p,
                c_e: energy.c_e,
                cost,
                arc_length: length,
            });
        }
    }
    if let Some(b) = best.as_mut() {
        if b.c_p.is_nan() {
            b.c_p = perception_cost(&b.states, &ctx.map.features, ctx);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyModel;
    use crate::spline::smooth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn models() -> &'static (UncertaintyModels, EnergyModel) {
        static M: OnceLock<(UncertaintyModels, EnergyModel)> = OnceLock::new();
        M.get_or_init(|| (UncertaintyModels::reference(1), EnergyModel::reference(1)))
    }

    fn bounds() -> Bounds {
        Bounds {
            xmin: 0.0,
            xmax: 100.0,
            ymin: 0.0,
            ymax: 100.0,
        }
    }

    fn goal() -> GoalRegion {
        GoalRegion {
            cx: 80.0,
            cy: 80.0,
            radius: 5.0,
        }
    }

    #[test]
    fn full_bias_samples_goal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let p = sample_node(&bounds(), &goal(), 1.0, &mut rng);
            assert!(goal().contains(&p));
        }
    }

    #[test]
    fn uniform_sampling_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 16];
        let n = 10_000;
        for _ in 0..n {
            let p = sample_node(&bounds(), &goal(), 0.0, &mut rng);
            let i = ((p.x / 25.0) as usize).min(3);
            let j = ((p.y / 25.0) as usize).min(3);
            counts[i * 4 + j] += 1;
        }
        let e = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99th percentile of chi-square with 15 degrees of freedom
        assert!(chi2 < 30.58, "{chi2}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_node(&bounds(), &goal(), 0.1, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    fn tree_with(points: &[(f64, f64)]) -> PlanTree {
        let mut t = PlanTree::new(UavState::new(points[0].0, points[0].1, 1.0), goal());
        for &(x, y) in &points[1..] {
            let seg = TrajectorySegment {
                states: vec![*t.tip(0), UavState::new(x, y, 1.0)],
                parent_tip_index: None,
                c_p: 0.0,
                c_e: 0.0,
                cost: 1.0,
                cum_cost: 0.0,
                arc_length: 1.0,
                v_cur: 1.0,
                v_tmp: 1.0,
            };
            t.insert_segment(0, seg).unwrap();
        }
        t
    }

    #[test]
    fn nearest_root_and_ties() {
        let t = tree_with(&[(0.0, 0.0)]);
        assert_eq!(nearest(&t, &Point::new(50.0, 50.0)), 0);
        let t = tree_with(&[(0.0, 0.0), (2.0, 0.0), (-2.0, 0.0)]);
        assert_eq!(nearest(&t, &Point::new(0.0, 5.0)), 0);
        let t = tree_with(&[(9.0, 9.0), (2.0, 0.0), (-2.0, 0.0)]);
        assert_eq!(nearest(&t, &Point::new(0.0, 0.0)), 1);
    }

    #[test]
    fn nearest_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<(f64, f64)> = (0..1000).map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
        let t = tree_with(&pts);
        for _ in 0..100 {
            let q = Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            let scan = (0..t.len())
                .min_by(|&a, &b| (t.position(a) - q).norm().total_cmp(&(t.position(b) - q).norm()))
                .unwrap();
            assert_eq!(nearest(&t, &q), scan);
        }
    }

    #[test]
    fn extend_cases() {
        let a = Point::new(0.0, 0.0);
        assert_eq!(extend(&a, &Point::new(1.0, 1.0), 5.0).unwrap(), Point::new(1.0, 1.0));
        let p = extend(&a, &Point::new(6.0, 8.0), 2.0).unwrap();
        assert!((p - Point::new(1.2, 1.6)).norm() < 1e-12);
        assert!((p.x * 8.0 - p.y * 6.0).abs() < 1e-12);
        assert!(matches!(extend(&a, &a, 1.0), Err(Error::CoincidentPoints)));
    }

    #[test]
    fn near_ball() {
        let p = PlannerParams::default();
        let t = tree_with(&[(0.0, 0.0)]);
        assert_eq!(near_tip_states(&t, &Point::new(90.0, 90.0), &p), vec![0]);
        let (r10, r100, r1000) = (near_radius(10, &p), near_radius(100, &p), near_radius(1000, &p));
        assert!(r10 >= r100 && r100 > r1000);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<(f64, f64)> = (0..500).map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
        let t = tree_with(&pts);
        let q = Point::new(50.0, 50.0);
        let r = near_radius(t.len(), &p);
        let brute: Vec<usize> = (0..t.len()).filter(|&i| (t.position(i) - q).norm() <= r).collect();
        assert!(!brute.is_empty());
        assert_eq!(near_tip_states(&t, &q, &p), brute);
    }

    fn ctx<'a>(map: &'a FeatureMap, params: &'a PlannerParams) -> PlanContext<'a> {
        let (unc, energy) = models();
        PlanContext { map, unc, energy, params }
    }

    #[test]
    fn energy_only_matches_exhaustive_argmin() {
        let map = FeatureMap::empty(bounds());
        let params = PlannerParams {
            alpha_p: 0.0,
            ..PlannerParams::default()
        };
        let c = ctx(&map, &params);
        let end = Point::new(40.0, 10.0);
        let path = smooth(&[Point::new(0.0, 0.0), Point::new(20.0, 0.0), end]).unwrap();
        for v0 in [1.0, 3.0, 7.0] {
            let start = UavState::new(0.0, 0.0, v0);
            let got = opt_vel(&path, &start, end, &c, None).unwrap();
            let mut best = (f64::INFINITY, 0.0);
            for v in params.velocity_candidates() {
                if let Ok(e) = segment_energy_cost(c.energy, v0, v, path.total_length(), 1.0, params.p_max) {
                    if e.c_e <= best.0 {
                        best = (e.c_e, v);
                    }
                }
            }
            assert_eq!(got.v_tmp, best.1);
            assert_eq!(got.cost, best.0);
        }
    }

    #[test]
    fn featureless_perception_only_prefers_fastest() {
        let map = FeatureMap::empty(bounds());
        let params = PlannerParams {
            alpha_e: 0.0,
            ..PlannerParams::default()
        };
        let c = ctx(&map, &params);
        let end = Point::new(90.0, 0.0);
        let path = smooth(&[Point::new(0.0, 0.0), end]).unwrap();
        let got = opt_vel(&path, &UavState::new(0.0, 0.0, 1.0), end, &c, None).unwrap();
        assert_eq!(got.v_tmp, 10.0);
    }

    #[test]
    fn singleton_candidate() {
        let map = FeatureMap::empty(bounds());
        let params = PlannerParams {
            n_vel_candidates: 1,
            ..PlannerParams::default()
        };
        let c = ctx(&map, &params);
        let end = Point::new(10.0, 0.0);
        let path = smooth(&[Point::new(0.0, 0.0), end]).unwrap();
        let got = opt_vel(&path, &UavState::new(0.0, 0.0, 1.0), end, &c, None).unwrap();
        assert_eq!(got.v_tmp, 1.0);
        // from 10 m/s a 10 m segment cannot slow to 1 m/s
        assert!(opt_vel(&path, &UavState::new(0.0, 0.0, 10.0), end, &c, None).is_none());
    }

    #[test]
    fn pruning_keeps_exact_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let feats: Vec<Point> = (0..60).map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
        let map = FeatureMap::new(feats, vec![], bounds()).unwrap();
        for alpha_p in [0.01, 4.0, 1000.0] {
            let params = PlannerParams {
                alpha_p,
                ..PlannerParams::default()
            };
            let c = ctx(&map, &params);
            let end = Point::new(60.0, 55.0);
            let path = smooth(&[Point::new(40.0, 40.0), Point::new(50.0, 50.0), end]).unwrap();
            let start = UavState::new(40.0, 40.0, 3.0);
            let got = opt_vel(&path, &start, end, &c, None).unwrap();
            let mut best: Option<(f64, f64)> = None;
            for v in params.velocity_candidates().into_iter().rev() {
                if let Some(ch) = opt_vel(&path, &start, end, &c, Some(&[v])) {
                    if best.is_none_or(|b| ch.cost < b.0) {
                        best = Some((ch.cost, v));
                    }
                }
            }
            assert_eq!((got.cost, got.v_tmp), best.unwrap());
        }
    }

    #[test]
    fn obstacle_rejects_candidates() {
        let map = FeatureMap::new(vec![], vec![crate::types::Obstacle { cx: 5.0, cy: 0.0, radius: 1.0 }], bounds()).unwrap();
        let params = PlannerParams::default();
        let c = ctx(&map, &params);
        let end = Point::new(10.0, 0.0);
        let path = smooth(&[Point::new(0.0, 0.0), end]).unwrap();
        assert!(opt_vel(&path, &UavState::new(0.0, 0.0, 1.0), end, &c, None).is_none());
    }
}
