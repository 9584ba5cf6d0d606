//! Sampling-based planner over spline-smoothed segments with per-segment
//! velocity optimization and rewiring.

mod ops;
mod tree;

pub use ops::{extend, near_radius, near_tip_states, nearest, opt_vel, sample_node, PlanContext, VelocityChoice};
pub use tree::PlanTree;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::perception::state_metrics;
use crate::scenario::Scenario;
use crate::spline::smooth_last_span;
use crate::types::{Point, Trajectory, TrajectoryPoint, TrajectorySegment};
use crate::uncertainty::UncertaintyModels;

/// Incremental planner. Each [`Planner::step`] draws one sample.
#[derive(Debug)]
pub struct Planner<'a> {
    scenario: &'a Scenario,
    ctx: PlanContext<'a>,
    tree: PlanTree,
    rng: ChaCha8Rng,
    iterations: usize,
}

impl<'a> Planner<'a> {
    pub fn new(scenario: &'a Scenario, unc: &'a UncertaintyModels, energy: &'a EnergyModel) -> Result<Self> {
        scenario.validate()?;
        Ok(Planner {
            scenario,
            ctx: PlanContext {
                map: &scenario.map,
                unc,
                energy,
                params: &scenario.params,
            },
            tree: PlanTree::new(scenario.start, scenario.goal),
            rng: ChaCha8Rng::seed_from_u64(scenario.params.rng_seed),
            iterations: 0,
        })
    }

    pub fn tree(&self) -> &PlanTree {
        &self.tree
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn best_cost(&self) -> Option<f64> {
        self.tree.best_goal_cost()
    }

    /// Goal reached and the sample budget spent.
    pub fn finished(&self) -> bool {
        self.tree.best_goal_tip.is_some() && self.iterations >= self.scenario.params.max_samples
    }

    pub fn exhausted(&self) -> bool {
        self.iterations >= 4 * self.scenario.params.max_samples
    }

    /// Smooth from tip `from` to `target` and pick its velocity.
    fn candidate(&self, from: usize, target: Point, fixed_speed: Option<f64>) -> Option<VelocityChoice> {
        let params = self.ctx.params;
        let cps = self.tree.control_points(from, target, params.smoothing_window);
        let path = smooth_last_span(&cps).ok()?;
        let fixed;
        let speeds = match fixed_speed {
            Some(v) => {
                fixed = [v];
                Some(&fixed[..])
            }
            None => None,
        };
        opt_vel(&path, self.tree.tip(from), target, &self.ctx, speeds)
    }

    /// One iteration: sample, extend, connect to the cheapest near tip, rewire.
    /// Returns the new tip index when a segment was added.
    pub fn step(&mut self) -> Result<Option<usize>> {
        self.iterations += 1;
        let params = self.ctx.params;
        let sample = sample_node(&self.scenario.map.bounds, &self.scenario.goal, params.goal_bias, &mut self.rng);
        let near_idx = nearest(&self.tree, &sample);
        let Ok(x_new) = extend(&self.tree.position(near_idx), &sample, params.step_len) else {
            return Ok(None);
        };
        if self.ctx.map.in_collision(&x_new) {
            return Ok(None);
        }
        let near = near_tip_states(&self.tree, &x_new, params);
        let mut best: Option<(f64, usize, VelocityChoice)> = None;
        for &k in &near {
            let Some(choice) = self.candidate(k, x_new, None) else {
                continue;
            };
            let total = self.tree.cum_cost(k) + choice.cost;
            if best.as_ref().is_none_or(|b| total < b.0) {
                best = Some((total, k, choice));
            }
        }
        let Some((_, parent, choice)) = best else {
            return Ok(None);
        };
        let v_cur = self.tree.tip(parent).v;
        let new_tip = self.tree.insert_segment(parent, choice.into_segment(v_cur))?;
        self.rewire(new_tip, &near)?;
        if self.iterations.is_multiple_of(1000) {
            info!(
                "iteration {}: tree size {}, best cost {:?}",
                self.iterations,
                self.tree.len(),
                self.best_cost()
            );
        }
        Ok(Some(new_tip))
    }

    /// Try routing each near tip through `new_tip`.
    fn rewire(&mut self, new_tip: usize, near: &[usize]) -> Result<()> {
        for &k in near {
            if k == 0 || k == new_tip || self.tree.is_ancestor(k, new_tip) {
                continue;
            }
            let target = self.tree.position(k);
            if target == self.tree.position(new_tip) {
                continue;
            }
            // a tip with children keeps its speed so their segments stay joined
            let fixed = (!self.tree.children[k].is_empty()).then(|| self.tree.tip(k).v);
            let Some(choice) = self.candidate(new_tip, target, fixed) else {
                continue;
            };
            if self.tree.cum_cost(new_tip) + choice.cost < self.tree.cum_cost(k) {
                debug!("rewire {k} under {new_tip}");
                let v_cur = self.tree.tip(new_tip).v;
                self.tree.reparent(k, new_tip, choice.into_segment(v_cur))?;
            }
        }
        Ok(())
    }

    /// Run until done and extract the best goal-reaching trajectory.
    pub fn run(mut self) -> Result<Trajectory> {
        if self.tree.best_goal_tip == Some(0) {
            return Ok(extract_trajectory(&self.tree, 0, &self.ctx, 0));
        }
        while !self.finished() {
            if self.exhausted() {
                return Err(Error::GoalUnreachable {
                    iterations: self.iterations,
                    tree: Box::new(self.tree),
                });
            }
            self.step()?;
        }
        let best = self.tree.best_goal_tip.expect("finished implies a goal tip");
        Ok(extract_trajectory(&self.tree, best, &self.ctx, self.iterations))
    }
}

/// Plan a trajectory for `scenario` with the given models.
pub fn plan(scenario: &Scenario, unc: &UncertaintyModels, energy: &EnergyModel) -> Result<Trajectory> {
    Planner::new(scenario, unc, energy)?.run()
}

/// Flatten the chain ending at `tip` into a timed trajectory with running costs.
pub fn extract_trajectory(tree: &PlanTree, tip: usize, ctx: &PlanContext, n_samples_used: usize) -> Trajectory {
    let params = ctx.params;
    let chain = tree.chain(tip);
    let mut segments: Vec<TrajectorySegment> = Vec::with_capacity(chain.len());
    let mut points: Vec<TrajectoryPoint> = Vec::new();
    let mut t0 = 0.0;
    let mut c_e_before = 0.0;
    for &i in &chain {
        let mut seg = tree.segments[i].clone();
        for s in &mut seg.states {
            s.t += t0;
        }
        let skip = usize::from(i != 0);
        for s in &seg.states[skip..] {
            let local_t = s.t - t0;
            let c_e_cum = if i == 0 {
                0.0
            } else {
                c_e_before + ctx.energy.energy_until(seg.v_cur, seg.v_tmp, params.a_max, local_t) / params.p_max
            };
            points.push(TrajectoryPoint {
                state: *s,
                metric: 0.0,
                c_p_cum: 0.0,
                c_e_cum,
            });
        }
        t0 = seg.tip().t;
        c_e_before += seg.c_e;
        segments.push(seg);
    }
    let states: Vec<_> = points.iter().map(|p| p.state).collect();
    let metrics = state_metrics(&states, &ctx.map.features, ctx.unc, params);
    let mut c_p_cum = 0.0;
    for (k, (p, m)) in points.iter_mut().zip(&metrics).enumerate() {
        p.metric = *m;
        if k > 0 {
            c_p_cum += params.dt / m.max(params.epsilon_fim);
        }
        p.c_p_cum = c_p_cum;
    }
    let total_c_e: f64 = segments.iter().map(|s| s.c_e).sum();
    Trajectory {
        total_energy_j: total_c_e * params.p_max,
        total_perception: metrics.iter().sum(),
        duration_s: points.last().map_or(0.0, |p| p.state.t),
        n_samples_used,
        segments,
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Bounds, FeatureMap, GoalRegion, PlannerParams, UavState};
    use std::sync::OnceLock;

    fn models() -> &'static (UncertaintyModels, EnergyModel) {
        static M: OnceLock<(UncertaintyModels, EnergyModel)> = OnceLock::new();
        M.get_or_init(|| (UncertaintyModels::reference(1), EnergyModel::reference(1)))
    }

    fn open_scenario(goal: GoalRegion, params: PlannerParams) -> Scenario {
        let bounds = Bounds {
            xmin: -10.0,
            xmax: 110.0,
            ymin: -40.0,
            ymax: 40.0,
        };
        Scenario::new("open", FeatureMap::empty(bounds), UavState::new(0.0, 0.0, 1.0), goal, params).unwrap()
    }

    #[test]
    fn start_in_goal_is_trivial() {
        let (u, e) = models();
        let s = open_scenario(GoalRegion { cx: 1.0, cy: 0.0, radius: 3.0 }, PlannerParams::default());
        let t = plan(&s, u, e).unwrap();
        assert_eq!(t.points.len(), 1);
        assert_eq!(t.length(), 0.0);
        assert_eq!(t.total_energy_j, 0.0);
    }

    #[test]
    fn small_open_plan_is_consistent() {
        let (u, e) = models();
        let params = PlannerParams {
            max_samples: 150,
            rng_seed: 3,
            ..PlannerParams::default()
        };
        let s = open_scenario(GoalRegion { cx: 60.0, cy: 0.0, radius: 6.0 }, params);
        let t = plan(&s, u, e).unwrap();
        assert!(s.goal.contains(&t.final_state().position()));
        assert!(t.points.windows(2).all(|w| w[1].state.t > w[0].state.t));
        let last = t.points.last().unwrap();
        assert!((last.c_e_cum * s.params.p_max - t.total_energy_j).abs() < 1e-6 * t.total_energy_j);
        let c_p: f64 = t.segments.iter().map(|s| s.c_p).sum();
        assert!((last.c_p_cum - c_p).abs() < 1e-9 * c_p);
        for w in t.segments.windows(2) {
            assert!(w[0].tip().same_tip(w[1].first(), 1e-9));
        }
    }

    #[test]
    fn unreachable_goal_reports_tree() {
        let (u, e) = models();
        let params = PlannerParams {
            max_samples: 20,
            goal_bias: 0.0,
            ..PlannerParams::default()
        };
        let bounds = Bounds {
            xmin: -10.0,
            xmax: 110.0,
            ymin: -40.0,
            ymax: 40.0,
        };
        // goal sealed inside an obstacle
        let map = FeatureMap::new(vec![], vec![crate::types::Obstacle { cx: 100.0, cy: 0.0, radius: 8.0 }], bounds).unwrap();
        let s = Scenario::new("sealed", map, UavState::new(0.0, 0.0, 1.0), GoalRegion { cx: 100.0, cy: 0.0, radius: 2.0 }, params).unwrap();
        match plan(&s, u, e) {
            Err(Error::GoalUnreachable { iterations, tree }) => {
                assert_eq!(iterations, 80);
                assert!(!tree.is_empty());
                tree.check_invariants().unwrap();
            }
            other => panic!("expected unreachable, got {other:?}"),
        }
    }
}
