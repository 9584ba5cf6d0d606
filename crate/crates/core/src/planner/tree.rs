use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GoalRegion, Point, TrajectorySegment, UavState};

/// Tree of smoothed segments. Index 0 is the root; every other entry is the
/// segment ending at that tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    pub segments: Vec<TrajectorySegment>,
    pub children: Vec<Vec<usize>>,
    pub goal: GoalRegion,
    /// Tips that lie in the goal disc, in insertion order.
    pub goal_tips: Vec<usize>,
    pub best_goal_tip: Option<usize>,
}

impl PlanTree {
    pub fn new(start: UavState, goal: GoalRegion) -> Self {
        let start = start.with_time(0.0);
        let root = TrajectorySegment {
            states: vec![start],
            parent_tip_index: None,
            c_p: 0.0,
            c_e: 0.0,
            cost: 0.0,
            cum_cost: 0.0,
            arc_length: 0.0,
            v_cur: start.v,
            v_tmp: start.v,
        };
        let mut tree = PlanTree {
            segments: vec![root],
            children: vec![Vec::new()],
            goal,
            goal_tips: Vec::new(),
            best_goal_tip: None,
        };
        if goal.contains(&start.position()) {
            tree.goal_tips.push(0);
            tree.best_goal_tip = Some(0);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn tip(&self, i: usize) -> &UavState {
        self.segments[i].tip()
    }

    pub fn position(&self, i: usize) -> Point {
        self.tip(i).position()
    }

    pub fn cum_cost(&self, i: usize) -> f64 {
        self.segments[i].cum_cost
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.segments[i].parent_tip_index
    }

    pub fn best_goal_cost(&self) -> Option<f64> {
        self.best_goal_tip.map(|i| self.cum_cost(i))
    }

    /// Up to `n` ancestors of `i`, nearest first (excluding `i`).
    pub fn ancestors(&self, i: usize, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n.min(32));
        let mut cur = self.parent(i);
        while let Some(p) = cur {
            if out.len() == n {
                break;
            }
            out.push(p);
            cur = self.parent(p);
        }
        out
    }

    pub fn is_ancestor(&self, a: usize, of: usize) -> bool {
        let mut cur = self.parent(of);
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.parent(p);
        }
        false
    }

    /// Root-to-`i` tip indices.
    pub fn chain(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        out.extend(self.ancestors(i, usize::MAX));
        out.reverse();
        out
    }

    /// Control points for a segment from tip `from` to `target`: up to `window`
    /// ancestors of `from`, then `from`, then `target`.
    pub fn control_points(&self, from: usize, target: Point, window: usize) -> Vec<Point> {
        let mut pts: Vec<Point> = self.ancestors(from, window).iter().rev().map(|&a| self.position(a)).collect();
        pts.push(self.position(from));
        pts.push(target);
        pts
    }

    /// Append `segment` under `parent`. The segment's first state must match the
    /// parent's tip.
    pub fn insert_segment(&mut self, parent: usize, mut segment: TrajectorySegment) -> Result<usize> {
        check_join(self.tip(parent), segment.first())?;
        segment.parent_tip_index = Some(parent);
        segment.cum_cost = self.cum_cost(parent) + segment.cost;
        let idx = self.segments.len();
        let in_goal = self.goal.contains(&segment.tip().position());
        self.segments.push(segment);
        self.children.push(Vec::new());
        self.children[parent].push(idx);
        if in_goal {
            self.goal_tips.push(idx);
            if self.best_goal_cost().is_none_or(|c| self.cum_cost(idx) < c) {
                self.best_goal_tip = Some(idx);
            }
        }
        Ok(idx)
    }

    /// Replace the segment ending at `tip` with one hanging from `new_parent`,
    /// then refresh the cumulative cost of every descendant.
    pub fn reparent(&mut self, tip: usize, new_parent: usize, mut segment: TrajectorySegment) -> Result<()> {
        if tip == 0 {
            return Err(Error::Continuity("the root cannot be reparented".into()));
        }
        if tip == new_parent || self.is_ancestor(tip, new_parent) {
            return Err(Error::Continuity(format!("reparenting {tip} under {new_parent} makes a cycle")));
        }
        check_join(self.tip(new_parent), segment.first())?;
        let old_tip = *self.tip(tip);
        if !old_tip.same_tip(segment.tip(), 0.0) && !self.children[tip].is_empty() {
            return Err(Error::Continuity(format!("tip {tip} has children; its state must not move")));
        }
        let old_parent = self.parent(tip).expect("non-root has a parent");
        self.children[old_parent].retain(|c| *c != tip);
        self.children[new_parent].push(tip);
        segment.parent_tip_index = Some(new_parent);
        segment.cum_cost = self.cum_cost(new_parent) + segment.cost;
        self.segments[tip] = segment;
        self.refresh_descendants(tip);
        self.refresh_best_goal();
        Ok(())
    }

    fn refresh_descendants(&mut self, from: usize) {
        let mut stack = self.children[from].clone();
        while let Some(c) = stack.pop() {
            let p = self.parent(c).expect("child has a parent");
            self.segments[c].cum_cost = self.segments[p].cum_cost + self.segments[c].cost;
            stack.extend(self.children[c].iter().copied());
        }
    }

    fn refresh_best_goal(&mut self) {
        let mut best: Option<usize> = None;
        for &g in &self.goal_tips {
            if best.is_none_or(|b| self.cum_cost(g) < self.cum_cost(b)) {
                best = Some(g);
            }
        }
        self.best_goal_tip = best;
    }

    /// Check continuity, acyclicity, and cost bookkeeping.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.segments.len();
        if n == 0 || self.parent(0).is_some() {
            return Err(Error::Continuity("tree must have exactly one root at index 0".into()));
        }
        for i in 1..n {
            let Some(p) = self.parent(i) else {
                return Err(Error::Continuity(format!("tip {i} has no parent")));
            };
            if p >= n {
                return Err(Error::Continuity(format!("tip {i} has dangling parent {p}")));
            }
            check_join(self.tip(p), self.segments[i].first())?;
            if !self.children[p].contains(&i) {
                return Err(Error::Continuity(format!("tip {i} missing from children of {p}")));
            }
            // acyclic: the chain must reach the root within n steps
            let mut cur = i;
            let mut steps = 0;
            while let Some(q) = self.parent(cur) {
                cur = q;
                steps += 1;
                if steps > n {
                    return Err(Error::Continuity(format!("cycle through tip {i}")));
                }
            }
            let sum: f64 = self.chain(i).iter().map(|&k| self.segments[k].cost).sum();
            let stored = self.cum_cost(i);
            if (sum - stored).abs() > 1e-9 * sum.abs().max(1.0) {
                return Err(Error::Continuity(format!("tip {i}: cum_cost {stored} but chain sums to {sum}")));
            }
        }
        if let Some(b) = self.best_goal_tip {
            if self.goal_tips.iter().any(|&g| self.cum_cost(g) < self.cum_cost(b)) {
                return Err(Error::Continuity("best_goal_tip is not the cheapest goal tip".into()));
            }
        }
        Ok(())
    }
}

fn check_join(parent_tip: &UavState, first: &UavState) -> Result<()> {
    if parent_tip.same_tip(first, 1e-9) {
        Ok(())
    } else {
        Err(Error::Continuity(format!(
            "segment starts at ({}, {}, v={}) but the parent tip is ({}, {}, v={})",
            first.x, first.y, first.v, parent_tip.x, parent_tip.y, parent_tip.v
        )))
    }
}
