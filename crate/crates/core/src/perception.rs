//! Circular grid graph, Fisher information under velocity-dependent noise, and
//! the perception cost of a sampled segment.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::types::{FeatureMap, MetricKind, PlannerParams, Point, UavState};
use crate::uncertainty::{MotionTerms, UncertaintyModels};

/// Fisher information over `(x, y, V)`.
pub type FisherInfo = Matrix3<f64>;

/// Annular-sector occupancy grid centered on the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularGridGraph {
    pub center: Point,
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
    /// Row-major `n_r x n_theta` occupancy.
    pub cells: Vec<bool>,
    /// Centroid of the features in each occupied cell.
    pub representatives: Vec<Option<Point>>,
}

impl CircularGridGraph {
    pub fn is_true(&self, radial: usize, angular: usize) -> bool {
        self.cells[radial * self.n_theta + angular]
    }

    pub fn n_true(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Representative points of occupied cells in row-major order.
    pub fn true_representatives(&self) -> impl Iterator<Item = Point> + '_ {
        self.representatives.iter().filter_map(|r| *r)
    }
}

/// Cell of `p` relative to `center`, or `None` outside `[r_min, r_max)`.
pub fn cell_index(center: &Point, p: &Point, params: &PlannerParams) -> Option<(usize, usize)> {
    let d = p - center;
    let r = d.norm();
    if r < params.r_min || r >= params.r_max {
        return None;
    }
    let dr = (params.r_max - params.r_min) / params.n_r as f64;
    let dtheta = TAU / params.n_theta as f64;
    let theta = d.y.atan2(d.x).rem_euclid(TAU);
    let i = (((r - params.r_min) / dr) as usize).min(params.n_r - 1);
    let j = ((theta / dtheta) as usize).min(params.n_theta - 1);
    Some((i, j))
}

/// Grid built from an explicit point set.
pub fn build_cgg_from_points(features: &[Point], center: Point, params: &PlannerParams) -> CircularGridGraph {
    let n = params.n_r * params.n_theta;
    let mut sums = vec![(Vector2::zeros(), 0usize); n];
    for f in features {
        if let Some((i, j)) = cell_index(&center, f, params) {
            let cell = &mut sums[i * params.n_theta + j];
            cell.0 += f.coords;
            cell.1 += 1;
        }
    }
    let representatives: Vec<Option<Point>> = sums
        .iter()
        .map(|(s, c)| (*c > 0).then(|| Point::from(s / *c as f64)))
        .collect();
    CircularGridGraph {
        center,
        r_min: params.r_min,
        r_max: params.r_max,
        n_r: params.n_r,
        n_theta: params.n_theta,
        cells: representatives.iter().map(Option::is_some).collect(),
        representatives,
    }
}

pub fn build_cgg(map: &FeatureMap, center: Point, params: &PlannerParams) -> CircularGridGraph {
    build_cgg_from_points(&map.features, center, params)
}

/// Range to a pseudo-measurement point and its gradient with respect to the
/// vehicle position.
pub fn range_observation(state: Point, grid_rep: Point) -> Result<(f64, Vector2<f64>)> {
    let delta = state - grid_rep;
    let d = delta.norm();
    if !(d > 1e-12) {
        return Err(Error::DegenerateRange);
    }
    Ok((d, delta / d))
}

/// Information contributed by one grid cell.
///
/// The range measurement is `z ~ N(d + mu(V), sigma(V, d)^2)`. With
/// `J1 = [dd/dx, dd/dy, dmu/dV]` and `J2` the gradient of the variance
/// `sigma^2`, the Gaussian Fisher information is
/// `J1' J1 / sigma^2 + J2' J2 / (2 sigma^4)`.
pub fn fim_for_grid(state: &UavState, grid_rep: Point, unc: &UncertaintyModels) -> Result<FisherInfo> {
    grid_information(state, grid_rep, &MotionTerms::at(&unc.motion, state.v), unc)
}

fn grid_information(state: &UavState, grid_rep: Point, motion: &MotionTerms, unc: &UncertaintyModels) -> Result<FisherInfo> {
    let (d, grad_d) = range_observation(state.position(), grid_rep)?;
    let (noise, der) = motion.with_range(&unc.distance, d);
    let sigma = noise.sigma_sens;
    if !(sigma > 0.0) {
        return Err(Error::validation("sigma_sens", "must be > 0"));
    }
    let var = sigma * sigma;
    let j1 = Vector3::new(grad_d.x, grad_d.y, der.dmu_dv);
    let dsigma = Vector3::new(der.dsigma_dd * grad_d.x, der.dsigma_dd * grad_d.y, der.dsigma_dv);
    let j2 = dsigma * (2.0 * sigma);
    Ok(j1 * j1.transpose() / var + j2 * j2.transpose() / (2.0 * var * var))
}

/// Summed information of every occupied cell around `state`.
pub fn fim_at_state(state: &UavState, map: &FeatureMap, unc: &UncertaintyModels, params: &PlannerParams) -> FisherInfo {
    fim_from_points(state, &map.features, unc, params)
}

pub fn fim_from_points(state: &UavState, features: &[Point], unc: &UncertaintyModels, params: &PlannerParams) -> FisherInfo {
    let cgg = build_cgg_from_points(features, state.position(), params);
    let motion = MotionTerms::at(&unc.motion, state.v);
    cgg.true_representatives()
        .filter_map(|rep| grid_information(state, rep, &motion, unc).ok())
        .fold(FisherInfo::zeros(), |acc, i| acc + i)
}

fn min_eig_2x2(m: &Matrix2<f64>) -> f64 {
    let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let half_diff = 0.5 * (a - c);
    0.5 * (a + c) - (half_diff * half_diff + b * b).sqrt()
}

/// Scalar summary of an information matrix, clamped below at zero.
pub fn fim_metric(info: &FisherInfo, kind: MetricKind) -> f64 {
    let pos: Matrix2<f64> = info.fixed_view::<2, 2>(0, 0).into_owned();
    let value = match kind {
        MetricKind::MinEigenvalue => min_eig_2x2(&pos),
        MetricKind::Determinant => pos.determinant(),
        MetricKind::FullMinEigenvalue => SymmetricEigen::new(*info).eigenvalues.min(),
        MetricKind::FullDeterminant => info.determinant(),
    };
    value.max(0.0)
}

/// Perception cost of a sampled segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionCost {
    /// `sum dt / max(s(I), eps)`.
    pub c_p: f64,
    /// `sum s(I)`.
    pub quality: f64,
    /// Per-state metric values.
    pub metrics: Vec<f64>,
}

/// Features that can fall inside the grid of any of `states`.
pub fn features_near(features: &[Point], states: &[UavState], r_max: f64) -> Vec<Point> {
    if states.is_empty() {
        return Vec::new();
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in states {
        xmin = xmin.min(s.x);
        xmax = xmax.max(s.x);
        ymin = ymin.min(s.y);
        ymax = ymax.max(s.y);
    }
    features
        .iter()
        .filter(|f| f.x > xmin - r_max && f.x < xmax + r_max && f.y > ymin - r_max && f.y < ymax + r_max)
        .copied()
        .collect()
}

pub fn state_metrics(states: &[UavState], features: &[Point], unc: &UncertaintyModels, params: &PlannerParams) -> Vec<f64> {
    let local = features_near(features, states, params.r_max);
    states
        .iter()
        .map(|s| fim_metric(&fim_from_points(s, &local, unc, params), params.fim_metric))
        .collect()
}

pub fn perception_cost_from_metrics(metrics: Vec<f64>, params: &PlannerParams) -> PerceptionCost {
    let c_p = metrics.iter().map(|s| params.dt / s.max(params.epsilon_fim)).sum();
    let quality = metrics.iter().sum();
    PerceptionCost { c_p, quality, metrics }
}

pub fn segment_perception_cost(
    states: &[UavState],
    map: &FeatureMap,
    unc: &UncertaintyModels,
    params: &PlannerParams,
) -> PerceptionCost {
    perception_cost_from_metrics(state_metrics(states, &map.features, unc, params), params)
}

/// Debug dump of the metric field along a state sequence.
pub fn write_metric_csv<W: Write>(w: W, states: &[UavState], metrics: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "x", "y", "v", "s_of_I"])?;
    for (s, m) in states.iter().zip(metrics) {
        out.write_record([s.t, s.x, s.y, s.v, *m].map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Bounds;
    use crate::uncertainty::{DistanceUncertaintyModel, MotionUncertaintyModel};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn params() -> PlannerParams {
        PlannerParams::default()
    }

    fn constant_models(std: f64) -> UncertaintyModels {
        UncertaintyModels {
            motion: MotionUncertaintyModel::constant(0.0, std, (1.0, 10.0)),
            distance: DistanceUncertaintyModel { k_d: 0.0 },
        }
    }

    fn reference_models() -> &'static UncertaintyModels {
        static M: OnceLock<UncertaintyModels> = OnceLock::new();
        M.get_or_init(|| UncertaintyModels::reference(11))
    }

    fn bounds() -> Bounds {
        Bounds {
            xmin: -100.0,
            xmax: 100.0,
            ymin: -100.0,
            ymax: 100.0,
        }
    }

    #[test]
    fn feature_inside_exclusion_radius() {
        let g = build_cgg_from_points(&[Point::new(4.9, 0.0)], Point::origin(), &params());
        assert_eq!(g.n_true(), 0);
    }

    #[test]
    fn single_feature_cell_index() {
        let a = 10f64.to_radians();
        let f = Point::new(23.0 * a.cos(), 23.0 * a.sin());
        let g = build_cgg_from_points(&[f], Point::origin(), &params());
        assert_eq!(g.n_true(), 1);
        assert!(g.is_true(3, 0));
        assert!((g.representatives[3 * 12].unwrap() - f).norm() < 1e-12);
    }

    #[test]
    fn centroid_of_two() {
        let f = [Point::new(20.0, 1.0), Point::new(21.0, 2.0)];
        let g = build_cgg_from_points(&f, Point::origin(), &params());
        assert_eq!(g.n_true(), 1);
        let rep = g.true_representatives().next().unwrap();
        assert!((rep - Point::new(20.5, 1.5)).norm() < 1e-12);
    }

    #[test]
    fn max_range_is_exclusive() {
        let g = build_cgg_from_points(&[Point::new(41.0, 0.0), Point::new(5.0, 0.0)], Point::origin(), &params());
        assert_eq!(g.n_true(), 1);
        assert!(g.is_true(0, 0));
    }

    #[test]
    fn range_3_4_5() {
        let (d, j) = range_observation(Point::origin(), Point::new(3.0, 4.0)).unwrap();
        assert_eq!(d, 5.0);
        assert!((j - Vector2::new(-0.6, -0.8)).norm() < 1e-15);
        assert!(matches!(
            range_observation(Point::new(1.0, 1.0), Point::new(1.0, 1.0)),
            Err(Error::DegenerateRange)
        ));
    }

    #[test]
    fn range_jacobian_rotates() {
        let (_, j) = range_observation(Point::new(1.0, 2.0), Point::new(4.0, -3.0)).unwrap();
        let (_, jr) = range_observation(Point::new(-2.0, 1.0), Point::new(3.0, 4.0)).unwrap();
        assert!((jr - Vector2::new(-j.y, j.x)).norm() < 1e-15);
    }

    #[test]
    fn unit_bearing_constant_noise() {
        let i = fim_for_grid(&UavState::new(0.0, 0.0, 5.0), Point::new(1.0, 0.0), &constant_models(1.0)).unwrap();
        let expect = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!((i - expect).norm() < 1e-15);
    }

    #[test]
    fn orthogonal_bearings() {
        let m = constant_models(1.0);
        let s = UavState::new(0.0, 0.0, 5.0);
        let i = fim_for_grid(&s, Point::new(7.0, 0.0), &m).unwrap() + fim_for_grid(&s, Point::new(0.0, -9.0), &m).unwrap();
        assert!((i.fixed_view::<2, 2>(0, 0) - Matrix2::identity()).norm() < 1e-15);
    }

    #[test]
    fn empty_map_zero_information() {
        let map = FeatureMap::empty(bounds());
        let i = fim_at_state(&UavState::new(0.0, 0.0, 3.0), &map, reference_models(), &params());
        assert_eq!(i, FisherInfo::zeros());
    }

    #[test]
    fn single_cell_equals_grid_term() {
        let f = Point::new(20.0, 3.0);
        let map = FeatureMap::new(vec![f], vec![], bounds()).unwrap();
        let s = UavState::new(0.0, 0.0, 3.0);
        let a = fim_at_state(&s, &map, reference_models(), &params());
        let b = fim_for_grid(&s, f, reference_models()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_bearing_cells_scale() {
        // one feature in each of k radial rings along the x-axis, all at equal
        // bearing; with constant noise the range terms are identical
        let m = constant_models(0.5);
        let s = UavState::new(0.0, 0.0, 3.0);
        let feats: Vec<Point> = (0..4).map(|k| Point::new(8.0 + 6.0 * k as f64, 0.0)).collect();
        let map = FeatureMap::new(feats, vec![], bounds()).unwrap();
        let total = fim_at_state(&s, &map, &m, &params());
        let single = fim_for_grid(&s, Point::new(8.0, 0.0), &m).unwrap();
        assert!((total - single * 4.0).norm() < 1e-12);
    }

    #[test]
    fn metric_examples() {
        let d = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 0.5));
        assert_eq!(fim_metric(&d, MetricKind::MinEigenvalue), 1.0);
        assert_eq!(fim_metric(&d, MetricKind::Determinant), 2.0);
        assert!((fim_metric(&d, MetricKind::FullMinEigenvalue) - 0.5).abs() < 1e-12);
        assert!((fim_metric(&d, MetricKind::FullDeterminant) - 1.0).abs() < 1e-12);
        assert_eq!(fim_metric(&FisherInfo::zeros(), MetricKind::MinEigenvalue), 0.0);
    }

    #[test]
    fn empty_segment_cost_is_floor() {
        let states: Vec<UavState> = (0..11).map(|i| UavState::new(i as f64, 0.0, 1.0)).collect();
        let map = FeatureMap::empty(bounds());
        let p = params();
        let c = segment_perception_cost(&states, &map, reference_models(), &p);
        assert!((c.c_p - 11.0 * p.dt / p.epsilon_fim).abs() < 1e-9);
        assert_eq!(c.quality, 0.0);
    }

    #[test]
    fn one_term_sum() {
        let c = perception_cost_from_metrics(vec![2.0], &params());
        assert!((c.c_p - 0.05).abs() < 1e-15);
        assert_eq!(c.quality, 2.0);
    }

    #[test]
    fn slower_is_more_informative() {
        let feats = vec![Point::new(10.0, 12.0), Point::new(-15.0, 20.0), Point::new(3.0, -25.0)];
        let map = FeatureMap::new(feats, vec![], bounds()).unwrap();
        let p = params();
        for x in [-5.0, 0.0, 5.0] {
            let slow = fim_metric(&fim_at_state(&UavState::new(x, 0.0, 2.0), &map, reference_models(), &p), p.fim_metric);
            let fast = fim_metric(&fim_at_state(&UavState::new(x, 0.0, 8.0), &map, reference_models(), &p), p.fim_metric);
            assert!(slow > fast, "{slow} vs {fast}");
        }
    }

    #[test]
    fn metric_csv_header() {
        let mut buf = Vec::new();
        write_metric_csv(&mut buf, &[UavState::new(1.0, 2.0, 3.0)], &[0.5]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x,y,v,s_of_I");
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,2,3,0.5");
    }

    fn feature_set() -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec((-60.0..60.0f64, -60.0..60.0f64), 0..40)
            .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn fim_is_symmetric_psd(feats in feature_set(), x in -20.0..20.0f64, y in -20.0..20.0f64, v in 1.0..10.0f64) {
            let map = FeatureMap::new(feats, vec![], bounds()).unwrap();
            let i = fim_at_state(&UavState::new(x, y, v), &map, reference_models(), &params());
            prop_assert!((i - i.transpose()).norm() <= 1e-12 * (1.0 + i.norm()));
            let eig = SymmetricEigen::new(i).eigenvalues;
            prop_assert!(eig.min() >= -1e-9 * (1.0 + i.norm()));
        }

        #[test]
        fn additivity(feats in feature_set(), v in 1.0..10.0f64) {
            let s = UavState::new(1.0, -2.0, v);
            let p = params();
            let g = build_cgg_from_points(&feats, s.position(), &p);
            let mut sum = FisherInfo::zeros();
            for rep in g.true_representatives() {
                sum += fim_for_grid(&s, rep, reference_models()).unwrap();
            }
            prop_assert_eq!(sum, fim_from_points(&s, &feats, reference_models(), &p));
        }

        #[test]
        fn translation_covariance(feats in feature_set(), tx in -30.0..30.0f64, ty in -30.0..30.0f64) {
            let p = params();
            let s = UavState::new(0.5, 0.25, 4.0);
            let moved: Vec<Point> = feats.iter().map(|f| Point::new(f.x + tx, f.y + ty)).collect();
            let s2 = UavState::new(s.x + tx, s.y + ty, s.v);
            let a = build_cgg_from_points(&feats, s.position(), &p);
            let b = build_cgg_from_points(&moved, s2.position(), &p);
            prop_assert_eq!(&a.cells, &b.cells);
            let ia = fim_from_points(&s, &feats, reference_models(), &p);
            let ib = fim_from_points(&s2, &moved, reference_models(), &p);
            let pa = ia.fixed_view::<2, 2>(0, 0).into_owned();
            let pb = ib.fixed_view::<2, 2>(0, 0).into_owned();
            prop_assert!((pa - pb).norm() <= 1e-6 * (1.0 + pa.norm()));
        }

        #[test]
        fn true_cells_bounded(feats in feature_set()) {
            let p = params();
            let g = build_cgg_from_points(&feats, Point::origin(), &p);
            prop_assert!(g.n_true() <= p.n_r * p.n_theta);
            for f in &feats {
                if let Some((i, j)) = cell_index(&Point::origin(), f, &p) {
                    prop_assert!(g.is_true(i, j));
                }
            }
        }

        #[test]
        fn extra_cell_lowers_cost(feats in feature_set(), angle in 0.0..std::f64::consts::TAU) {
            let p = params();
            let states: Vec<UavState> = (0..5).map(|i| UavState::new(i as f64 * 0.3, 0.0, 3.0)).collect();
            let before = perception_cost_from_metrics(state_metrics(&states, &feats, reference_models(), &p), &p);
            // a feature in a cell that is currently empty for every state
            let mut extra = feats.clone();
            let f = Point::new(0.6 + 20.0 * angle.cos(), 20.0 * angle.sin());
            let fresh = states.iter().all(|s| {
                let g = build_cgg_from_points(&feats, s.position(), &p);
                cell_index(&s.position(), &f, &p).is_some_and(|(i, j)| !g.is_true(i, j))
            });
            prop_assume!(fresh);
            extra.push(f);
            let after = perception_cost_from_metrics(state_metrics(&states, &extra, reference_models(), &p), &p);
            prop_assert!(after.c_p <= before.c_p);
            prop_assert!(after.quality >= before.quality);
        }
    }
}
