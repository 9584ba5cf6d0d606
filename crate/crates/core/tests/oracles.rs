//! Frozen reference values and parameter defaults.

use std::f64::consts::FRAC_PI_2;

use pep_core::energy::{fit_energy_model, generate_power_dataset, reference_power_const, segment_energy_cost};
use pep_core::geometry::arc_length;
use pep_core::perception::{build_cgg_from_points, cell_index};
use pep_core::scenario::Scenario;
use pep_core::spline::{sample_states, smooth, VelocityProfile};
use pep_core::uncertainty::{
    fit_motion_model, generate_reference_dataset, reference_mean, reference_std, DistanceUncertaintyModel,
    UncertaintyModels, REFERENCE_SPEEDS,
};
use pep_core::{Point, PlannerParams};

#[test]
fn grid_and_vehicle_defaults() {
    let p = PlannerParams::default();
    assert_eq!(p.alpha_e, 1.0);
    assert_eq!(p.r_max, 41.0);
    assert_eq!(p.r_min, 5.0);
    assert_eq!(p.n_r, 6);
    assert_eq!(p.n_theta, 12);
    assert_eq!(p.v_max, 10.0);
    assert_eq!(p.v_min, 1.0);
    assert_eq!(p.p_max, 600.0);
    assert_eq!(p.a_max, 1.0);
}

#[test]
fn omitted_ranges_take_defaults() {
    let text = r#"{
        "features": [[10.0, 5.0]],
        "start": {"x": 0.0, "y": 0.0},
        "goal": {"cx": 50.0, "cy": 0.0, "radius": 5.0},
        "params": {"alpha_p": 2.0},
        "bounds": {"xmin": -10.0, "xmax": 60.0, "ymin": -30.0, "ymax": 30.0}
    }"#;
    let s = Scenario::from_json(text).unwrap();
    assert_eq!(s.params.r_min, 5.0);
    assert_eq!(s.params.r_max, 41.0);
    assert_eq!(s.params.alpha_p, 2.0);
}

#[test]
fn zero_goal_radius_names_field() {
    let text = r#"{
        "features": [],
        "start": {"x": 0.0, "y": 0.0},
        "goal": {"cx": 50.0, "cy": 0.0, "radius": 0.0},
        "bounds": {"xmin": -10.0, "xmax": 60.0, "ymin": -30.0, "ymax": 30.0}
    }"#;
    let err = Scenario::from_json(text).unwrap_err();
    assert!(err.to_string().contains("goal.radius"), "{err}");
}

#[test]
fn quarter_circle_length() {
    let n = 10_000;
    let pts: Vec<Point> = (0..=n)
        .map(|i| {
            let a = FRAC_PI_2 * i as f64 / n as f64;
            Point::new(a.cos(), a.sin())
        })
        .collect();
    assert!((arc_length(&pts).unwrap() - FRAC_PI_2).abs() < 1e-3);
}

#[test]
fn feature_cell_at_23m_10deg() {
    let p = PlannerParams::default();
    let a = 10f64.to_radians();
    let f = Point::new(23.0 * a.cos(), 23.0 * a.sin());
    let origin = Point::new(0.0, 0.0);
    assert_eq!(cell_index(&origin, &f, &p), Some((3, 0)));
    let g = build_cgg_from_points(&[f], origin, &p);
    assert_eq!(g.n_true(), 1);
    assert!(g.is_true(3, 0));
}

#[test]
fn feature_inside_exclusion_radius() {
    let p = PlannerParams::default();
    let g = build_cgg_from_points(&[Point::new(4.9, 0.0)], Point::new(0.0, 0.0), &p);
    assert_eq!(g.n_true(), 0);
}

#[test]
fn power_law_values() {
    assert!((reference_power_const(1.0) - 208.2).abs() < 1e-9);
    assert!((reference_power_const(4.0) - 199.2).abs() < 1e-9);
    assert!((reference_power_const(8.0) / 8.0 - 31.1).abs() < 1e-9);
}

#[test]
fn cruise_only_segment_cost() {
    let exact = fit_energy_model(&generate_power_dataset(0, 1, 0.0)).unwrap();
    assert!((exact.p_const_fn(4.0) - 199.2).abs() < 1e-6);
    let c = segment_energy_cost(&exact, 1.0, 1.0, 60.0, 1.0, 600.0).unwrap();
    assert!((c.c_e - 20.82).abs() < 1e-9, "{}", c.c_e);
}

#[test]
fn uncertainty_law_values() {
    assert!((reference_mean(4.0) - 0.064).abs() < 1e-15);
    assert!((reference_mean(0.1) - 4e-5).abs() < 1e-15);
    let data = generate_reference_dataset(500, &REFERENCE_SPEEDS, 11).unwrap();
    let m = fit_motion_model(&data).unwrap();
    assert!((m.mean(4.0) - 0.064).abs() <= 0.2 * 0.064);
}

#[test]
fn combined_noise_by_hand() {
    // reference law at v = 6 composed with the range term at d = 20
    let data = generate_reference_dataset(500, &REFERENCE_SPEEDS, 0).unwrap();
    let unc = UncertaintyModels {
        motion: fit_motion_model(&data).unwrap(),
        distance: DistanceUncertaintyModel { k_d: 0.001 },
    };
    let n = unc.noise(6.0, 20.0);
    let expected = (0.02f64.powi(2) + unc.motion.std(6.0).powi(2)).sqrt();
    assert!((n.sigma_sens - expected).abs() < 1e-15);
    assert_eq!(n.mu_sens, unc.motion.mean(6.0));
    // and the fitted std sits near the law it came from
    assert!((unc.motion.std(6.0) - reference_std(6.0)).abs() < 0.1 * reference_std(6.0));
}

#[test]
fn ramp_then_cruise_kinematics() {
    let cps: Vec<Point> = (0..5).map(|i| Point::new(10.0 * i as f64, 0.0)).collect();
    let path = smooth(&cps).unwrap();
    let profile = VelocityProfile {
        v_cur: 1.0,
        v_tmp: 2.0,
        a_max: 1.0,
    };
    let states = sample_states(&path, profile, 0.1).unwrap();
    for s in &states[..states.len() - 1] {
        let expected = if s.t <= 1.0 { s.t + 0.5 * s.t * s.t } else { 1.5 + 2.0 * (s.t - 1.0) };
        assert!((s.x - expected).abs() < 1e-6, "t={} x={} want {}", s.t, s.x, expected);
    }
}

#[test]
fn square_wave_length_against_dense_polyline() {
    let cps = vec![
        Point::new(0.0, 0.0),
        Point::new(10.0, 0.0),
        Point::new(10.0, 10.0),
        Point::new(20.0, 10.0),
        Point::new(20.0, 0.0),
        Point::new(30.0, 0.0),
    ];
    let path = smooth(&cps).unwrap();
    let end = *path.knots.last().unwrap();
    let n = 10_000;
    let dense: Vec<Point> = (0..=n).map(|i| path.point_at_param(end * i as f64 / n as f64)).collect();
    let reference = arc_length(&dense).unwrap();
    assert!((path.total_length() - reference).abs() <= 1e-3 * reference);
}
