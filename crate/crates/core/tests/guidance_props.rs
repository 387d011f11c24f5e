mod common;

use hwydrive_core::guidance::{
    build_guidance, hybrid_bounds, invert_guidance, quintic_coefficients, quintic_eval, update_guidance, GuidanceConfig,
    HybridAction, LaneOption,
};
use hwydrive_core::sim::{Pose, RoadConfig, VehicleState};
use common::{ego_pose, oracle_coefficients, random_action, random_ego};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn boundary_residuals_and_oracle_agreement() {
    let road = RoadConfig::default();
    let cfg = GuidanceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let ego = random_ego(&mut rng, &road);
        let a = random_action(&mut rng, &ego, &road, &cfg);
        let g = build_guidance(a, &ego, &road, &cfg).unwrap();
        let end_y = road.lane_center(a.option.target_lane(ego.lane_id, road.lane_count).unwrap()) - ego.y;
        let [y0, s0, k0] = quintic_eval(&g.coeffs, 0.0);
        let [y1, s1, k1] = quintic_eval(&g.coeffs, a.distance);
        for r in [y0, s0 - ego.heading.tan(), k0, y1 - end_y, s1, k1] {
            worst = worst.max(r.abs());
        }
        // the oracle is ill-conditioned in raw x, so compare the curves rather than coefficients
        let c = oracle_coefficients(ego.heading.tan(), a.distance, end_y, 0.0);
        for k in 0..=20 {
            let x = a.distance * k as f64 / 20.0;
            let diff = quintic_eval(&g.coeffs, x)[0] - quintic_eval(&c, x)[0];
            assert!(diff.abs() < 1e-6, "oracle disagreement {diff} at x = {x}");
        }
        for w in g.points.windows(2) {
            assert!(w[1][0] > w[0][0]);
        }
        for p in &g.points {
            assert!((quintic_eval(&g.coeffs, p[0])[0] - p[1]).abs() <= 1e-9);
        }
        assert_eq!(g.points[0], [0.0, 0.0]);
        assert_eq!(*g.points.last().unwrap(), [a.distance, end_y]);
    }
    assert!(worst <= 1e-9, "boundary residual {worst:e}");
}

#[test]
fn left_change_example_coefficients() {
    let c = quintic_coefficients(0.0, 20.0, 4.0, 0.0).unwrap();
    let oracle = oracle_coefficients(0.0, 20.0, 4.0, 0.0);
    let expect = [0.0, 0.0, 0.0, 0.005, -3.75e-4, 7.5e-6];
    for m in 0..6 {
        assert!((c[m] - expect[m]).abs() <= 1e-12 * expect[m].abs().max(1e-3), "c{m} = {}", c[m]);
        assert!((oracle[m] - expect[m]).abs() <= 1e-9 * expect[m].abs().max(1e-3));
    }
}

#[test]
fn round_trip_recovers_action() {
    let road = RoadConfig::default();
    let cfg = GuidanceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let ego = random_ego(&mut rng, &road);
        let a = random_action(&mut rng, &ego, &road, &cfg);
        let g = build_guidance(a, &ego, &road, &cfg).unwrap();
        let back = invert_guidance(&g, &ego_pose(&ego), &road).unwrap();
        assert_eq!(back.option, a.option);
        assert!((back.distance - a.distance).abs() <= 1e-9);
    }
}

#[test]
fn quantization_snaps_to_nearest_lane_offset() {
    let road = RoadConfig::default();
    let cfg = GuidanceConfig::default();
    let ego = VehicleState::new(0, 0.0, road.lane_center(0), 15.0, 5.0, 2.0);
    let mut g = build_guidance(HybridAction::new(LaneOption::Left, 40.0), &ego, &road, &cfg).unwrap();
    // endpoint 3.9 m to the left of the ego lane center
    g.points.last_mut().unwrap()[1] = 3.9;
    let a = invert_guidance(&g, &ego_pose(&ego), &road).unwrap();
    assert_eq!(a.option, LaneOption::Left);
    g.points.last_mut().unwrap()[1] = 0.3;
    assert_eq!(invert_guidance(&g, &ego_pose(&ego), &road).unwrap().option, LaneOption::Keep);
}

#[test]
fn update_preserves_world_points() {
    let road = RoadConfig::default();
    let cfg = GuidanceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut dropped = 0;
    for _ in 0..1000 {
        let ego = random_ego(&mut rng, &road);
        let a = random_action(&mut rng, &ego, &road, &cfg);
        let g = build_guidance(a, &ego, &road, &cfg).unwrap();
        let before = g.world_points();
        let old = ego_pose(&ego);
        let new = Pose {
            x: old.x + rng.random_range(0.0..4.0),
            y: old.y + rng.random_range(-0.4..0.4),
            heading: old.heading + rng.random_range(-0.1..0.1),
        };
        let (u, _) = match update_guidance(&g, &old, &new, &road) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let after = u.world_points();
        let expected: Vec<&[f64; 2]> = before.iter().filter(|p| p[0] - new.x > 1e-9).collect();
        assert_eq!(after.len(), expected.len());
        dropped += before.len() - after.len();
        for (p, q) in after.iter().zip(expected) {
            worst = worst.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
        }
        for p in &u.points {
            assert!(p[0] > 0.0);
        }
    }
    assert!(dropped > 0);
    assert!(worst <= 1e-9, "world drift {worst:e}");
}

#[test]
fn crossing_the_divider_relabels_to_keep() {
    let road = RoadConfig::default();
    let cfg = GuidanceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let lane = rng.random_range(0..road.lane_count - 1);
        let (option, target) = if rng.random_bool(0.5) || lane == 0 {
            (LaneOption::Left, lane + 1)
        } else {
            (LaneOption::Right, lane - 1)
        };
        let ego = VehicleState::new(lane, 0.0, road.lane_center(lane), 15.0, 5.0, 2.0);
        let g = build_guidance(HybridAction::new(option, rng.random_range(30.0..80.0)), &ego, &road, &cfg).unwrap();
        let old = ego_pose(&ego);
        // still short of the divider: label unchanged
        let frac = rng.random_range(0.05..0.45);
        let short = Pose {
            x: 5.0,
            y: old.y + (road.lane_center(target) - old.y) * frac,
            heading: 0.0,
        };
        assert_eq!(update_guidance(&g, &old, &short, &road).unwrap().1.option, option);
        // past the divider, inside the target lane
        let frac = rng.random_range(0.55..1.0);
        let past = Pose {
            x: 10.0,
            y: old.y + (road.lane_center(target) - old.y) * frac,
            heading: 0.0,
        };
        assert_eq!(update_guidance(&g, &old, &past, &road).unwrap().1.option, LaneOption::Keep);
    }
}

#[test]
fn exhaustion_is_reported() {
    let road = RoadConfig::default();
    let cfg = GuidanceConfig::default();
    let ego = VehicleState::new(1, 0.0, road.lane_center(1), 15.0, 5.0, 2.0);
    let g = build_guidance(HybridAction::new(LaneOption::Keep, 20.0), &ego, &road, &cfg).unwrap();
    let old = ego_pose(&ego);
    let new = Pose { x: 25.0, ..old };
    assert!(update_guidance(&g, &old, &new, &road).is_err());
}

#[test]
fn bounds_example() {
    let road = RoadConfig {
        lane_width: 4.0,
        min_turn_radius: 12.0,
        max_brake: 3.0,
        ..RoadConfig::default()
    };
    let ego = VehicleState::new(1, 0.0, road.lane_center(1), 10.0, 5.0, 2.0);
    let b = hybrid_bounds(&ego, &road, &GuidanceConfig::default());
    assert!((b.min_distance - 176f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn bounds_are_ordered_and_respect_edges(lane in 0usize..3, v in 0.0f64..40.0) {
        let road = RoadConfig::default();
        let ego = VehicleState::new(lane, 0.0, road.lane_center(lane), v, 5.0, 2.0);
        let b = hybrid_bounds(&ego, &road, &GuidanceConfig::default());
        prop_assert!(b.min_distance > 0.0);
        prop_assert!(b.min_distance <= b.max_distance);
        for o in b.options() {
            prop_assert!(o.target_lane(lane, road.lane_count).is_some());
        }
        prop_assert_eq!(b.available[LaneOption::Keep.index()], true);
    }

    #[test]
    fn lane_keeping_is_flat(lane in 0usize..3, d in 5.0f64..160.0) {
        let road = RoadConfig::default();
        let ego = VehicleState::new(lane, 0.0, road.lane_center(lane), 15.0, 5.0, 2.0);
        let g = build_guidance(HybridAction::new(LaneOption::Keep, d), &ego, &road, &GuidanceConfig::default()).unwrap();
        prop_assert!(g.coeffs.iter().all(|c| *c == 0.0));
        prop_assert!(g.points.iter().all(|p| p[1] == 0.0));
    }

    #[test]
    fn nonpositive_distance_is_rejected(d in -10.0f64..=0.0) {
        let road = RoadConfig::default();
        let ego = VehicleState::new(1, 0.0, road.lane_center(1), 15.0, 5.0, 2.0);
        prop_assert!(build_guidance(HybridAction::new(LaneOption::Keep, d), &ego, &road, &GuidanceConfig::default()).is_err());
    }
}
