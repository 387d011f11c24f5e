//! Oracles shared by the integration tests. Each is written independently of
//! the library code it checks.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod fd;

use std::collections::BTreeMap;

use hwydrive_core::guidance::{hybrid_bounds, GuidanceConfig, HybridAction, LaneOption};
use hwydrive_core::safety::RiskCandidate;
use hwydrive_core::sim::geometry::Point;
use hwydrive_core::sim::{Pose, RoadConfig, VehicleState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn inside(p: Point, poly: &[Point; 4]) -> bool {
    (0..4).all(|i| cross(poly[i], poly[(i + 1) % 4], p) >= 0.0)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0
}

/// Two convex polygons intersect iff an edge pair crosses or one contains a
/// vertex of the other.
pub fn brute_overlap(a: &[Point; 4], b: &[Point; 4]) -> bool {
    for i in 0..4 {
        for j in 0..4 {
            if segments_intersect(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4]) {
                return true;
            }
        }
    }
    a.iter().any(|&p| inside(p, b)) || b.iter().any(|&p| inside(p, a))
}

pub fn euler_oracle(mut s: [f64; 4], steer: f64, accel: f64, wheelbase: f64, dt: f64, substeps: usize) -> [f64; 4] {
    let h = dt / substeps as f64;
    let lr = wheelbase / 2.0;
    let beta = (steer.tan() * lr / wheelbase).atan();
    for _ in 0..substeps {
        let [_, _, psi, v] = s;
        s = [
            s[0] + h * v * (psi + beta).cos(),
            s[1] + h * v * (psi + beta).sin(),
            s[2] + h * v / lr * beta.sin(),
            s[3] + h * accel,
        ];
    }
    s
}

/// Plain 6x6 boundary system in raw `x`, solved with Gauss-Jordan elimination.
pub fn oracle_coefficients(slope0: f64, xe: f64, ye: f64, slope_e: f64) -> [f64; 6] {
    let row = |x: f64, d: usize| -> [f64; 6] {
        let mut r = [0.0; 6];
        for (m, v) in r.iter_mut().enumerate() {
            if m >= d {
                let k: f64 = (0..d).map(|j| (m - j) as f64).product();
                *v = k * x.powi((m - d) as i32);
            }
        }
        r
    };
    let mut a = [row(0.0, 0), row(0.0, 1), row(0.0, 2), row(xe, 0), row(xe, 1), row(xe, 2)];
    let mut b = [0.0, slope0, 0.0, ye, slope_e, 0.0];
    for c in 0..6 {
        let p = (c..6).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..6 {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in 0..6 {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = b[i] / a[i][i];
    }
    out
}

/// Independent reading of the event log: checks segment structure and the
/// high-level reward of every segment.
pub fn replay_log(text: &str, n_max: u64) -> usize {
    let mut segments = 0;
    let mut pending: Vec<Value> = Vec::new();
    let mut steps_per_episode: BTreeMap<u64, u64> = BTreeMap::new();
    let mut seg_steps: BTreeMap<u64, u64> = BTreeMap::new();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        match v["kind"].as_str().unwrap() {
            "low" => {
                assert_eq!(v["i"].as_u64().unwrap(), pending.len() as u64 + 1, "step index within segment");
                if let Some(prev) = pending.last() {
                    assert!(!prev["beta"].as_bool().unwrap(), "steps after beta in one segment");
                }
                *steps_per_episode.entry(v["episode"].as_u64().unwrap()).or_default() += 1;
                pending.push(v);
            }
            "high" => {
                let n = pending.len() as u64;
                assert!((1..=n_max).contains(&n), "segment with {n} low steps");
                assert_eq!(v["steps"].as_u64().unwrap(), n);
                assert!(pending.last().unwrap()["beta"].as_bool().unwrap(), "segment not closed by beta");
                for p in &pending {
                    assert_eq!(p["segment"], v["segment"]);
                    assert_eq!(p["episode"], v["episode"]);
                }
                let violation = pending.last().unwrap()["violation"].as_bool().unwrap();
                let expect = if violation {
                    -10.0
                } else {
                    pending.iter().map(|p| p["reward"].as_f64().unwrap()).sum::<f64>() / n as f64
                };
                let got = v["reward"].as_f64().unwrap();
                assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "r_h {got} vs {expect}");
                *seg_steps.entry(v["episode"].as_u64().unwrap()).or_default() += n;
                pending.clear();
                segments += 1;
            }
            k => panic!("unknown event kind {k}"),
        }
    }
    assert!(pending.is_empty(), "low steps without a high transition");
    assert_eq!(steps_per_episode, seg_steps);
    segments
}

pub fn brute_correct(c: &[RiskCandidate], chosen: usize, eta: f64, k_th: f64) -> usize {
    if eta * c[chosen].risk < k_th {
        return chosen;
    }
    let safe: Vec<usize> = (0..c.len()).filter(|&i| eta * c[i].risk < k_th).collect();
    if !safe.is_empty() {
        let best = safe.iter().map(|&i| c[i].q).fold(f64::NEG_INFINITY, f64::max);
        return *safe.iter().find(|&&i| c[i].q == best).unwrap();
    }
    let least = c.iter().map(|x| x.risk).fold(f64::INFINITY, f64::min);
    c.iter().position(|x| x.risk == least).unwrap()
}

/// Ego somewhere inside a lane, slightly off center and yawed.
pub fn random_ego(rng: &mut ChaCha8Rng, road: &RoadConfig) -> VehicleState {
    let lane = rng.random_range(0..road.lane_count);
    let y = road.lane_center(lane) + rng.random_range(-0.45..0.45) * road.lane_width;
    let mut e = VehicleState::new(lane, rng.random_range(-500.0..500.0), y, rng.random_range(0.0..35.0), 5.0, 2.0);
    e.heading = rng.random_range(-0.3..0.3);
    e
}

pub fn random_action(rng: &mut ChaCha8Rng, ego: &VehicleState, road: &RoadConfig, cfg: &GuidanceConfig) -> HybridAction {
    let b = hybrid_bounds(ego, road, cfg);
    let opts: Vec<LaneOption> = b.options().collect();
    let o = opts[rng.random_range(0..opts.len())];
    let d = if b.max_distance > b.min_distance { rng.random_range(b.min_distance..=b.max_distance) } else { b.min_distance };
    HybridAction::new(o, d)
}

pub fn ego_pose(e: &VehicleState) -> Pose {
    Pose {
        x: e.x,
        y: e.y,
        heading: e.heading,
    }
}

