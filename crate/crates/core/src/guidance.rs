//! Hybrid guidance actions and their quintic-path representation.
//!
//! A guidance action is a discrete lane offset plus a continuous longitudinal
//! endpoint distance. It maps one-to-one onto a set of path points sampled
//! from a quintic `y(x)` that starts at the ego (with its current heading) and
//! ends lane-centered and lane-aligned at the endpoint. The point set is
//! expressed in a frame that translates with the ego; on a straight road this
//! is the Frenet frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Pose, RoadConfig, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaneOption {
    Right,
    Keep,
    Left,
}

impl LaneOption {
    pub const ALL: [LaneOption; 3] = [LaneOption::Right, LaneOption::Keep, LaneOption::Left];

    pub fn index(self) -> usize {
        match self {
            LaneOption::Right => 0,
            LaneOption::Keep => 1,
            LaneOption::Left => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn lane_delta(self) -> i64 {
        self.index() as i64 - 1
    }

    /// Lateral offset `o` in meters.
    pub fn offset(self, lane_width: f64) -> f64 {
        self.lane_delta() as f64 * lane_width
    }

    pub fn target_lane(self, lane: usize, lane_count: usize) -> Option<usize> {
        let t = lane as i64 + self.lane_delta();
        (0..lane_count as i64).contains(&t).then_some(t as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// g, number of path points.
    pub points: usize,
    /// ε_x, lower floor on the endpoint distance, m.
    pub min_distance: f64,
    /// Upper cap on the endpoint distance (observation range), m.
    pub max_distance: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            points: 10,
            min_distance: 5.0,
            max_distance: 160.0,
        }
    }
}

/// The options available in the current lane and the admissible range of the
/// endpoint distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridActionSpace {
    pub available: [bool; 3],
    pub min_distance: f64,
    pub max_distance: f64,
}

impl HybridActionSpace {
    pub fn options(&self) -> impl Iterator<Item = LaneOption> + '_ {
        LaneOption::ALL.into_iter().filter(|o| self.available[o.index()])
    }

    pub fn contains(&self, a: &HybridAction) -> bool {
        self.available[a.option.index()]
            && a.distance >= self.min_distance
            && a.distance <= self.max_distance
    }

    /// Map a squashed value in `[-1, 1]` onto the distance range.
    pub fn distance_from_unit(&self, t: f64) -> f64 {
        let d = self.min_distance + 0.5 * (t + 1.0) * (self.max_distance - self.min_distance);
        d.clamp(self.min_distance, self.max_distance)
    }

    /// `d distance / d t` of [`Self::distance_from_unit`].
    pub fn distance_slope(&self) -> f64 {
        0.5 * (self.max_distance - self.min_distance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub option: LaneOption,
    /// a^h, longitudinal endpoint distance, m.
    pub distance: f64,
}

impl HybridAction {
    pub fn new(option: LaneOption, distance: f64) -> Self {
        Self { option, distance }
    }
}

pub fn hybrid_bounds(ego: &VehicleState, road: &RoadConfig, cfg: &GuidanceConfig) -> HybridActionSpace {
    let w = road.lane_width;
    let v = ego.speed.abs();
    let turning = (4.0 * road.min_turn_radius * w - w * w).sqrt();
    let braking = v * v / (2.0 * road.max_brake);
    let min_distance = turning.min(braking).max(cfg.min_distance);
    // e^(|v|+w) overflows for ordinary speeds; the observation range caps it
    let max_distance = (v + w).exp().min(cfg.max_distance).max(min_distance);
    let mut available = [false; 3];
    for o in LaneOption::ALL {
        available[o.index()] = o.target_lane(ego.lane_id, road.lane_count).is_some();
    }
    HybridActionSpace {
        available,
        min_distance,
        max_distance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionGuidance {
    /// Path points in the current ego-anchored frame.
    pub points: Vec<[f64; 2]>,
    /// c_0..c_5 in the construction frame.
    pub coeffs: [f64; 6],
    pub end_heading: f64,
    /// World pose of the ego when the guidance was built.
    pub anchor: Pose,
    /// World position of the current frame origin.
    pub origin: [f64; 2],
    /// Endpoint in the construction frame.
    pub end: [f64; 2],
    /// Action that generated the guidance.
    pub action: HybridAction,
}

// Horner for the value, with the derivatives accumulated alongside.
fn eval_poly(c: &[f64; 6], x: f64) -> [f64; 3] {
    let mut y = 0.0;
    let mut dy = 0.0;
    let mut ddy = 0.0;
    for m in (0..6).rev() {
        ddy = ddy * x + dy * 2.0;
        dy = dy * x + y;
        y = y * x + c[m];
    }
    [y, dy, ddy]
}

/// Value, slope and curvature term `y''` of the quintic at construction-frame `x`.
pub fn quintic_eval(c: &[f64; 6], x: f64) -> [f64; 3] {
    eval_poly(c, x)
}

/// Solve `A z = b` by Gaussian elimination with partial pivoting.
fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let pivot_row = a[col];
            for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut z = [0.0; N];
    for row in (0..N).rev() {
        let mut acc = b[row];
        for k in row + 1..N {
            acc -= a[row][k] * z[k];
        }
        z[row] = acc / a[row][row];
    }
    Some(z)
}

/// Quintic coefficients for `y(0)=0, y'(0)=start_slope, y''(0)=0,
/// y(end_x)=end_y, y'(end_x)=end_slope, y''(end_x)=0`.
///
/// The system is solved in the normalized abscissa `u = x / end_x` to keep it
/// well conditioned, then rescaled.
pub fn quintic_coefficients(start_slope: f64, end_x: f64, end_y: f64, end_slope: f64) -> Result<[f64; 6]> {
    if !end_x.is_finite() || end_x <= 0.0 {
        return Err(Error::InvalidAction(format!("endpoint distance must be positive, got {end_x}")));
    }
    // The start conditions pin d0..d2 directly; the end conditions leave a
    // 3x3 system in d3..d5.
    let start = start_slope * end_x;
    let row = |deriv: usize| -> [f64; 3] {
        let mut r = [0.0; 3];
        for (k, slot) in r.iter_mut().enumerate() {
            let m = k + 3;
            *slot = (0..deriv).map(|j| (m - j) as f64).product();
        }
        r
    };
    let a = [row(0), row(1), row(2)];
    let b = [end_y - start, end_slope * end_x - start, 0.0];
    let tail = solve_dense(a, b).ok_or_else(|| Error::InvalidAction("singular boundary system".into()))?;
    let d = [0.0, start, 0.0, tail[0], tail[1], tail[2]];
    let mut c = [0.0; 6];
    for m in 0..6 {
        c[m] = d[m] / end_x.powi(m as i32);
    }
    Ok(c)
}

pub fn build_guidance(
    action: HybridAction,
    ego: &VehicleState,
    road: &RoadConfig,
    cfg: &GuidanceConfig,
) -> Result<MotionGuidance> {
    let a_h = action.distance;
    if !a_h.is_finite() || a_h <= 0.0 {
        return Err(Error::InvalidAction(format!("endpoint distance must be positive, got {a_h}")));
    }
    let target = action
        .option
        .target_lane(ego.lane_id, road.lane_count)
        .ok_or_else(|| Error::InvalidAction(format!("{:?} from lane {} leaves the road", action.option, ego.lane_id)))?;
    let end_y = road.lane_center(target) - ego.y;
    let end_heading: f64 = 0.0;
    let coeffs = quintic_coefficients(ego.heading.tan(), a_h, end_y, end_heading.tan())?;
    let g = cfg.points.max(2);
    let mut points = Vec::with_capacity(g);
    for j in 0..g {
        let x = if j + 1 == g { a_h } else { a_h * j as f64 / (g - 1) as f64 };
        let y = if j + 1 == g { end_y } else if j == 0 { 0.0 } else { eval_poly(&coeffs, x)[0] };
        points.push([x, y]);
    }
    Ok(MotionGuidance {
        points,
        coeffs,
        end_heading,
        anchor: Pose {
            x: ego.x,
            y: ego.y,
            heading: ego.heading,
        },
        origin: [ego.x, ego.y],
        end: [a_h, end_y],
        action,
    })
}

impl MotionGuidance {
    /// Offset of the current frame relative to the construction frame.
    fn shift(&self) -> [f64; 2] {
        [self.origin[0] - self.anchor.x, self.origin[1] - self.anchor.y]
    }

    pub fn world_points(&self) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .map(|p| [p[0] + self.origin[0], p[1] + self.origin[1]])
            .collect()
    }

    /// World-frame endpoint.
    pub fn world_end(&self) -> [f64; 2] {
        [self.anchor.x + self.end[0], self.anchor.y + self.end[1]]
    }

    /// Lane that the endpoint lies in.
    pub fn target_lane(&self, road: &RoadConfig) -> usize {
        road.lane_of(self.world_end()[1])
    }

    /// Lateral position and tangent slope of the path at current-frame `x`.
    /// Beyond the endpoint the path continues straight along the target lane.
    pub fn path_at(&self, x: f64) -> (f64, f64) {
        let [sx, sy] = self.shift();
        let xc = x + sx;
        if xc >= self.end[0] {
            return (self.end[1] - sy, self.end_heading.tan());
        }
        let xc = xc.max(0.0);
        let [y, dy, _] = eval_poly(&self.coeffs, xc);
        (y - sy, dy)
    }
}

/// Recover `(o, a^h)` from a guidance point set as seen from `ego`.
pub fn invert_guidance(g: &MotionGuidance, ego: &Pose, road: &RoadConfig) -> Result<HybridAction> {
    let Some(last) = g.points.last() else {
        return Err(Error::GuidanceExhausted);
    };
    let world = [last[0] + g.origin[0], last[1] + g.origin[1]];
    let distance = world[0] - ego.x;
    if distance.is_nan() || distance <= 0.0 {
        return Err(Error::EndpointBehind);
    }
    let lane = road.lane_of(ego.y);
    let lanes = ((world[1] - road.lane_center(lane)) / road.lane_width).round();
    let option = match lanes as i64 {
        d if d <= -1 => LaneOption::Right,
        0 => LaneOption::Keep,
        _ => LaneOption::Left,
    };
    Ok(HybridAction::new(option, distance))
}

/// Re-express the guidance in the frame of the ego's new pose, drop points the
/// ego has passed, and relabel the implied action.
pub fn update_guidance(
    g: &MotionGuidance,
    old_pose: &Pose,
    new_pose: &Pose,
    road: &RoadConfig,
) -> Result<(MotionGuidance, HybridAction)> {
    let dx = new_pose.x - old_pose.x;
    let dy = new_pose.y - old_pose.y;
    let points: Vec<[f64; 2]> = g
        .points
        .iter()
        .map(|p| [p[0] - dx, p[1] - dy])
        .filter(|p| p[0] > 0.0)
        .collect();
    if points.is_empty() {
        return Err(Error::GuidanceExhausted);
    }
    let updated = MotionGuidance {
        points,
        origin: [g.origin[0] + dx, g.origin[1] + dy],
        ..g.clone()
    };
    let action = invert_guidance(&updated, new_pose, road)?;
    Ok((updated, action))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ego(lane: usize, speed: f64) -> VehicleState {
        let road = RoadConfig::default();
        VehicleState::new(lane, 0.0, road.lane_center(lane), speed, 5.0, 2.0)
    }

    #[test]
    fn bounds_at_ten_meters_per_second() {
        let road = RoadConfig::default();
        let b = hybrid_bounds(&ego(1, 10.0), &road, &GuidanceConfig::default());
        assert!((b.min_distance - 176.0_f64.sqrt()).abs() < 1e-12);
        assert_eq!(b.max_distance, 160.0);
        assert_eq!(b.available, [true, true, true]);
    }

    #[test]
    fn bounds_at_standstill_use_floor() {
        let road = RoadConfig::default();
        let cfg = GuidanceConfig::default();
        let b = hybrid_bounds(&ego(1, 0.0), &road, &cfg);
        assert_eq!(b.min_distance, cfg.min_distance);
        assert!((b.max_distance - 4.0_f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn edge_lanes_mask_options() {
        let road = RoadConfig::default();
        let cfg = GuidanceConfig::default();
        assert_eq!(hybrid_bounds(&ego(2, 10.0), &road, &cfg).available, [true, true, false]);
        assert_eq!(hybrid_bounds(&ego(0, 10.0), &road, &cfg).available, [false, true, true]);
    }

    #[test]
    fn lane_keeping_is_flat() {
        let road = RoadConfig::default();
        let g = build_guidance(HybridAction::new(LaneOption::Keep, 30.0), &ego(1, 10.0), &road, &GuidanceConfig::default()).unwrap();
        assert!(g.coeffs.iter().all(|&c| c == 0.0));
        assert!(g.points.iter().all(|p| p[1] == 0.0));
        assert_eq!(g.points[0], [0.0, 0.0]);
        assert_eq!(g.points.last().unwrap()[0], 30.0);
    }

    #[test]
    fn left_change_coefficients() {
        let c = quintic_coefficients(0.0, 20.0, 4.0, 0.0).unwrap();
        let expected = [0.0, 0.0, 0.0, 0.005, -3.75e-4, 7.5e-6];
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-6), "{c:?}");
        }
    }

    #[test]
    fn nonpositive_distance_rejected() {
        let road = RoadConfig::default();
        let cfg = GuidanceConfig::default();
        assert!(build_guidance(HybridAction::new(LaneOption::Keep, 0.0), &ego(1, 10.0), &road, &cfg).is_err());
        assert!(build_guidance(HybridAction::new(LaneOption::Left, -3.0), &ego(1, 10.0), &road, &cfg).is_err());
        assert!(build_guidance(HybridAction::new(LaneOption::Left, 20.0), &ego(2, 10.0), &road, &cfg).is_err());
    }

    #[test]
    fn quantization_picks_nearest_lane() {
        let road = RoadConfig::default();
        let e = ego(1, 10.0);
        let mut g = build_guidance(HybridAction::new(LaneOption::Keep, 30.0), &e, &road, &GuidanceConfig::default()).unwrap();
        g.points.last_mut().unwrap()[1] = 3.9;
        let pose = Pose { x: e.x, y: e.y, heading: 0.0 };
        assert_eq!(invert_guidance(&g, &pose, &road).unwrap().option, LaneOption::Left);
        g.points.last_mut().unwrap()[1] = 1.9;
        assert_eq!(invert_guidance(&g, &pose, &road).unwrap().option, LaneOption::Keep);
        g.points.last_mut().unwrap()[1] = -2.1;
        assert_eq!(invert_guidance(&g, &pose, &road).unwrap().option, LaneOption::Right);
    }

    #[test]
    fn endpoint_behind_is_an_error() {
        let road = RoadConfig::default();
        let e = ego(1, 10.0);
        let g = build_guidance(HybridAction::new(LaneOption::Keep, 30.0), &e, &road, &GuidanceConfig::default()).unwrap();
        let pose = Pose { x: 31.0, y: e.y, heading: 0.0 };
        assert!(matches!(invert_guidance(&g, &pose, &road), Err(Error::EndpointBehind)));
    }

    #[test]
    fn translation_update_and_exhaustion() {
        let road = RoadConfig::default();
        let e = ego(1, 10.0);
        let g = build_guidance(HybridAction::new(LaneOption::Left, 45.0), &e, &road, &GuidanceConfig::default()).unwrap();
        let old = Pose { x: 0.0, y: e.y, heading: 0.0 };
        let new = Pose { x: 4.0, y: e.y, heading: 0.0 };
        let (u, a) = update_guidance(&g, &old, &new, &road).unwrap();
        assert_eq!(u.points.len(), g.points.len() - 1);
        for (p, q) in u.points.iter().zip(&g.points[1..]) {
            assert_eq!(p[0], q[0] - 4.0);
            assert_eq!(p[1], q[1]);
        }
        assert_eq!(a.option, LaneOption::Left);
        assert_eq!(a.distance, 41.0);
        // a point landing exactly on the ego is dropped
        let new = Pose { x: 5.0, y: e.y, heading: 0.0 };
        let (u, _) = update_guidance(&g, &old, &new, &road).unwrap();
        assert_eq!(u.points.len(), g.points.len() - 2);
        let far = Pose { x: 50.0, y: e.y, heading: 0.0 };
        assert!(matches!(update_guidance(&g, &old, &far, &road), Err(Error::GuidanceExhausted)));
    }

    #[test]
    fn path_lookup_matches_points() {
        let road = RoadConfig::default();
        let mut e = ego(1, 10.0);
        e.heading = 0.05;
        let g = build_guidance(HybridAction::new(LaneOption::Right, 40.0), &e, &road, &GuidanceConfig::default()).unwrap();
        for p in &g.points {
            let (y, _) = g.path_at(p[0]);
            assert!((y - p[1]).abs() < 1e-9);
        }
        let (_, slope0) = g.path_at(0.0);
        assert!((slope0 - 0.05_f64.tan()).abs() < 1e-12);
        let (y_beyond, s_beyond) = g.path_at(100.0);
        assert_eq!((y_beyond, s_beyond), (g.end[1], 0.0));
    }
}
