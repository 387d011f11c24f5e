//! Car-following (IDM) and lane-change (MOBIL) models for surrounding traffic.

use serde::{Deserialize, Serialize};

use super::{SimState, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// v0, m/s
    pub desired_speed: f64,
    /// T, s
    pub time_headway: f64,
    /// s0, m
    pub jam_distance: f64,
    /// a_max^+, m/s²
    pub max_accel: f64,
    /// b, m/s²
    pub comfort_decel: f64,
    pub exponent: f64,
    /// a_max^- (positive magnitude), m/s²
    pub max_brake: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 20.0,
            time_headway: 1.5,
            jam_distance: 2.0,
            max_accel: 3.0,
            comfort_decel: 2.0,
            exponent: 4.0,
            max_brake: 3.0,
        }
    }
}

impl IdmParams {
    pub fn with_desired_speed(mut self, v0: f64) -> Self {
        self.desired_speed = v0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilParams {
    pub politeness: f64,
    /// Δa_th, m/s²
    pub threshold: f64,
    /// b_safe, m/s²
    pub safe_brake: f64,
    /// Duration of the lateral blend, s.
    pub duration: f64,
    /// How often each vehicle reconsiders changing lanes, s.
    pub check_interval: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self {
            politeness: 0.3,
            threshold: 0.1,
            safe_brake: 2.0,
            duration: 2.0,
            check_interval: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneDirection {
    Left,
    Right,
}

impl LaneDirection {
    pub fn apply(self, lane: usize, lane_count: usize) -> Option<usize> {
        match self {
            LaneDirection::Left if lane + 1 < lane_count => Some(lane + 1),
            LaneDirection::Right if lane > 0 => Some(lane - 1),
            _ => None,
        }
    }
}

/// Bumper-to-bumper distance from `follower` to `leader`.
pub fn gap(follower: &VehicleState, leader: &VehicleState) -> f64 {
    leader.x - follower.x - 0.5 * (leader.length + follower.length)
}

/// IDM acceleration, clamped to `[-max_brake, max_accel]`.
pub fn idm_accel(follower: &VehicleState, leader: Option<&VehicleState>, p: &IdmParams) -> f64 {
    let v = follower.speed.max(0.0);
    let free = if p.desired_speed > 0.0 {
        1.0 - (v / p.desired_speed).powf(p.exponent)
    } else {
        -1.0
    };
    let interaction = match leader {
        None => 0.0,
        Some(l) => {
            let s = gap(follower, l);
            if s <= 1e-6 {
                return -p.max_brake;
            }
            let dv = v - l.speed;
            let s_star = p.jam_distance
                + (v * p.time_headway + v * dv / (2.0 * (p.max_accel * p.comfort_decel).sqrt()))
                    .max(0.0);
            (s_star / s).powi(2)
        }
    };
    (p.max_accel * (free - interaction)).clamp(-p.max_brake, p.max_accel)
}

/// Index into the combined vehicle list: `None` is the ego vehicle.
pub(crate) type VehicleRef = Option<usize>;

/// Nearest vehicle ahead of / behind `x` in `lane`, skipping `exclude`.
/// Returns (reference, signed longitudinal distance).
pub(crate) fn neighbor_in_lane(
    state: &SimState,
    lane: usize,
    x: f64,
    ahead: bool,
    exclude: VehicleRef,
    lane_width: f64,
    lane_count: usize,
) -> Option<VehicleRef> {
    let mut best: Option<(VehicleRef, f64)> = None;
    let mut consider = |r: VehicleRef, v: &VehicleState, lanes: [Option<usize>; 2]| {
        if r == exclude || !lanes.contains(&Some(lane)) {
            return;
        }
        let d = v.x - x;
        let valid = if ahead { d > 0.0 } else { d <= 0.0 };
        if valid && best.is_none_or(|(_, bd)| d.abs() < bd.abs()) {
            best = Some((r, d));
        }
    };
    let ego = &state.ego;
    consider(None, ego, [Some(super::lane_of(ego.y, lane_width, lane_count)), None]);
    for (i, sv) in state.svs.iter().enumerate() {
        consider(Some(i), &sv.state, sv.occupied_lanes(lane_width, lane_count));
    }
    best.map(|(r, _)| r)
}

/// MOBIL decision for surrounding vehicle `sv_index` moving one lane in
/// `direction`. `ego_idm` is used when the ego vehicle is one of the affected
/// followers.
pub fn mobil_should_change(
    state: &SimState,
    sv_index: usize,
    direction: LaneDirection,
    env: &super::EnvConfig,
) -> bool {
    let road = &env.road;
    let sv = &state.svs[sv_index];
    let me = &sv.state;
    let cur_lane = me.lane_id;
    let Some(target) = direction.apply(cur_lane, road.lane_count) else {
        return false;
    };
    let w = road.lane_width;
    let n = road.lane_count;
    let get = |r: VehicleRef| -> &VehicleState {
        match r {
            None => &state.ego,
            Some(i) => &state.svs[i].state,
        }
    };
    let params_of = |r: VehicleRef| -> IdmParams {
        match r {
            None => env.idm.with_desired_speed(env.ego_nominal_speed()),
            Some(i) => env.idm.with_desired_speed(state.svs[i].desired_speed),
        }
    };
    let me_ref = Some(sv_index);
    let my_params = params_of(me_ref);

    let cur_leader = neighbor_in_lane(state, cur_lane, me.x, true, me_ref, w, n);
    let cur_follower = neighbor_in_lane(state, cur_lane, me.x, false, me_ref, w, n);
    let new_leader = neighbor_in_lane(state, target, me.x, true, me_ref, w, n);
    let new_follower = neighbor_in_lane(state, target, me.x, false, me_ref, w, n);

    // the target slot must be physically free
    if let Some(l) = new_leader {
        if gap(me, get(l)) < env.idm.jam_distance {
            return false;
        }
    }
    if let Some(f) = new_follower {
        if gap(get(f), me) < env.idm.jam_distance {
            return false;
        }
    }

    let a_c = idm_accel(me, cur_leader.map(get), &my_params);
    let a_c_new = idm_accel(me, new_leader.map(get), &my_params);

    let (a_n, a_n_new) = match new_follower {
        Some(f) => {
            let fp = params_of(f);
            (
                idm_accel(get(f), new_leader.map(get), &fp),
                idm_accel(get(f), Some(me), &fp),
            )
        }
        None => (0.0, 0.0),
    };
    if a_n_new < -env.mobil.safe_brake || a_c_new < -env.mobil.safe_brake {
        return false;
    }
    let (a_o, a_o_new) = match cur_follower {
        Some(f) => {
            let fp = params_of(f);
            (
                idm_accel(get(f), Some(me), &fp),
                idm_accel(get(f), cur_leader.map(get), &fp),
            )
        }
        None => (0.0, 0.0),
    };
    let incentive =
        a_c_new - a_c + env.mobil.politeness * ((a_n_new - a_n) + (a_o_new - a_o));
    incentive > env.mobil.threshold
}
