//! Straight multi-lane highway with a kinematic-bicycle ego vehicle and
//! IDM/MOBIL surrounding traffic.
//!
//! Road frame: `x` runs along the road, `y` is lateral with lane 0 at
//! `y ∈ [0, w_r)` and higher lane indices to the left. Headings are measured
//! counter-clockwise from the `x` axis, so positive steering turns left.
//!
//! Surrounding vehicles live on a ring of length `road_length` centered on the
//! ego vehicle: a vehicle that drops more than half a ring behind is moved a
//! full ring ahead. This keeps traffic density around the ego constant while
//! the ego itself drives from `x = 0` to the road end.

pub mod geometry;
mod observe;
pub mod traffic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use observe::{observed_neighbors, NeighborSlot, Observation, OBS_DIM, SV_SLOTS};
pub use traffic::{idm_accel, mobil_should_change, IdmParams, LaneDirection, MobilParams};

/// Steering limit of the low-level action space, rad.
pub const MAX_STEER: f64 = std::f64::consts::FRAC_PI_6;
/// Acceleration limit of the low-level action space, m/s².
pub const MAX_ACCEL: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    pub lane_count: usize,
    /// w_r, m
    pub lane_width: f64,
    pub road_length: f64,
    /// R0, m
    pub min_turn_radius: f64,
    /// a_max^- (positive magnitude), m/s²
    pub max_brake: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 4.0,
            road_length: 1000.0,
            min_turn_radius: 12.0,
            max_brake: 3.0,
        }
    }
}

impl RoadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lane_count < 2 {
            return Err(Error::Config(format!(
                "lane_count must be at least 2, got {}",
                self.lane_count
            )));
        }
        if !(self.lane_width > 0.0 && self.road_length > 0.0 && self.max_brake > 0.0) {
            return Err(Error::Config(
                "lane_width, road_length and max_brake must be positive".into(),
            ));
        }
        if 4.0 * self.min_turn_radius * self.lane_width - self.lane_width.powi(2) <= 0.0 {
            return Err(Error::Config(
                "min_turn_radius must exceed half the lane width".into(),
            ));
        }
        Ok(())
    }

    pub fn paved_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    pub fn lane_of(&self, y: f64) -> usize {
        lane_of(y, self.lane_width, self.lane_count)
    }
}

pub fn lane_of(y: f64, lane_width: f64, lane_count: usize) -> usize {
    let raw = (y / lane_width).floor();
    if raw < 0.0 {
        0
    } else {
        (raw as usize).min(lane_count - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    /// Probability that an eligible spawn slot holds a vehicle.
    pub density: f64,
    pub slot_length: f64,
    /// Slots whose centers lie within this longitudinal distance of the ego
    /// stay empty at reset.
    pub ego_exclusion: f64,
    pub desired_speed_min: f64,
    pub desired_speed_max: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            density: 0.15,
            slot_length: 25.0,
            ego_exclusion: 25.0,
            desired_speed_min: 15.0,
            desired_speed_max: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub road: RoadConfig,
    pub traffic: TrafficConfig,
    pub idm: IdmParams,
    pub mobil: MobilParams,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// T^l, s
    pub dt: f64,
    /// Episode time limit, s.
    pub horizon: f64,
    pub ttc_cap: f64,
    pub ego_speed_min: f64,
    pub ego_speed_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            road: RoadConfig::default(),
            traffic: TrafficConfig::default(),
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
            vehicle_length: 5.0,
            vehicle_width: 2.0,
            dt: 0.1,
            horizon: 100.0,
            ttc_cap: 10.0,
            ego_speed_min: 10.0,
            ego_speed_max: 20.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        let t = &self.traffic;
        if !(0.0..=1.0).contains(&t.density) {
            return Err(Error::Config(format!(
                "traffic density must lie in [0, 1], got {}",
                t.density
            )));
        }
        if t.slot_length.is_nan() || t.slot_length <= self.vehicle_length {
            return Err(Error::Config("slot_length must exceed vehicle_length".into()));
        }
        if !(self.vehicle_length > 0.0 && self.vehicle_width > 0.0 && self.dt > 0.0) {
            return Err(Error::Config("vehicle dimensions and dt must be positive".into()));
        }
        if !(t.desired_speed_min >= 0.0 && t.desired_speed_min <= t.desired_speed_max) {
            return Err(Error::Config("invalid desired speed range".into()));
        }
        if !(self.ego_speed_min >= 0.0 && self.ego_speed_min <= self.ego_speed_max) {
            return Err(Error::Config("invalid ego speed range".into()));
        }
        if !(self.ttc_cap > 0.0 && self.horizon > 0.0) {
            return Err(Error::Config("ttc_cap and horizon must be positive".into()));
        }
        Ok(())
    }

    /// Desired speed assumed for the ego when surrounding drivers reason about it.
    pub fn ego_nominal_speed(&self) -> f64 {
        0.5 * (self.traffic.desired_speed_min + self.traffic.desired_speed_max)
    }

    pub fn max_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub lane_id: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub vx: f64,
    pub vy: f64,
    /// Road-frame acceleration over the last step, m/s².
    pub ax: f64,
    pub ay: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn new(lane_id: usize, x: f64, y: f64, speed: f64, length: f64, width: f64) -> Self {
        Self {
            lane_id,
            x,
            y,
            heading: 0.0,
            speed,
            vx: speed,
            vy: 0.0,
            ax: 0.0,
            ay: 0.0,
            length,
            width,
        }
    }

    pub fn footprint(&self) -> [geometry::Point; 4] {
        geometry::corners(self.x, self.y, self.heading, self.length, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChange {
    pub from_y: f64,
    pub to_y: f64,
    pub target_lane: usize,
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurroundingVehicle {
    pub state: VehicleState,
    pub desired_speed: f64,
    pub lane_change: Option<LaneChange>,
}

impl SurroundingVehicle {
    /// Lanes the vehicle claims for car-following: its current lane, plus the
    /// target lane while a change is in progress.
    pub(crate) fn occupied_lanes(&self, lane_width: f64, lane_count: usize) -> [Option<usize>; 2] {
        let cur = lane_of(self.state.y, lane_width, lane_count);
        [Some(cur), self.lane_change.map(|c| c.target_lane)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub ego: VehicleState,
    pub svs: Vec<SurroundingVehicle>,
    pub time: f64,
    pub steps: u64,
    pub rng: ChaCha8Rng,
    /// f_v, latched for the rest of the episode once set.
    pub violation: bool,
    /// Spawn slots that were eligible at reset (outside the ego exclusion zone).
    pub eligible_slots: usize,
    /// Number of low-level commands that had to be clamped into bounds.
    pub clamp_events: u64,
}

/// A planar pose in the road frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl SimState {
    pub fn ego_pose(&self) -> Pose {
        Pose {
            x: self.ego.x,
            y: self.ego.y,
            heading: self.ego.heading,
        }
    }
}

/// Low-level command: steering angle (rad) and acceleration (m/s²).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub steer: f64,
    pub accel: f64,
}

impl Command {
    pub fn new(steer: f64, accel: f64) -> Self {
        Self { steer, accel }
    }

    pub fn clamped(self) -> Self {
        Self {
            steer: self.steer.clamp(-MAX_STEER, MAX_STEER),
            accel: self.accel.clamp(-MAX_ACCEL, MAX_ACCEL),
        }
    }

    pub fn within_bounds(&self) -> bool {
        self.steer.abs() <= MAX_STEER && self.accel.abs() <= MAX_ACCEL
    }
}

/// Continuous-time kinematic bicycle (reference point at the center of
/// gravity, equal front/rear axle distances). State is `[x, y, heading, speed]`.
pub fn bicycle_derivative(s: [f64; 4], steer: f64, accel: f64, wheelbase: f64) -> [f64; 4] {
    let slip = (0.5 * steer.tan()).atan();
    let (sin_h, cos_h) = (s[2] + slip).sin_cos();
    [
        s[3] * cos_h,
        s[3] * sin_h,
        s[3] * slip.sin() / (0.5 * wheelbase),
        accel,
    ]
}

/// One RK4 step of the bicycle model with piecewise-constant inputs.
/// Deceleration is limited so the speed stops at zero instead of reversing.
pub fn integrate_bicycle(s: [f64; 4], steer: f64, accel: f64, wheelbase: f64, dt: f64) -> [f64; 4] {
    let accel = if s[3] + accel * dt < 0.0 { -s[3] / dt } else { accel };
    let add = |a: [f64; 4], k: [f64; 4], h: f64| {
        [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2], a[3] + h * k[3]]
    };
    let k1 = bicycle_derivative(s, steer, accel, wheelbase);
    let k2 = bicycle_derivative(add(s, k1, 0.5 * dt), steer, accel, wheelbase);
    let k3 = bicycle_derivative(add(s, k2, 0.5 * dt), steer, accel, wheelbase);
    let k4 = bicycle_derivative(add(s, k3, dt), steer, accel, wheelbase);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out[3] = out[3].max(0.0);
    out
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r <= -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

/// The highway environment. Holds configuration only; all episode state
/// lives in [`SimState`] values.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub cfg: EnvConfig,
}

impl Simulator {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn road(&self) -> &RoadConfig {
        &self.cfg.road
    }

    pub fn reset(&self, seed: u64) -> SimState {
        let cfg = &self.cfg;
        let road = &cfg.road;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let ego_lane = rng.random_range(0..road.lane_count);
        let ego_speed = rng.random_range(cfg.ego_speed_min..=cfg.ego_speed_max);
        let ego = VehicleState::new(
            ego_lane,
            0.0,
            road.lane_center(ego_lane),
            ego_speed,
            cfg.vehicle_length,
            cfg.vehicle_width,
        );

        let t = &cfg.traffic;
        let slots_per_lane = (road.road_length / t.slot_length).floor() as usize;
        let jitter = (0.5 * (t.slot_length - cfg.vehicle_length) - 0.5 * cfg.vehicle_length).max(0.0);
        let mut svs = Vec::new();
        let mut eligible = 0;
        for lane in 0..road.lane_count {
            for k in 0..slots_per_lane {
                let center = -0.5 * road.road_length + (k as f64 + 0.5) * t.slot_length;
                if (center - ego.x).abs() < t.ego_exclusion {
                    continue;
                }
                eligible += 1;
                // draw every variate so the stream layout is density-independent
                let occupied = rng.random::<f64>() < t.density;
                let dx = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
                let desired = rng.random_range(t.desired_speed_min..=t.desired_speed_max);
                let speed = desired * rng.random_range(0.8..=1.0);
                if occupied {
                    svs.push(SurroundingVehicle {
                        state: VehicleState::new(
                            lane,
                            center + dx,
                            road.lane_center(lane),
                            speed,
                            cfg.vehicle_length,
                            cfg.vehicle_width,
                        ),
                        desired_speed: desired,
                        lane_change: None,
                    });
                }
            }
        }

        let mut state = SimState {
            ego,
            svs,
            time: 0.0,
            steps: 0,
            rng,
            violation: false,
            eligible_slots: eligible,
            clamp_events: 0,
        };
        state.violation = self.check_violation(&state);
        state
    }

    fn idm_params_for(&self, sv: &SurroundingVehicle) -> IdmParams {
        self.cfg.idm.with_desired_speed(sv.desired_speed)
    }

    /// IDM leader of surrounding vehicle `i` (the ego counts as a leader).
    fn sv_leader<'a>(&self, state: &'a SimState, i: usize) -> Option<&'a VehicleState> {
        let sv = &state.svs[i];
        let lanes = sv.occupied_lanes(self.cfg.road.lane_width, self.cfg.road.lane_count);
        let mut best: Option<&VehicleState> = None;
        for lane in lanes.into_iter().flatten() {
            if let Some(r) = traffic::neighbor_in_lane(
                state,
                lane,
                sv.state.x,
                true,
                Some(i),
                self.cfg.road.lane_width,
                self.cfg.road.lane_count,
            ) {
                let v = match r {
                    None => &state.ego,
                    Some(j) => &state.svs[j].state,
                };
                if best.is_none_or(|b| v.x < b.x) {
                    best = Some(v);
                }
            }
        }
        best
    }

    /// Advance the world by one `dt`. Out-of-range commands are clamped.
    pub fn step(&self, state: &mut SimState, cmd: Command) {
        let cfg = &self.cfg;
        let dt = cfg.dt;
        let road = &cfg.road;

        let applied = cmd.clamped();
        if applied != cmd {
            state.clamp_events += 1;
            log::debug!(
                "clamped ego command ({:.4}, {:.4}) -> ({:.4}, {:.4})",
                cmd.steer,
                cmd.accel,
                applied.steer,
                applied.accel
            );
        }

        // accelerations and lane-change decisions from the current snapshot
        let accels: Vec<f64> = (0..state.svs.len())
            .map(|i| idm_accel(&state.svs[i].state, self.sv_leader(state, i), &self.idm_params_for(&state.svs[i])))
            .collect();
        let interval = ((cfg.mobil.check_interval / dt).round() as u64).max(1);
        let mut starts: Vec<(usize, usize)> = Vec::new();
        for i in 0..state.svs.len() {
            if state.svs[i].lane_change.is_some() || !(state.steps + i as u64).is_multiple_of(interval) {
                continue;
            }
            for dir in [LaneDirection::Left, LaneDirection::Right] {
                if mobil_should_change(state, i, dir, cfg) {
                    if let Some(target) = dir.apply(state.svs[i].state.lane_id, road.lane_count) {
                        starts.push((i, target));
                    }
                    break;
                }
            }
        }
        for (i, target) in starts {
            let sv = &mut state.svs[i];
            sv.lane_change = Some(LaneChange {
                from_y: sv.state.y,
                to_y: road.lane_center(target),
                target_lane: target,
                elapsed: 0.0,
            });
        }

        // ego
        let e = &mut state.ego;
        let (old_vx, old_vy) = (e.vx, e.vy);
        let next = integrate_bicycle([e.x, e.y, e.heading, e.speed], applied.steer, applied.accel, e.length, dt);
        e.x = next[0];
        e.y = next[1];
        e.heading = wrap_angle(next[2]);
        e.speed = next[3];
        let slip = (0.5 * applied.steer.tan()).atan();
        e.vx = e.speed * (e.heading + slip).cos();
        e.vy = e.speed * (e.heading + slip).sin();
        e.ax = (e.vx - old_vx) / dt;
        e.ay = (e.vy - old_vy) / dt;
        e.lane_id = road.lane_of(e.y);

        // surrounding vehicles
        let ego_x = e.x;
        for (sv, a) in state.svs.iter_mut().zip(accels) {
            let s = &mut sv.state;
            let (old_vx, old_vy) = (s.vx, s.vy);
            let v0 = s.speed;
            let v1 = (v0 + a * dt).max(0.0);
            s.x += 0.5 * (v0 + v1) * dt;
            s.speed = v1;
            let mut vy = 0.0;
            if let Some(mut lc) = sv.lane_change {
                lc.elapsed += dt;
                let d = cfg.mobil.duration;
                if lc.elapsed >= d {
                    s.y = lc.to_y;
                    sv.lane_change = None;
                } else {
                    let phase = std::f64::consts::PI * lc.elapsed / d;
                    s.y = lc.from_y + (lc.to_y - lc.from_y) * 0.5 * (1.0 - phase.cos());
                    vy = (lc.to_y - lc.from_y) * std::f64::consts::PI / (2.0 * d) * phase.sin();
                    sv.lane_change = Some(lc);
                }
            }
            s.vx = v1;
            s.vy = vy;
            s.heading = vy.atan2(v1.max(1e-6));
            s.ax = (s.vx - old_vx) / dt;
            s.ay = (s.vy - old_vy) / dt;
            s.lane_id = road.lane_of(s.y);
            let half = 0.5 * road.road_length;
            if s.x < ego_x - half {
                s.x += road.road_length;
            } else if s.x >= ego_x + half {
                s.x -= road.road_length;
            }
        }

        state.time += dt;
        state.steps += 1;
        if !state.violation {
            state.violation = self.check_violation(state);
        }
    }

    /// True iff the ego footprint overlaps a surrounding vehicle or its center
    /// has left the paved surface.
    pub fn check_violation(&self, state: &SimState) -> bool {
        let e = &state.ego;
        if e.y < 0.0 || e.y > self.cfg.road.paved_width() {
            return true;
        }
        let ego_fp = e.footprint();
        let reach = e.length + e.width;
        state.svs.iter().any(|sv| {
            let s = &sv.state;
            (s.x - e.x).abs() <= reach + s.length
                && (s.y - e.y).abs() <= reach + s.length
                && geometry::rectangles_overlap(&ego_fp, &s.footprint())
        })
    }

    /// Time-to-collision with the nearest vehicle ahead of the ego in `lane`,
    /// capped at `ttc_cap` when there is no leader or the gap is opening.
    pub fn compute_ttc(&self, state: &SimState, lane: usize) -> f64 {
        let e = &state.ego;
        let cap = self.cfg.ttc_cap;
        let leader = state
            .svs
            .iter()
            .map(|sv| &sv.state)
            .filter(|s| s.lane_id == lane && s.x > e.x)
            .min_by(|a, b| a.x.total_cmp(&b.x));
        let Some(l) = leader else { return cap };
        let closing = e.vx - l.vx;
        if closing <= 0.0 {
            return cap;
        }
        let gap = (l.x - e.x - 0.5 * (l.length + e.length)).max(0.0);
        (gap / closing).min(cap)
    }

    pub fn observe(&self, state: &SimState) -> Observation {
        observe::observe(state, &self.cfg)
    }

    pub fn episode_over(&self, state: &SimState) -> bool {
        state.violation
            || state.ego.x >= self.cfg.road.road_length
            || state.steps as usize >= self.cfg.max_steps()
    }
}
