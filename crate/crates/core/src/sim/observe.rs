use serde::{Deserialize, Serialize};

use super::{EnvConfig, SimState};

/// Longitudinal observation window relative to the ego, m.
pub const OBS_BEHIND: f64 = 80.0;
pub const OBS_AHEAD: f64 = 160.0;
/// Speed normalizer, m/s.
pub const SPEED_SCALE: f64 = 30.0;

pub const SV_SLOTS: usize = 6;
pub const SV_FEATURES: usize = 6;
pub const EGO_FEATURES: usize = 6;
pub const OBS_DIM: usize = EGO_FEATURES + SV_SLOTS * SV_FEATURES;

/// Which neighbor a surrounding-vehicle block describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeighborSlot {
    FrontCurrent,
    RearCurrent,
    FrontLeft,
    RearLeft,
    FrontRight,
    RearRight,
}

impl NeighborSlot {
    pub const ALL: [NeighborSlot; SV_SLOTS] = [
        NeighborSlot::FrontCurrent,
        NeighborSlot::RearCurrent,
        NeighborSlot::FrontLeft,
        NeighborSlot::RearLeft,
        NeighborSlot::FrontRight,
        NeighborSlot::RearRight,
    ];
}

/// Normalized 42-value observation: ego block followed by six neighbor blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sv_block(&self, slot: usize) -> &[f64] {
        let start = EGO_FEATURES + slot * SV_FEATURES;
        &self.0[start..start + SV_FEATURES]
    }
}

/// Indices of the nearest surrounding vehicle in each [`NeighborSlot`],
/// restricted to the observation window.
pub fn observed_neighbors(state: &SimState, cfg: &EnvConfig) -> [Option<usize>; SV_SLOTS] {
    let road = &cfg.road;
    let ego = &state.ego;
    let ego_lane = ego.lane_id as i64;
    let mut best: [Option<(usize, f64)>; SV_SLOTS] = [None; SV_SLOTS];
    for (i, sv) in state.svs.iter().enumerate() {
        let dx = sv.state.x - ego.x;
        if !(-OBS_BEHIND..=OBS_AHEAD).contains(&dx) {
            continue;
        }
        let rel = road.lane_of(sv.state.y) as i64 - ego_lane;
        let front = dx >= 0.0;
        let slot = match (rel, front) {
            (0, true) => 0,
            (0, false) => 1,
            (1, true) => 2,
            (1, false) => 3,
            (-1, true) => 4,
            (-1, false) => 5,
            _ => continue,
        };
        if best[slot].is_none_or(|(_, d)| dx.abs() < d.abs()) {
            best[slot] = Some((i, dx));
        }
    }
    best.map(|b| b.map(|(i, _)| i))
}

fn norm(v: f64, scale: f64) -> f64 {
    (v / scale).clamp(-1.0, 1.0)
}

pub(super) fn observe(state: &SimState, cfg: &EnvConfig) -> Observation {
    let road = &cfg.road;
    let ego = &state.ego;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let lateral = road.paved_width();
    let mut out = Vec::with_capacity(OBS_DIM);
    out.push(norm(ego.lane_id as f64, (road.lane_count - 1) as f64));
    out.push(norm(ego.x, road.road_length));
    out.push(norm(ego.y, lateral));
    out.push(norm(ego.heading, half_pi));
    out.push(norm(ego.vx, SPEED_SCALE));
    out.push(norm(ego.vy, SPEED_SCALE));
    for slot in observed_neighbors(state, cfg) {
        match slot {
            None => out.extend_from_slice(&[0.0; SV_FEATURES]),
            Some(i) => {
                let s = &state.svs[i].state;
                out.push(1.0);
                out.push(norm(s.x - ego.x, OBS_AHEAD));
                out.push(norm(s.y - ego.y, lateral));
                out.push(norm(s.heading - ego.heading, half_pi));
                out.push(norm(s.vx - ego.vx, SPEED_SCALE));
                out.push(norm(s.vy - ego.vy, SPEED_SCALE));
            }
        }
    }
    Observation(out)
}
