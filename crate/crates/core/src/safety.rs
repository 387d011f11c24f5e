//! Risk evaluation and action shielding.
//!
//! Risk of a guidance path is an importance-weighted average, over its points,
//! of the strongest potential field any observed surrounding vehicle exerts on
//! the point. The shield swaps risky high-level choices for safer candidates,
//! lets the low-level critic arbitrate between the policy's command and a
//! conservative tracking controller, and may end a segment early so the high
//! level can re-plan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{HybridAction, MotionGuidance};
use crate::sim::{idm_accel, observed_neighbors, Command, EnvConfig, NeighborSlot, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApfParams {
    pub w1: f64,
    /// Longitudinal safe distance X_s, m.
    pub x_safe: f64,
    /// Lateral safe distance Y_s, m.
    pub y_safe: f64,
    /// Importance decay K_r.
    pub decay: f64,
}

impl Default for ApfParams {
    fn default() -> Self {
        Self {
            w1: 0.7,
            x_safe: 15.0,
            y_safe: 2.0,
            decay: 0.3,
        }
    }
}

impl ApfParams {
    pub fn w2(&self) -> f64 {
        1.0 - self.w1
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.w1) {
            return Err(Error::Config(format!("apf.w1 must lie in [0.5, 1], got {}", self.w1)));
        }
        if !(self.x_safe > 0.0 && self.y_safe > 0.0) {
            return Err(Error::Config("apf safe distances must be positive".into()));
        }
        if self.decay.is_nan() || self.decay <= 0.0 {
            return Err(Error::Config("apf.decay must be positive".into()));
        }
        Ok(())
    }
}

/// Conservative fallback controller: IDM for speed, Stanley for steering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub stanley_gain: f64,
    /// Speed softening in the cross-track term, m/s.
    pub soft_speed: f64,
    pub time_headway: f64,
    /// Cruise speed without a leader, m/s.
    pub cruise_speed: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            stanley_gain: 0.5,
            soft_speed: 0.1,
            time_headway: 2.0,
            cruise_speed: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    /// When false, no correction runs and segments end only on violation or
    /// after `n_max` steps.
    pub enabled: bool,
    pub k_th: f64,
    pub n_max: usize,
    /// Final value of the attention weight η.
    pub eta_final: f64,
    /// Fraction of training over which η ramps up from zero.
    pub eta_ramp: f64,
    pub apf: ApfParams,
    pub prior: PriorParams,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            k_th: 0.5,
            n_max: 10,
            eta_final: 1.0,
            eta_ramp: 0.5,
            apf: ApfParams::default(),
            prior: PriorParams::default(),
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_th > 0.0 && self.k_th <= 1.0) {
            return Err(Error::Config(format!("safety.k_th must lie in (0, 1], got {}", self.k_th)));
        }
        if self.n_max == 0 {
            return Err(Error::Config("safety.n_max must be at least 1".into()));
        }
        if self.eta_final.is_nan() || self.eta_final < 0.0 || !(0.0..=1.0).contains(&self.eta_ramp) {
            return Err(Error::Config("safety eta schedule out of range".into()));
        }
        self.apf.validate()
    }
}

/// Field strength at displacement `(dx, dy)` from a vehicle whose relative
/// acceleration is `(dax, day)`.
pub fn potential(dx: f64, dy: f64, dax: f64, day: f64, p: &ApfParams) -> f64 {
    let quad = |x: f64, y: f64| (x / p.x_safe).powi(2) + (y / p.y_safe).powi(2);
    let gx = if dax < 0.0 { dx } else { 0.0 };
    let gy = if day < 0.0 { dy } else { 0.0 };
    p.w1 * (-0.5 * quad(dx, dy)).exp() + p.w2() * (-0.5 * quad(gx, gy)).exp()
}

/// Importance of point `j` (1-based) out of `g`.
pub fn importance(j: usize, g: usize, decay: f64) -> f64 {
    1.0 - (decay * (j as f64 - g as f64)).exp()
}

/// Risk severity of world-frame path points against the observed vehicles.
pub fn risk_of_points(points: &[[f64; 2]], state: &SimState, env: &EnvConfig, p: &ApfParams) -> f64 {
    let g = points.len();
    if g == 0 {
        return 0.0;
    }
    let ego = &state.ego;
    let svs: Vec<_> = observed_neighbors(state, env)
        .into_iter()
        .flatten()
        .map(|i| &state.svs[i].state)
        .collect();
    if svs.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (j, pt) in points.iter().enumerate() {
        let strongest = svs
            .iter()
            .map(|s| potential(pt[0] - s.x, pt[1] - s.y, s.ax - ego.ax, s.ay - ego.ay, p))
            .fold(0.0, f64::max);
        total += importance(j + 1, g, p.decay) * strongest;
    }
    total / g as f64
}

pub fn risk_severity(g: &MotionGuidance, state: &SimState, env: &EnvConfig, p: &ApfParams) -> f64 {
    risk_of_points(&g.world_points(), state, env, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskCandidate {
    pub action: HybridAction,
    pub q: f64,
    pub risk: f64,
}

/// High-level correction. Returns the index of the action to execute and
/// whether the chosen action was flagged as risky.
pub fn correct_high(candidates: &[RiskCandidate], chosen: usize, eta: f64, k_th: f64) -> Result<(usize, bool)> {
    if candidates.is_empty() {
        return Err(Error::Empty("high-level candidates"));
    }
    if chosen >= candidates.len() {
        return Err(Error::InvalidAction(format!("chosen index {chosen} out of {}", candidates.len())));
    }
    if eta * candidates[chosen].risk < k_th {
        return Ok((chosen, false));
    }
    let mut best_safe: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if eta * c.risk < k_th && best_safe.is_none_or(|b| c.q > candidates[b].q) {
            best_safe = Some(i);
        }
    }
    if let Some(i) = best_safe {
        return Ok((i, true));
    }
    let mut least = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.risk < candidates[least].risk {
            least = i;
        }
    }
    Ok((least, true))
}

/// Conservative command tracking `g`: IDM behind the current-lane leader and
/// a Stanley steering law towards the path.
pub fn prior_control(state: &SimState, g: &MotionGuidance, env: &EnvConfig, p: &PriorParams) -> Command {
    let ego = &state.ego;
    let leader = observed_neighbors(state, env)[NeighborSlot::FrontCurrent as usize].map(|i| &state.svs[i].state);
    let desired = match leader {
        Some(l) => p.cruise_speed.min(l.speed),
        None => p.cruise_speed,
    };
    let mut idm = env.idm.with_desired_speed(desired);
    idm.time_headway = p.time_headway;
    let accel = idm_accel(ego, leader, &idm);

    let ex = ego.x - g.origin[0];
    let ey = ego.y - g.origin[1];
    let (path_y, slope) = g.path_at(ex);
    let cross = path_y - ey;
    let heading_err = slope.atan() - ego.heading;
    let steer = heading_err + (p.stanley_gain * cross / (ego.speed.max(0.0) + p.soft_speed)).atan();
    Command::new(steer, accel).clamped()
}

/// Low-level correction: with high risk, keep whichever of the policy and
/// prior commands the critic values more. Returns the command and whether the
/// risk threshold was crossed.
pub fn correct_low<F>(policy: Command, prior: Command, k_l: f64, eta: f64, k_th: f64, q: F) -> Result<(Command, bool)>
where
    F: Fn(Command) -> Result<f64>,
{
    if eta * k_l < k_th {
        return Ok((policy, false));
    }
    if q(prior)? > q(policy)? {
        Ok((prior, true))
    } else {
        Ok((policy, true))
    }
}

/// Segment termination β.
pub fn terminate(violation: bool, i: usize, n_max: usize, k_l: f64, k_h: f64, eta: f64, k_th: f64) -> bool {
    let low_alarm = eta * k_l >= k_th && eta * k_h < k_th;
    violation || i >= n_max || low_alarm
}
