//! The two-timescale control loop shared by training and evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{
    build_guidance, hybrid_bounds, update_guidance, GuidanceConfig, HybridAction, MotionGuidance,
};
use crate::numerics::Checkpoint;
use crate::policies::{
    extend_dim, extend_state, Exploration, HighPolicy, HighTransition, LowPolicy, LowTransition, NetConfig,
    RebuildContext,
};
use crate::rewards::{high_reward, low_reward, RewardConfig};
use crate::safety::{correct_high, correct_low, prior_control, risk_severity, terminate, RiskCandidate, SafetyConfig};
use crate::sim::{Command, SimState, Simulator, OBS_DIM};

pub const HIGH_ACTOR: &str = "high_actor";
pub const HIGH_CRITIC: &str = "high_critic";
pub const LOW_ACTOR: &str = "low_actor";
pub const LOW_CRITIC: &str = "low_critic";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvRecord {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub lane: usize,
}

/// One low-level step, as written to trajectory logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub seed: u64,
    pub segment: usize,
    /// Position of the step inside its segment, from 1.
    pub i: usize,
    pub step: u64,
    pub time: f64,
    pub prev_lane: usize,
    pub lane: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub vx: f64,
    pub vy: f64,
    /// Command applied to the vehicle.
    pub steer: f64,
    pub accel: f64,
    /// Command proposed by the low-level policy.
    pub policy_steer: f64,
    pub policy_accel: f64,
    /// Lane offset (−1, 0, +1) and endpoint distance of the segment's action.
    pub option: i64,
    pub distance: f64,
    /// World-frame guidance points after the step.
    pub guidance: Vec<[f64; 2]>,
    pub k_h: f64,
    pub k_l: f64,
    pub eta: f64,
    pub high_fired: bool,
    pub low_fired: bool,
    pub beta: bool,
    pub violation: bool,
    pub reward: f64,
    pub ttc_current: f64,
    pub ttc_target: f64,
    pub svs: Vec<SvRecord>,
}

/// One completed segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub episode: usize,
    pub segment: usize,
    pub steps: usize,
    pub reward: f64,
    pub option: i64,
    pub distance: f64,
    pub explored: bool,
    pub high_fired: bool,
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub total_reward: f64,
    pub steps: u64,
    pub collisions: u32,
    pub mean_k: f64,
    pub eta: f64,
    pub segments: usize,
}

/// Callbacks invoked by [`Agent::run_episode`]. Training stores transitions
/// and updates the networks; evaluation records steps.
pub trait EpisodeHooks {
    fn exploration(&mut self) -> Option<&mut Exploration> {
        None
    }

    fn record_svs(&self) -> bool {
        false
    }

    fn low_step(&mut self, _agent: &mut Agent, _t: LowTransition, _rec: StepRecord) -> Result<()> {
        Ok(())
    }

    fn high_step(&mut self, _agent: &mut Agent, _t: HighTransition, _rec: SegmentRecord) -> Result<()> {
        Ok(())
    }
}

/// No-op hooks for greedy rollouts.
pub struct Greedy;

impl EpisodeHooks for Greedy {}

#[derive(Debug, Clone)]
pub struct Agent {
    pub high: HighPolicy,
    pub low: LowPolicy,
    pub sim: Simulator,
    pub guidance: GuidanceConfig,
    pub safety: SafetyConfig,
    pub reward: RewardConfig,
}

struct Plan {
    action: HybridAction,
    guidance: MotionGuidance,
    k_h: f64,
    fired: bool,
    explored: bool,
}

impl Agent {
    pub fn new(
        sim: Simulator,
        guidance: GuidanceConfig,
        safety: SafetyConfig,
        reward: RewardConfig,
        net: &NetConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let road = sim.cfg.road;
        let high = HighPolicy::new(OBS_DIM, guidance.max_distance, net, &mut rng)?;
        let low = LowPolicy::new(extend_dim(&guidance), road, guidance, net, &mut rng)?;
        Ok(Self {
            high,
            low,
            sim,
            guidance,
            safety,
            reward,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push(HIGH_ACTOR, self.high.actor.clone());
        ck.push(HIGH_CRITIC, self.high.critic.clone());
        ck.push(LOW_ACTOR, self.low.actor.clone());
        ck.push(LOW_CRITIC, self.low.critic.clone());
        ck
    }

    /// Replace the online and target networks with those of a checkpoint.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint, net: &NetConfig) -> Result<()> {
        let check = |name: &str, expect: &crate::numerics::Mlp| -> Result<crate::numerics::Mlp> {
            let m = ck.get(name)?;
            if m.layer_sizes() != expect.layer_sizes() || m.output != expect.output {
                return Err(Error::Checkpoint(format!(
                    "network '{name}' has layers {:?}, expected {:?}",
                    m.layer_sizes(),
                    expect.layer_sizes()
                )));
            }
            Ok(m.clone())
        };
        let ha = check(HIGH_ACTOR, &self.high.actor)?;
        let hc = check(HIGH_CRITIC, &self.high.critic)?;
        let la = check(LOW_ACTOR, &self.low.actor)?;
        let lc = check(LOW_CRITIC, &self.low.critic)?;
        self.high = HighPolicy::from_networks(ha, hc, net, self.guidance.max_distance);
        self.low = LowPolicy::from_networks(la, lc, net, self.sim.cfg.road, self.guidance);
        Ok(())
    }

    fn effective_eta(&self, eta: f64) -> f64 {
        if self.safety.enabled {
            eta
        } else {
            0.0
        }
    }

    fn plan(&self, state: &SimState, obs: &[f64], explore: Option<&mut Exploration>, eta: f64) -> Result<Plan> {
        let road = &self.sim.cfg.road;
        let bounds = hybrid_bounds(&state.ego, road, &self.guidance);
        let decision = self.high.select(obs, &bounds, explore)?;
        let mut guides = Vec::with_capacity(decision.candidates.len());
        let mut cands = Vec::with_capacity(decision.candidates.len());
        for c in &decision.candidates {
            let g = build_guidance(c.action, &state.ego, road, &self.guidance)?;
            let risk = risk_severity(&g, state, &self.sim.cfg, &self.safety.apf);
            cands.push(RiskCandidate {
                action: c.action,
                q: c.q,
                risk,
            });
            guides.push(g);
        }
        let (idx, fired) = if self.safety.enabled {
            correct_high(&cands, decision.chosen, eta, self.safety.k_th)?
        } else {
            (decision.chosen, false)
        };
        Ok(Plan {
            action: cands[idx].action,
            guidance: guides.swap_remove(idx),
            k_h: cands[idx].risk,
            fired,
            explored: decision.explored,
        })
    }

    /// Run one episode from `sim.reset(seed)`.
    pub fn run_episode<H: EpisodeHooks>(&mut self, episode: usize, seed: u64, eta: f64, hooks: &mut H) -> Result<EpisodeSummary> {
        let eta = self.effective_eta(eta);
        let mut state = self.sim.reset(seed);
        let mut prev_cmd = Command::default();
        let mut summary = EpisodeSummary {
            episode,
            eta,
            ..Default::default()
        };
        let mut k_sum = 0.0;
        let mut segment = 0;
        let k_th = self.safety.k_th;
        while !self.sim.episode_over(&state) {
            let obs_h = self.sim.observe(&state).0;
            let bounds_h = hybrid_bounds(&state.ego, &self.sim.cfg.road, &self.guidance);
            let plan = self.plan(&state, &obs_h, hooks.exploration(), eta)?;
            let mut g = plan.guidance;
            let mut k_l = risk_severity(&g, &state, &self.sim.cfg, &self.safety.apf);
            let mut rewards = Vec::new();
            let mut i = 0;
            loop {
                i += 1;
                let obs = self.sim.observe(&state).0;
                let z = extend_state(&obs, &g, &self.sim.cfg.road, &self.guidance);
                let proposed = self.low.select(&z, hooks.exploration())?;
                let (applied, low_fired) = if self.safety.enabled && eta * k_l >= k_th {
                    let prior = prior_control(&state, &g, &self.sim.cfg, &self.safety.prior);
                    correct_low(proposed, prior, k_l, eta, k_th, |a| self.low.q_value(&z, a))?
                } else {
                    (proposed, false)
                };
                let old_pose = state.ego_pose();
                let prev_lane = state.ego.lane_id;
                self.sim.step(&mut state, applied);
                let new_pose = state.ego_pose();

                let exhausted = match update_guidance(&g, &old_pose, &new_pose, &self.sim.cfg.road) {
                    Ok((next, _)) => {
                        g = next;
                        false
                    }
                    Err(Error::GuidanceExhausted | Error::EndpointBehind) => true,
                    Err(e) => return Err(e),
                };
                k_l = if exhausted {
                    0.0
                } else {
                    risk_severity(&g, &state, &self.sim.cfg, &self.safety.apf)
                };
                let violation = state.violation;
                let reward = low_reward(state.ego.speed, applied, prev_cmd, plan.k_h, k_l, violation, &self.reward);
                prev_cmd = applied;
                let over = self.sim.episode_over(&state);
                let beta = terminate(violation, i, self.safety.n_max, k_l, plan.k_h, eta, k_th) || exhausted || over;

                let next_obs = self.sim.observe(&state).0;
                let next_z = extend_state(&next_obs, &g, &self.sim.cfg.road, &self.guidance);
                let rebuild = (beta && !violation).then(|| RebuildContext {
                    obs: next_obs.clone(),
                    ego: state.ego,
                    bounds: hybrid_bounds(&state.ego, &self.sim.cfg.road, &self.guidance),
                });
                let target_lane = if exhausted { state.ego.lane_id } else { g.target_lane(&self.sim.cfg.road) };
                let rec = StepRecord {
                    episode,
                    seed,
                    segment,
                    i,
                    step: state.steps,
                    time: state.time,
                    prev_lane,
                    lane: state.ego.lane_id,
                    x: state.ego.x,
                    y: state.ego.y,
                    heading: state.ego.heading,
                    speed: state.ego.speed,
                    vx: state.ego.vx,
                    vy: state.ego.vy,
                    steer: applied.steer,
                    accel: applied.accel,
                    policy_steer: proposed.steer,
                    policy_accel: proposed.accel,
                    option: plan.action.option.lane_delta(),
                    distance: plan.action.distance,
                    guidance: if exhausted { Vec::new() } else { g.world_points() },
                    k_h: plan.k_h,
                    k_l,
                    eta,
                    high_fired: plan.fired,
                    low_fired,
                    beta,
                    violation,
                    reward,
                    ttc_current: self.sim.compute_ttc(&state, state.ego.lane_id),
                    ttc_target: self.sim.compute_ttc(&state, target_lane),
                    svs: if hooks.record_svs() {
                        state
                            .svs
                            .iter()
                            .map(|s| SvRecord {
                                x: s.state.x,
                                y: s.state.y,
                                heading: s.state.heading,
                                speed: s.state.speed,
                                lane: s.state.lane_id,
                            })
                            .collect()
                    } else {
                        Vec::new()
                    },
                };
                let t = LowTransition {
                    z,
                    action: applied,
                    reward,
                    next_z,
                    beta,
                    violation,
                    rebuild,
                };
                rewards.push(reward);
                summary.total_reward += reward;
                k_sum += k_l;
                hooks.low_step(self, t, rec)?;
                if beta {
                    break;
                }
            }
            let violation = state.violation;
            let r_h = high_reward(&rewards, violation, self.reward.violation_reward)?;
            let t = HighTransition {
                state: obs_h,
                bounds: bounds_h,
                action: plan.action,
                reward: r_h,
                next_state: self.sim.observe(&state).0,
                next_bounds: hybrid_bounds(&state.ego, &self.sim.cfg.road, &self.guidance),
                terminal: violation,
            };
            let rec = SegmentRecord {
                episode,
                segment,
                steps: i,
                reward: r_h,
                option: plan.action.option.lane_delta(),
                distance: plan.action.distance,
                explored: plan.explored,
                high_fired: plan.fired,
                violation,
            };
            hooks.high_step(self, t, rec)?;
            segment += 1;
        }
        summary.steps = state.steps;
        summary.collisions = u32::from(state.violation);
        summary.mean_k = if state.steps > 0 { k_sum / state.steps as f64 } else { 0.0 };
        summary.segments = segment;
        Ok(summary)
    }
}
