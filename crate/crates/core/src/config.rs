//! Experiment configuration.
//!
//! The file format is flat `key = value` text. Keys carry a dotted section
//! prefix (`sim.lane_width = 4.0`), `#` starts a comment, and unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::GuidanceConfig;
use crate::policies::NetConfig;
use crate::rewards::RewardConfig;
use crate::safety::SafetyConfig;
use crate::sim::EnvConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    pub seed_count: usize,
    pub low_capacity: usize,
    pub high_capacity: usize,
    pub batch_size: usize,
    pub low_warmup: usize,
    pub high_warmup: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    /// Fraction of training over which exploration decays.
    pub explore_fraction: f64,
    /// Write a checkpoint every this many episodes (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            seed: 0,
            seed_count: 1,
            low_capacity: 100_000,
            high_capacity: 20_000,
            batch_size: 64,
            low_warmup: 1000,
            high_warmup: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            sigma_start: 0.3,
            sigma_end: 0.05,
            explore_fraction: 0.6,
            checkpoint_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    pub env: EnvConfig,
    pub guidance: GuidanceConfig,
    pub net: NetConfig,
    pub safety: SafetyConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
}

enum Slot<'a> {
    Real(&'a mut f64),
    Count(&'a mut usize),
    Seed(&'a mut u64),
    Flag(&'a mut bool),
    Sizes(&'a mut Vec<usize>),
}

impl Slot<'_> {
    fn render(&self) -> String {
        match self {
            Slot::Real(v) => format!("{v:?}"),
            Slot::Count(v) => v.to_string(),
            Slot::Seed(v) => v.to_string(),
            Slot::Flag(v) => v.to_string(),
            Slot::Sizes(v) => v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        }
    }

    fn set(&mut self, raw: &str) -> std::result::Result<(), String> {
        match self {
            Slot::Real(v) => **v = raw.parse().map_err(|_| format!("expected a number, got '{raw}'"))?,
            Slot::Count(v) => **v = raw.parse().map_err(|_| format!("expected a non-negative integer, got '{raw}'"))?,
            Slot::Seed(v) => **v = raw.parse().map_err(|_| format!("expected a non-negative integer, got '{raw}'"))?,
            Slot::Flag(v) => **v = raw.parse().map_err(|_| format!("expected true or false, got '{raw}'"))?,
            Slot::Sizes(v) => {
                **v = raw
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| format!("expected comma-separated layer sizes, got '{raw}'"))?
            }
        }
        Ok(())
    }
}

impl Config {
    /// Every configurable key with its storage and a one-line description.
    fn slots(&mut self) -> Vec<(&'static str, Slot<'_>, &'static str)> {
        let Config {
            env,
            guidance,
            net,
            safety,
            reward,
            train,
        } = self;
        vec![
            ("sim.lane_count", Slot::Count(&mut env.road.lane_count), "number of lanes"),
            ("sim.lane_width", Slot::Real(&mut env.road.lane_width), "lane width w_r, m"),
            ("sim.road_length", Slot::Real(&mut env.road.road_length), "road length and traffic ring length, m"),
            ("sim.min_turn_radius", Slot::Real(&mut env.road.min_turn_radius), "minimum turning radius R0, m"),
            ("sim.max_brake", Slot::Real(&mut env.road.max_brake), "ego braking limit for the guidance lower bound, m/s^2"),
            ("sim.vehicle_length", Slot::Real(&mut env.vehicle_length), "vehicle length (also the ego wheelbase), m"),
            ("sim.vehicle_width", Slot::Real(&mut env.vehicle_width), "vehicle width, m"),
            ("sim.dt", Slot::Real(&mut env.dt), "low-level step T^l, s"),
            ("sim.horizon", Slot::Real(&mut env.horizon), "episode time limit, s"),
            ("sim.ttc_cap", Slot::Real(&mut env.ttc_cap), "time-to-collision cap, s"),
            ("sim.ego_speed_min", Slot::Real(&mut env.ego_speed_min), "lower bound of the initial ego speed, m/s"),
            ("sim.ego_speed_max", Slot::Real(&mut env.ego_speed_max), "upper bound of the initial ego speed, m/s"),
            ("traffic.density", Slot::Real(&mut env.traffic.density), "probability that a spawn slot is occupied"),
            ("traffic.slot_length", Slot::Real(&mut env.traffic.slot_length), "spawn slot length, m"),
            ("traffic.ego_exclusion", Slot::Real(&mut env.traffic.ego_exclusion), "slots closer than this to the ego stay empty, m"),
            ("traffic.desired_speed_min", Slot::Real(&mut env.traffic.desired_speed_min), "lowest surrounding-vehicle desired speed, m/s"),
            ("traffic.desired_speed_max", Slot::Real(&mut env.traffic.desired_speed_max), "highest surrounding-vehicle desired speed, m/s"),
            ("idm.time_headway", Slot::Real(&mut env.idm.time_headway), "IDM time headway T, s"),
            ("idm.jam_distance", Slot::Real(&mut env.idm.jam_distance), "IDM jam distance s0, m"),
            ("idm.max_accel", Slot::Real(&mut env.idm.max_accel), "IDM maximum acceleration, m/s^2"),
            ("idm.comfort_decel", Slot::Real(&mut env.idm.comfort_decel), "IDM comfortable deceleration b, m/s^2"),
            ("idm.exponent", Slot::Real(&mut env.idm.exponent), "IDM free-road exponent"),
            ("idm.max_brake", Slot::Real(&mut env.idm.max_brake), "IDM braking clamp, m/s^2"),
            ("mobil.politeness", Slot::Real(&mut env.mobil.politeness), "MOBIL politeness factor"),
            ("mobil.threshold", Slot::Real(&mut env.mobil.threshold), "MOBIL incentive threshold, m/s^2"),
            ("mobil.safe_brake", Slot::Real(&mut env.mobil.safe_brake), "MOBIL safe braking limit, m/s^2"),
            ("mobil.duration", Slot::Real(&mut env.mobil.duration), "lane-change duration, s"),
            ("mobil.check_interval", Slot::Real(&mut env.mobil.check_interval), "time between lane-change checks per vehicle, s"),
            ("guidance.points", Slot::Count(&mut guidance.points), "guidance points g"),
            ("guidance.min_distance", Slot::Real(&mut guidance.min_distance), "floor of the endpoint distance, m"),
            ("guidance.max_distance", Slot::Real(&mut guidance.max_distance), "cap of the endpoint distance, m"),
            ("net.hidden", Slot::Sizes(&mut net.hidden), "hidden layer sizes, comma separated"),
            ("net.actor_lr", Slot::Real(&mut net.actor_lr), "actor learning rate"),
            ("net.critic_lr", Slot::Real(&mut net.critic_lr), "critic learning rate"),
            ("net.beta1", Slot::Real(&mut net.beta1), "Adam beta1"),
            ("net.beta2", Slot::Real(&mut net.beta2), "Adam beta2"),
            ("net.eps", Slot::Real(&mut net.eps), "Adam epsilon"),
            ("net.tau", Slot::Real(&mut net.tau), "target network soft-update rate"),
            ("net.gamma", Slot::Real(&mut net.gamma), "discount factor, both levels"),
            ("net.final_init", Slot::Real(&mut net.final_init), "half-width of the output-layer initialization"),
            ("safety.enabled", Slot::Flag(&mut safety.enabled), "enable risk-based correction and early termination"),
            ("safety.k_th", Slot::Real(&mut safety.k_th), "risk threshold K_th"),
            ("safety.n_max", Slot::Count(&mut safety.n_max), "maximum low-level steps per segment"),
            ("safety.eta_final", Slot::Real(&mut safety.eta_final), "final attention weight eta"),
            ("safety.eta_ramp", Slot::Real(&mut safety.eta_ramp), "fraction of training over which eta ramps up"),
            ("apf.w1", Slot::Real(&mut safety.apf.w1), "weight of the unconditional field term (w2 = 1 - w1)"),
            ("apf.x_safe", Slot::Real(&mut safety.apf.x_safe), "longitudinal safe distance X_s, m"),
            ("apf.y_safe", Slot::Real(&mut safety.apf.y_safe), "lateral safe distance Y_s, m"),
            ("apf.decay", Slot::Real(&mut safety.apf.decay), "point importance decay K_r"),
            ("prior.stanley_gain", Slot::Real(&mut safety.prior.stanley_gain), "Stanley cross-track gain"),
            ("prior.soft_speed", Slot::Real(&mut safety.prior.soft_speed), "Stanley speed softening, m/s"),
            ("prior.time_headway", Slot::Real(&mut safety.prior.time_headway), "conservative IDM time headway, s"),
            ("prior.cruise_speed", Slot::Real(&mut safety.prior.cruise_speed), "conservative cruise speed without a leader, m/s"),
            ("reward.target_speed", Slot::Real(&mut reward.target_speed), "target speed v*, m/s"),
            ("reward.penalty_speed", Slot::Real(&mut reward.penalty_speed), "slow-driving threshold v_p, m/s"),
            ("reward.violation_reward", Slot::Real(&mut reward.violation_reward), "high-level reward of a violating segment"),
            ("reward.violation_weight", Slot::Real(&mut reward.violation_weight), "per-step violation penalty"),
            ("reward.risk_weight", Slot::Real(&mut reward.risk_weight), "weight of K^h + K^l"),
            ("reward.steer_weight", Slot::Real(&mut reward.steer_weight), "weight of |steer|"),
            ("reward.steer_rate_weight", Slot::Real(&mut reward.steer_rate_weight), "weight of the steering change"),
            ("reward.accel_weight", Slot::Real(&mut reward.accel_weight), "weight of |accel|"),
            ("reward.accel_rate_weight", Slot::Real(&mut reward.accel_rate_weight), "weight of the acceleration change"),
            ("train.episodes", Slot::Count(&mut train.episodes), "training episodes per seed"),
            ("train.seed", Slot::Seed(&mut train.seed), "base random seed"),
            ("train.seed_count", Slot::Count(&mut train.seed_count), "independent runs with consecutive seeds"),
            ("train.low_capacity", Slot::Count(&mut train.low_capacity), "low-level replay capacity"),
            ("train.high_capacity", Slot::Count(&mut train.high_capacity), "high-level replay capacity"),
            ("train.batch_size", Slot::Count(&mut train.batch_size), "minibatch size, both levels"),
            ("train.low_warmup", Slot::Count(&mut train.low_warmup), "low-level transitions before updates start"),
            ("train.high_warmup", Slot::Count(&mut train.high_warmup), "high-level transitions before updates start"),
            ("train.epsilon_start", Slot::Real(&mut train.epsilon_start), "initial random-option probability"),
            ("train.epsilon_end", Slot::Real(&mut train.epsilon_end), "final random-option probability"),
            ("train.sigma_start", Slot::Real(&mut train.sigma_start), "initial Gaussian noise scale (squashed units)"),
            ("train.sigma_end", Slot::Real(&mut train.sigma_end), "final Gaussian noise scale"),
            ("train.explore_fraction", Slot::Real(&mut train.explore_fraction), "fraction of training over which exploration decays"),
            ("train.checkpoint_every", Slot::Count(&mut train.checkpoint_every), "checkpoint cadence in episodes, 0 disables"),
        ]
    }

    /// Settings of the full-length experiment: 2000 episodes at density 0.3
    /// over five seeds.
    pub fn paper_scale() -> Self {
        let mut c = Self::default();
        c.train.episodes = 2000;
        c.train.seed_count = 5;
        c.env.traffic.density = 0.3;
        c
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut slots = self.slots();
        let Some((_, slot, _)) = slots.iter_mut().find(|(k, _, _)| *k == key) else {
            return Err(Error::Config(format!("unknown key '{key}'")));
        };
        slot.set(value).map_err(|m| Error::Config(format!("{key}: {m}")))
    }

    pub fn get(&mut self, key: &str) -> Option<String> {
        self.slots().into_iter().find(|(k, _, _)| *k == key).map(|(_, s, _)| s.render())
    }

    pub fn keys() -> Vec<&'static str> {
        Self::default().slots().into_iter().map(|(k, _, _)| k).collect()
    }

    /// Apply `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigParse {
                    line: n + 1,
                    message: format!("expected 'key = value', got '{line}'"),
                });
            };
            self.set(key.trim(), value.trim()).map_err(|e| Error::ConfigParse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::default().with_file(path)
    }

    /// Apply a config file on top of `self` and validate the result.
    pub fn with_file(mut self, path: &Path) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::ConfigNotFound(path.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        self.apply_text(&text)?;
        self.validate()?;
        Ok(self)
    }

    /// The whole configuration as a commented config file.
    pub fn to_text(&self) -> String {
        let mut copy = self.clone();
        let mut out = String::new();
        let mut section = "";
        for (key, slot, doc) in copy.slots() {
            let sec = key.split('.').next().unwrap_or("");
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = sec;
            }
            let _ = writeln!(out, "# {doc}");
            let _ = writeln!(out, "{key} = {}", slot.render());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.safety.validate()?;
        self.reward.validate()?;
        let g = &self.guidance;
        if g.points < 2 {
            return Err(Error::Config("guidance.points must be at least 2".into()));
        }
        if !(g.min_distance > 0.0 && g.min_distance <= g.max_distance) {
            return Err(Error::Config("guidance distances must satisfy 0 < min <= max".into()));
        }
        let n = &self.net;
        if n.hidden.is_empty() || n.hidden.contains(&0) {
            return Err(Error::Config("net.hidden needs at least one positive layer size".into()));
        }
        if !(0.0..=1.0).contains(&n.tau) || !(0.0..=1.0).contains(&n.gamma) {
            return Err(Error::Config("net.tau and net.gamma must lie in [0, 1]".into()));
        }
        let t = &self.train;
        if t.batch_size == 0 || t.low_capacity < t.batch_size || t.high_capacity < t.batch_size {
            return Err(Error::Config("replay capacities must be at least the batch size".into()));
        }
        if t.seed_count == 0 {
            return Err(Error::Config("train.seed_count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&t.explore_fraction) {
            return Err(Error::Config("train.explore_fraction must lie in [0, 1]".into()));
        }
        // T^h = n_max * T^l: one high-level step spans at most n_max low steps
        if self.safety.n_max as f64 * self.env.dt > 1.0 + 1e-9 {
            log::warn!(
                "n_max * dt = {} s exceeds the nominal 1 s high-level step",
                self.safety.n_max as f64 * self.env.dt
            );
        }
        Ok(())
    }
}
