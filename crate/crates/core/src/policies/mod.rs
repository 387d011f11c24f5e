//! Parameterized actor-critic for the hybrid high level and deterministic
//! actor-critic for the continuous low level.

mod high;
mod low;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::guidance::{GuidanceConfig, MotionGuidance};
use crate::numerics::AdamConfig;
use crate::sim::RoadConfig;

pub use high::{HighCandidate, HighDecision, HighLossStats, HighPolicy, HighTransition};
pub use low::{command_to_unit, unit_to_command, LowLossStats, LowPolicy, LowTransition, RebuildContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// τ for target networks.
    pub tau: f64,
    /// γ, shared by both levels.
    pub gamma: f64,
    /// Half-width of the uniform init of every output layer.
    pub final_init: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            tau: 0.005,
            gamma: 0.99,
            final_init: 3e-3,
        }
    }
}

impl NetConfig {
    pub(crate) fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.hidden);
        s.push(output);
        s
    }

    pub(crate) fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Exploration parameters plus the RNG that drives them.
#[derive(Debug, Clone)]
pub struct Exploration {
    /// Probability of a uniformly random discrete option.
    pub epsilon: f64,
    /// Gaussian noise scale in squashed action units.
    pub sigma: f64,
    pub rng: ChaCha8Rng,
}

impl Exploration {
    pub fn new(epsilon: f64, sigma: f64, seed: u64) -> Self {
        Self {
            epsilon,
            sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Perturb a squashed value in `[-1, 1]`; the noise is clipped to ±2σ and
    /// the result to the unit interval.
    pub fn perturb(&mut self, t: f64) -> f64 {
        if self.sigma <= 0.0 {
            return t;
        }
        let n: f64 = self.rng.sample(StandardNormal);
        let noise = (n * self.sigma).clamp(-2.0 * self.sigma, 2.0 * self.sigma);
        (t + noise).clamp(-1.0, 1.0)
    }
}

/// Low-level input `z = (s, G)`: the observation followed by `g` guidance
/// points normalized by the guidance range and the paved width. Missing
/// trailing points repeat the last surviving one.
pub fn extend_state(obs: &[f64], g: &MotionGuidance, road: &RoadConfig, cfg: &GuidanceConfig) -> Vec<f64> {
    let n = cfg.points;
    let mut z = Vec::with_capacity(obs.len() + 2 * n);
    z.extend_from_slice(obs);
    let last = g.points.last().copied().unwrap_or([0.0, 0.0]);
    for j in 0..n {
        let p = g.points.get(j).copied().unwrap_or(last);
        z.push((p[0] / cfg.max_distance).clamp(-1.0, 1.0));
        z.push((p[1] / road.paved_width()).clamp(-1.0, 1.0));
    }
    z
}

pub fn extend_dim(cfg: &GuidanceConfig) -> usize {
    crate::sim::OBS_DIM + 2 * cfg.points
}
