use ndarray::{Array2, ArrayView1};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{extend_state, Exploration, HighPolicy, NetConfig};
use crate::error::{Error, Result};
use crate::guidance::{build_guidance, GuidanceConfig, HybridActionSpace};
use crate::numerics::{Activation, AdamState, Gradients, Mlp};
use crate::sim::{Command, RoadConfig, VehicleState, MAX_ACCEL, MAX_STEER};

/// What the low-level target needs to rebuild guidance at a segment boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebuildContext {
    /// Observation at `s'`.
    pub obs: Vec<f64>,
    pub ego: VehicleState,
    pub bounds: HybridActionSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowTransition {
    pub z: Vec<f64>,
    /// Safety-corrected command actually applied.
    pub action: Command,
    pub reward: f64,
    pub next_z: Vec<f64>,
    pub beta: bool,
    pub violation: bool,
    /// Present iff `beta` is set without a violation.
    pub rebuild: Option<RebuildContext>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LowLossStats {
    pub critic_loss: f64,
    pub actor_value: f64,
}

pub fn command_to_unit(c: Command) -> [f64; 2] {
    [c.steer / MAX_STEER, c.accel / MAX_ACCEL]
}

pub fn unit_to_command(t: [f64; 2]) -> Command {
    Command::new(t[0] * MAX_STEER, t[1] * MAX_ACCEL)
}

/// Low-level deterministic actor-critic over extend-states.
#[derive(Debug, Clone)]
pub struct LowPolicy {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    pub gamma: f64,
    pub tau: f64,
    pub road: RoadConfig,
    pub guidance: GuidanceConfig,
}

impl LowPolicy {
    pub fn new(z_dim: usize, road: RoadConfig, guidance: GuidanceConfig, cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let actor = Mlp::init(&cfg.sizes(z_dim, 2), Activation::Tanh, cfg.final_init, rng)?;
        let critic = Mlp::init(&cfg.sizes(z_dim + 2, 1), Activation::Identity, cfg.final_init, rng)?;
        Ok(Self::from_networks(actor, critic, cfg, road, guidance))
    }

    pub fn from_networks(actor: Mlp, critic: Mlp, cfg: &NetConfig, road: RoadConfig, guidance: GuidanceConfig) -> Self {
        Self {
            actor_opt: AdamState::new(&actor, cfg.adam(cfg.actor_lr)),
            critic_opt: AdamState::new(&critic, cfg.adam(cfg.critic_lr)),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            gamma: cfg.gamma,
            tau: cfg.tau,
            road,
            guidance,
        }
    }

    fn z_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn critic_input(z: &[f64], a: Command) -> Vec<f64> {
        let mut x = Vec::with_capacity(z.len() + 2);
        x.extend_from_slice(z);
        x.extend_from_slice(&command_to_unit(a));
        x
    }

    pub fn select(&self, z: &[f64], explore: Option<&mut Exploration>) -> Result<Command> {
        let out = self.actor.forward(z)?;
        let mut t = [out[0], out[1]];
        if let Some(ex) = explore {
            for v in &mut t {
                *v = ex.perturb(*v);
            }
        }
        Ok(unit_to_command(t))
    }

    pub fn q_value(&self, z: &[f64], a: Command) -> Result<f64> {
        Ok(self.critic.forward(&Self::critic_input(z, a))?[0])
    }

    /// Extend-state at `s'` that the target bootstraps from: the stored one,
    /// or one rebuilt from the high-level target policy's guidance.
    pub fn bootstrap_state(&self, t: &LowTransition, high: &HighPolicy) -> Result<Vec<f64>> {
        match &t.rebuild {
            Some(ctx) if t.beta => {
                let action = high.target_greedy(&ctx.obs, &ctx.bounds)?;
                let g = build_guidance(action, &ctx.ego, &self.road, &self.guidance)?;
                Ok(extend_state(&ctx.obs, &g, &self.road, &self.guidance))
            }
            _ => Ok(t.next_z.clone()),
        }
    }

    /// TD targets for a batch.
    pub fn targets(&self, batch: &[&LowTransition], high: &HighPolicy) -> Result<Vec<f64>> {
        let mut y: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch[i].violation).collect();
        if live.is_empty() {
            return Ok(y);
        }
        let mut zs = Array2::zeros((live.len(), self.z_dim()));
        for (r, &i) in live.iter().enumerate() {
            let z = self.bootstrap_state(batch[i], high)?;
            zs.row_mut(r).assign(&ArrayView1::from(&z));
        }
        let mu = self.actor_target.forward_batch(zs.view())?;
        let mut x = Array2::zeros((live.len(), self.critic.input_dim()));
        x.slice_mut(ndarray::s![.., ..self.z_dim()]).assign(&zs);
        x.slice_mut(ndarray::s![.., self.z_dim()..]).assign(mu.output());
        let q = self.critic_target.forward_batch(x.view())?;
        for (r, &i) in live.iter().enumerate() {
            y[i] += self.gamma * q.output()[[r, 0]];
        }
        Ok(y)
    }

    pub fn critic_loss_grads_with_targets(&self, batch: &[&LowTransition], targets: &[f64]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("low-level batch"));
        }
        let n = batch.len();
        let mut x = Array2::zeros((n, self.critic.input_dim()));
        for (i, t) in batch.iter().enumerate() {
            x.row_mut(i).assign(&ArrayView1::from(&Self::critic_input(&t.z, t.action)));
        }
        let trace = self.critic.forward_batch(x.view())?;
        let mut up = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for i in 0..n {
            let err = trace.output()[[i, 0]] - targets[i];
            loss += 0.5 * err * err;
            up[[i, 0]] = err / n as f64;
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("low-level critic loss".into()));
        }
        let (g, _) = self.critic.backward_batch(&trace, up.view())?;
        Ok((loss, g))
    }

    pub fn critic_loss_grads(&self, batch: &[&LowTransition], high: &HighPolicy) -> Result<(f64, Gradients)> {
        let y = self.targets(batch, high)?;
        self.critic_loss_grads_with_targets(batch, &y)
    }

    /// Loss `−mean Q(z, μ(z))` and its actor-parameter gradient.
    pub fn actor_loss_grads(&self, batch: &[&LowTransition]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("low-level batch"));
        }
        let n = batch.len();
        let mut zs = Array2::zeros((n, self.z_dim()));
        for (i, t) in batch.iter().enumerate() {
            zs.row_mut(i).assign(&ArrayView1::from(&t.z));
        }
        let actor_trace = self.actor.forward_batch(zs.view())?;
        let mut x = Array2::zeros((n, self.critic.input_dim()));
        x.slice_mut(ndarray::s![.., ..self.z_dim()]).assign(&zs);
        x.slice_mut(ndarray::s![.., self.z_dim()..]).assign(actor_trace.output());
        let critic_trace = self.critic.forward_batch(x.view())?;
        let value = critic_trace.output().sum() / n as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite("low-level actor objective".into()));
        }
        let up = Array2::from_elem((n, 1), -1.0 / n as f64);
        let (_, dx) = self.critic.backward_batch(&critic_trace, up.view())?;
        let da = dx.slice(ndarray::s![.., self.z_dim()..]).to_owned();
        let (g, _) = self.actor.backward_batch(&actor_trace, da.view())?;
        Ok((-value, g))
    }

    pub fn update(&mut self, batch: &[&LowTransition], high: &HighPolicy) -> Result<LowLossStats> {
        let (critic_loss, cg) = self.critic_loss_grads(batch, high)?;
        self.critic_opt.step(&mut self.critic, &cg)?;
        let (actor_loss, ag) = self.actor_loss_grads(batch)?;
        self.actor_opt.step(&mut self.actor, &ag)?;
        self.critic_target.soft_update_from(&self.critic, self.tau)?;
        self.actor_target.soft_update_from(&self.actor, self.tau)?;
        Ok(LowLossStats {
            critic_loss,
            actor_value: -actor_loss,
        })
    }
}
