use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Exploration, NetConfig};
use crate::error::{Error, Result};
use crate::guidance::{HybridAction, HybridActionSpace, LaneOption};
use crate::numerics::{Activation, AdamState, Gradients, Mlp};

/// Replay record for the high level. `action` is the safety-corrected one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighTransition {
    pub state: Vec<f64>,
    pub bounds: HybridActionSpace,
    pub action: HybridAction,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub next_bounds: HybridActionSpace,
    /// Violation ended the segment: no bootstrap.
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighCandidate {
    pub action: HybridAction,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighDecision {
    /// One candidate per available option, in option order.
    pub candidates: Vec<HighCandidate>,
    /// Index of the selected candidate.
    pub chosen: usize,
    pub explored: bool,
}

impl HighDecision {
    pub fn action(&self) -> HybridAction {
        self.candidates[self.chosen].action
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HighLossStats {
    pub critic_loss: f64,
    /// Mean over the batch of Σ_o Q(s, o, μ_o(s)).
    pub actor_value: f64,
}

/// High-level parameterized actor-critic: the actor emits one squashed
/// endpoint distance per lane option; the critic scores `(s, one-hot o, a^h)`.
#[derive(Debug, Clone)]
pub struct HighPolicy {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    pub gamma: f64,
    pub tau: f64,
    /// Normalizer for the distance fed to the critic.
    pub distance_scale: f64,
}

impl HighPolicy {
    pub fn new(obs_dim: usize, distance_scale: f64, cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let actor = Mlp::init(&cfg.sizes(obs_dim, 3), Activation::Tanh, cfg.final_init, rng)?;
        let critic = Mlp::init(&cfg.sizes(obs_dim + 4, 1), Activation::Identity, cfg.final_init, rng)?;
        Ok(Self::from_networks(actor, critic, cfg, distance_scale))
    }

    pub fn from_networks(actor: Mlp, critic: Mlp, cfg: &NetConfig, distance_scale: f64) -> Self {
        Self {
            actor_opt: AdamState::new(&actor, cfg.adam(cfg.actor_lr)),
            critic_opt: AdamState::new(&critic, cfg.adam(cfg.critic_lr)),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            gamma: cfg.gamma,
            tau: cfg.tau,
            distance_scale,
        }
    }

    fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn normalize_distance(&self, d: f64) -> f64 {
        2.0 * d / self.distance_scale - 1.0
    }

    pub fn critic_input(&self, s: &[f64], option: LaneOption, distance: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + 4);
        x.extend_from_slice(s);
        let mut one_hot = [0.0; 3];
        one_hot[option.index()] = 1.0;
        x.extend_from_slice(&one_hot);
        x.push(self.normalize_distance(distance));
        x
    }

    /// `(option, a^h, Q)` for every available option under the given networks.
    fn score_options(&self, actor: &Mlp, critic: &Mlp, s: &[f64], bounds: &HybridActionSpace) -> Result<Vec<(LaneOption, f64, f64)>> {
        let heads = actor.forward(s)?;
        let opts: Vec<LaneOption> = bounds.options().collect();
        if opts.is_empty() {
            return Err(Error::Empty("hybrid option set"));
        }
        let mut rows = Array2::zeros((opts.len(), critic.input_dim()));
        let mut dists = Vec::with_capacity(opts.len());
        for (r, &o) in opts.iter().enumerate() {
            let d = bounds.distance_from_unit(heads[o.index()]);
            dists.push(d);
            let x = self.critic_input(s, o, d);
            rows.row_mut(r).assign(&ndarray::ArrayView1::from(&x));
        }
        let q = critic.forward_batch(rows.view())?;
        Ok(opts
            .into_iter()
            .zip(dists)
            .enumerate()
            .map(|(r, (o, d))| (o, d, q.output()[[r, 0]]))
            .collect())
    }

    pub fn q_value(&self, s: &[f64], action: &HybridAction) -> Result<f64> {
        Ok(self.critic.forward(&self.critic_input(s, action.option, action.distance))?[0])
    }

    /// Greedy or exploratory option/distance choice. Unavailable options are
    /// never candidates, which is the same as scoring them −∞.
    pub fn select(&self, s: &[f64], bounds: &HybridActionSpace, explore: Option<&mut Exploration>) -> Result<HighDecision> {
        let scored = self.score_options(&self.actor, &self.critic, s, bounds)?;
        let mut candidates: Vec<HighCandidate> = scored
            .iter()
            .map(|&(o, d, q)| HighCandidate {
                action: HybridAction::new(o, d),
                q,
            })
            .collect();
        let mut chosen = argmax(candidates.iter().map(|c| c.q));
        let mut explored = false;
        if let Some(ex) = explore {
            if ex.rng.random::<f64>() < ex.epsilon {
                chosen = ex.rng.random_range(0..candidates.len());
                explored = true;
            }
            let c = &mut candidates[chosen];
            let t = 2.0 * (c.action.distance - bounds.min_distance) / (bounds.max_distance - bounds.min_distance).max(1e-12) - 1.0;
            let noisy = bounds.distance_from_unit(ex.perturb(t.clamp(-1.0, 1.0)));
            if noisy != c.action.distance {
                c.action.distance = noisy;
                c.q = self.q_value(s, &c.action)?;
            }
        }
        Ok(HighDecision {
            candidates,
            chosen,
            explored,
        })
    }

    /// Greedy action of the target networks.
    pub fn target_greedy(&self, s: &[f64], bounds: &HybridActionSpace) -> Result<HybridAction> {
        let scored = self.score_options(&self.actor_target, &self.critic_target, s, bounds)?;
        let best = argmax(scored.iter().map(|x| x.2));
        Ok(HybridAction::new(scored[best].0, scored[best].1))
    }

    /// `y = r + γ max_o Q*(s', o, μ*_o(s'))`, or `r` for terminal transitions.
    pub fn critic_target_value(&self, reward: f64, next_state: &[f64], next_bounds: &HybridActionSpace, terminal: bool) -> Result<f64> {
        if terminal {
            return Ok(reward);
        }
        let scored = self.score_options(&self.actor_target, &self.critic_target, next_state, next_bounds)?;
        let best = scored.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
        Ok(reward + self.gamma * best)
    }

    /// Loss `mean ½(y − Q(s, o, a^h))²` and its parameter gradient.
    pub fn critic_loss_grads(&self, batch: &[&HighTransition]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("high-level batch"));
        }
        let targets: Vec<f64> = batch
            .iter()
            .map(|t| self.critic_target_value(t.reward, &t.next_state, &t.next_bounds, t.terminal))
            .collect::<Result<_>>()?;
        self.critic_loss_grads_with_targets(batch, &targets)
    }

    pub fn critic_loss_grads_with_targets(&self, batch: &[&HighTransition], targets: &[f64]) -> Result<(f64, Gradients)> {
        let n = batch.len();
        let mut x = Array2::zeros((n, self.critic.input_dim()));
        for (i, t) in batch.iter().enumerate() {
            let row = self.critic_input(&t.state, t.action.option, t.action.distance);
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
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
            return Err(Error::NonFinite("high-level critic loss".into()));
        }
        let (g, _) = self.critic.backward_batch(&trace, up.view())?;
        Ok((loss, g))
    }

    /// Loss `−mean Σ_{o∈O} Q(s, o, μ_o(s))` and its gradient with respect to
    /// the actor parameters (the critic is held fixed).
    pub fn actor_loss_grads(&self, batch: &[&HighTransition]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("high-level batch"));
        }
        let n = batch.len();
        let mut states = Array2::zeros((n, self.obs_dim()));
        for (i, t) in batch.iter().enumerate() {
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state));
        }
        let actor_trace = self.actor.forward_batch(states.view())?;
        let heads = actor_trace.output();

        // one critic row per (transition, available option)
        let mut index = Vec::new();
        for (i, t) in batch.iter().enumerate() {
            for o in t.bounds.options() {
                index.push((i, o));
            }
        }
        let mut x = Array2::zeros((index.len(), self.critic.input_dim()));
        for (r, &(i, o)) in index.iter().enumerate() {
            let d = batch[i].bounds.distance_from_unit(heads[[i, o.index()]]);
            let row = self.critic_input(&batch[i].state, o, d);
            x.row_mut(r).assign(&ndarray::ArrayView1::from(&row));
        }
        let critic_trace = self.critic.forward_batch(x.view())?;
        let value: f64 = critic_trace.output().iter().sum::<f64>() / n as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite("high-level actor objective".into()));
        }
        let up = Array2::from_elem((index.len(), 1), -1.0 / n as f64);
        let (_, dx) = self.critic.backward_batch(&critic_trace, up.view())?;
        let last = self.critic.input_dim() - 1;
        let mut d_heads = Array2::zeros((n, 3));
        for (r, &(i, o)) in index.iter().enumerate() {
            // chain: normalized distance <- distance <- squashed head
            let slope = batch[i].bounds.distance_slope();
            d_heads[[i, o.index()]] += dx[[r, last]] * (2.0 / self.distance_scale) * slope;
        }
        let (g, _) = self.actor.backward_batch(&actor_trace, d_heads.view())?;
        Ok((-value, g))
    }

    pub fn update(&mut self, batch: &[&HighTransition]) -> Result<HighLossStats> {
        let (critic_loss, cg) = self.critic_loss_grads(batch)?;
        self.critic_opt.step(&mut self.critic, &cg)?;
        let (actor_loss, ag) = self.actor_loss_grads(batch)?;
        self.actor_opt.step(&mut self.actor, &ag)?;
        self.critic_target.soft_update_from(&self.critic, self.tau)?;
        self.actor_target.soft_update_from(&self.actor, self.tau)?;
        Ok(HighLossStats {
            critic_loss,
            actor_value: -actor_loss,
        })
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
