//! Five-point finite-difference checks of the four training losses.

use hwydrive_core::guidance::{GuidanceConfig, HybridAction, HybridActionSpace, LaneOption};
use hwydrive_core::numerics::{Gradients, Mlp};
use hwydrive_core::policies::{extend_dim, HighPolicy, HighTransition, LowPolicy, LowTransition, NetConfig};
use hwydrive_core::sim::{Command, RoadConfig, OBS_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-4;

fn small_net() -> NetConfig {
    NetConfig {
        hidden: vec![6, 5],
        final_init: 0.5,
        ..NetConfig::default()
    }
}

fn vec_in(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn bounds(rng: &mut ChaCha8Rng) -> HybridActionSpace {
    let mut available = [rng.random_bool(0.7), true, rng.random_bool(0.7)];
    if rng.random_bool(0.1) {
        available = [false, true, false];
    }
    let min = rng.random_range(5.0..20.0);
    HybridActionSpace {
        available,
        min_distance: min,
        max_distance: min + rng.random_range(10.0..140.0),
    }
}

fn high_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<HighTransition> {
    (0..n)
        .map(|_| {
            let b = bounds(rng);
            let opts: Vec<LaneOption> = b.options().collect();
            let o = opts[rng.random_range(0..opts.len())];
            HighTransition {
                state: vec_in(rng, OBS_DIM),
                bounds: b,
                action: HybridAction::new(o, rng.random_range(b.min_distance..=b.max_distance)),
                reward: rng.random_range(-3.0..1.0),
                next_state: vec_in(rng, OBS_DIM),
                next_bounds: bounds(rng),
                terminal: rng.random_bool(0.2),
            }
        })
        .collect()
}

fn low_batch(rng: &mut ChaCha8Rng, n: usize, z_dim: usize) -> Vec<LowTransition> {
    (0..n)
        .map(|_| LowTransition {
            z: vec_in(rng, z_dim),
            action: Command::new(rng.random_range(-0.5..0.5), rng.random_range(-3.0..3.0)),
            reward: rng.random_range(-3.0..0.0),
            next_z: vec_in(rng, z_dim),
            beta: false,
            violation: rng.random_bool(0.2),
            rebuild: None,
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between `grads` and the five-point central difference of
/// `loss` over every parameter of the network selected by `net`.
fn check<P>(policy: &mut P, net: fn(&mut P) -> &mut Mlp, grads: &Gradients, loss: impl Fn(&P) -> f64) -> f64 {
    let analytic: Vec<f64> = grads.iter().copied().collect();
    let count = net(policy).param_count();
    assert_eq!(analytic.len(), count);
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let orig = *net(policy).params_mut().nth(k).unwrap();
        let mut at = |dx: f64| {
            *net(policy).params_mut().nth(k).unwrap() = orig + dx;
            loss(policy)
        };
        let fd = (-at(2.0 * H) + 8.0 * at(H) - 8.0 * at(-H) + at(-2.0 * H)) / (12.0 * H);
        *net(policy).params_mut().nth(k).unwrap() = orig;
        worst = worst.max(rel_err(analytic[k], fd));
    }
    worst
}

fn high_policy(rng: &mut ChaCha8Rng) -> HighPolicy {
    let mut p = HighPolicy::new(OBS_DIM, 160.0, &small_net(), rng).unwrap();
    // decouple the target networks from the online ones
    p.actor_target = HighPolicy::new(OBS_DIM, 160.0, &small_net(), rng).unwrap().actor;
    p.critic_target = HighPolicy::new(OBS_DIM, 160.0, &small_net(), rng).unwrap().critic;
    p
}

fn low_policy(rng: &mut ChaCha8Rng) -> (LowPolicy, HighPolicy) {
    let g = GuidanceConfig::default();
    let road = RoadConfig::default();
    let mut p = LowPolicy::new(extend_dim(&g), road, g, &small_net(), rng).unwrap();
    let other = LowPolicy::new(extend_dim(&g), road, g, &small_net(), rng).unwrap();
    p.actor_target = other.actor;
    p.critic_target = other.critic;
    (p, high_policy(rng))
}

/// Worst relative error of the high-level critic gradient for one seed.
pub fn high_critic(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = high_policy(&mut rng);
    let batch = high_batch(&mut rng, 8);
    let refs: Vec<&HighTransition> = batch.iter().collect();
    let y: Vec<f64> = refs
        .iter()
        .map(|t| p.critic_target_value(t.reward, &t.next_state, &t.next_bounds, t.terminal).unwrap())
        .collect();
    let (_, g) = p.critic_loss_grads_with_targets(&refs, &y).unwrap();
    check(&mut p, |p| &mut p.critic, &g, |p| p.critic_loss_grads_with_targets(&refs, &y).unwrap().0)
}

pub fn high_actor(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = high_policy(&mut rng);
    let batch = high_batch(&mut rng, 8);
    let refs: Vec<&HighTransition> = batch.iter().collect();
    let (_, g) = p.actor_loss_grads(&refs).unwrap();
    check(&mut p, |p| &mut p.actor, &g, |p| p.actor_loss_grads(&refs).unwrap().0)
}

pub fn low_critic(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut p, high) = low_policy(&mut rng);
    let batch = low_batch(&mut rng, 8, extend_dim(&p.guidance));
    let refs: Vec<&LowTransition> = batch.iter().collect();
    let y = p.targets(&refs, &high).unwrap();
    let (_, g) = p.critic_loss_grads_with_targets(&refs, &y).unwrap();
    check(&mut p, |p| &mut p.critic, &g, |p| p.critic_loss_grads_with_targets(&refs, &y).unwrap().0)
}

pub fn low_actor(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut p, _) = low_policy(&mut rng);
    let batch = low_batch(&mut rng, 8, extend_dim(&p.guidance));
    let refs: Vec<&LowTransition> = batch.iter().collect();
    let (_, g) = p.actor_loss_grads(&refs).unwrap();
    check(&mut p, |p| &mut p.actor, &g, |p| p.actor_loss_grads(&refs).unwrap().0)
}
