use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    /// Apply one bias-corrected Adam update (descent on `grads`).
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::Shape {
                expected: net.layers.len(),
                actual: grads.layers.len(),
            });
        }
        for (l, g) in net.layers.iter().zip(&grads.layers) {
            if l.weights.dim() != g.weights.dim() || l.bias.dim() != g.bias.dim() {
                return Err(Error::Shape {
                    expected: l.weights.len() + l.bias.len(),
                    actual: g.weights.len() + g.bias.len(),
                });
            }
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("optimizer gradients".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for k in 0..net.layers.len() {
            let layer = &mut net.layers[k];
            let g = &grads.layers[k];
            let m = &mut self.first.layers[k];
            let v = &mut self.second.layers[k];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Activation;

    fn scalar(w: f64) -> Mlp {
        let mut n = Mlp::zeros(&[1, 1], Activation::Identity).unwrap();
        n.layers[0].weights[[0, 0]] = w;
        n
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut net = scalar(0.7);
        let mut opt = AdamState::new(&net, AdamConfig::default());
        let g = Gradients::zeros_like(&net);
        for _ in 0..5 {
            opt.step(&mut net, &g).unwrap();
        }
        assert_eq!(net, scalar(0.7));
        assert_eq!(opt.step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar(0.0);
        let cfg = AdamConfig::default();
        let mut opt = AdamState::new(&net, cfg);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[[0, 0]] = 1.0;
        opt.step(&mut net, &g).unwrap();
        // m̂ = 1, v̂ = 1  =>  Δ = -α / (1 + ε)
        let expected = -cfg.lr / (1.0 + cfg.eps);
        assert!((net.layers[0].weights[[0, 0]] - expected).abs() < 1e-18);
        opt.step(&mut net, &g).unwrap();
        assert!((net.layers[0].weights[[0, 0]] - 2.0 * expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut net = scalar(0.0);
        let mut opt = AdamState::new(&net, AdamConfig::default());
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].bias[0] = f64::NAN;
        assert!(matches!(opt.step(&mut net, &g), Err(Error::NonFinite(_))));
        assert_eq!(opt.step, 0);
    }
}
