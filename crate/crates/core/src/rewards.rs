use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Command;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Target speed v*, m/s.
    pub target_speed: f64,
    /// Speed below which the slow-driving penalty applies, m/s.
    pub penalty_speed: f64,
    /// High-level reward of a segment that ended in a violation.
    pub violation_reward: f64,
    pub violation_weight: f64,
    pub risk_weight: f64,
    pub steer_weight: f64,
    pub steer_rate_weight: f64,
    pub accel_weight: f64,
    pub accel_rate_weight: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            target_speed: 20.0,
            penalty_speed: 10.0,
            violation_reward: -10.0,
            violation_weight: 10.0,
            risk_weight: 5.0,
            steer_weight: 0.5,
            steer_rate_weight: 0.2,
            accel_weight: 0.5,
            accel_rate_weight: 0.2,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_speed > 0.0 && self.penalty_speed < self.target_speed) {
            return Err(Error::Config("reward speeds must satisfy 0 < penalty_speed < target_speed".into()));
        }
        if self.violation_reward.is_nan() || self.violation_reward >= 0.0 {
            return Err(Error::Config("reward.violation_reward must be negative".into()));
        }
        Ok(())
    }
}

/// Terms of the low-level reward, kept apart for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub safety: f64,
    pub efficiency: f64,
    pub consistency: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.safety + self.efficiency + self.consistency
    }
}

pub fn low_reward_terms(
    speed: f64,
    cmd: Command,
    prev_cmd: Command,
    k_h: f64,
    k_l: f64,
    violation: bool,
    cfg: &RewardConfig,
) -> RewardTerms {
    let f_v = if violation { 1.0 } else { 0.0 };
    let safety = -cfg.violation_weight * f_v - cfg.risk_weight * (k_h + k_l);
    let efficiency = -(speed - cfg.target_speed).abs() / cfg.target_speed
        - ((cfg.penalty_speed - speed) / cfg.penalty_speed).max(0.0);
    let consistency = -(cfg.steer_weight * cmd.steer.abs() + cfg.steer_rate_weight * (cmd.steer - prev_cmd.steer).abs())
        - (cfg.accel_weight * cmd.accel.abs() + cfg.accel_rate_weight * (cmd.accel - prev_cmd.accel).abs());
    RewardTerms {
        safety,
        efficiency,
        consistency,
    }
}

/// Low-level reward for one step at ego speed `speed`.
pub fn low_reward(
    speed: f64,
    cmd: Command,
    prev_cmd: Command,
    k_h: f64,
    k_l: f64,
    violation: bool,
    cfg: &RewardConfig,
) -> f64 {
    low_reward_terms(speed, cmd, prev_cmd, k_h, k_l, violation, cfg).total()
}

/// High-level reward of a segment: the mean low reward, or the violation
/// reward when the segment ended in a violation.
pub fn high_reward(low_rewards: &[f64], violation: bool, violation_reward: f64) -> Result<f64> {
    if low_rewards.is_empty() {
        return Err(Error::Empty("segment rewards"));
    }
    if violation {
        return Ok(violation_reward);
    }
    Ok(low_rewards.iter().sum::<f64>() / low_rewards.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_cruise_is_zero() {
        let cfg = RewardConfig::default();
        let r = low_reward(20.0, Command::default(), Command::default(), 0.0, 0.0, false, &cfg);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn violation_alone_costs_ten() {
        let cfg = RewardConfig::default();
        assert_eq!(low_reward(20.0, Command::default(), Command::default(), 0.0, 0.0, true, &cfg), -10.0);
    }

    #[test]
    fn slow_driving_case() {
        let cfg = RewardConfig::default();
        let t = low_reward_terms(5.0, Command::default(), Command::default(), 0.0, 0.0, false, &cfg);
        assert_eq!(t.efficiency, -1.25);
    }

    #[test]
    fn segment_mean_and_gate() {
        assert_eq!(high_reward(&[1.0, 2.0, 3.0], false, -10.0).unwrap(), 2.0);
        assert_eq!(high_reward(&[1.0, 2.0, 3.0], true, -10.0).unwrap(), -10.0);
        assert_eq!(high_reward(&[0.25], false, -10.0).unwrap(), 0.25);
        assert!(high_reward(&[], false, -10.0).is_err());
    }
}
