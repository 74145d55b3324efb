//! Clipped surrogate objective, full PPO loss and its analytic gradient.

use serde::{Deserialize, Serialize};

use super::net::{gaussian_entropy, gaussian_log_prob, PolicyNet, ACTION_DIM, OBS_DIM};

/// Bound on `|log_prob_new - log_prob_old|` before exponentiation.
pub const RATIO_EXP_CLAMP: f64 = 20.0;

/// Probability ratio between the current and the behaviour policy.
pub fn prob_ratio(log_prob_new: f64, log_prob_old: f64) -> f64 {
    (log_prob_new - log_prob_old)
        .clamp(-RATIO_EXP_CLAMP, RATIO_EXP_CLAMP)
        .exp()
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_objective`] with respect to the ratio.
///
/// Zero whenever the clipped branch is the strict minimum.
pub fn clipped_objective_grad(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefs {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// One training sample with its frozen behaviour-policy log-probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub obs: [f64; OBS_DIM],
    pub raw_action: [f64; ACTION_DIM],
    pub log_prob_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Minibatch loss
/// `-mean(surrogate) + value_coef * mean((V - R)^2) - entropy_coef * H`
/// with its gradient accumulated into `grad` (which is not zeroed here).
pub fn loss_and_grad(
    net: &PolicyNet,
    batch: &[&BatchItem],
    coefs: &LossCoefs,
    grad: &mut [f64],
) -> LossStats {
    let m = batch.len() as f64;
    let log_std = net.log_std().to_vec();
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut acts = Vec::new();
    let mut stats = LossStats::default();
    let mut d_mean = [0.0; ACTION_DIM];
    let mut clipped = 0usize;

    for item in batch {
        net.actor.forward(&net.params, &item.obs, &mut acts);
        let mean = acts[acts.len() - 1].clone();
        let log_prob = gaussian_log_prob(&mean, &log_std, &item.raw_action);
        let diff = log_prob - item.log_prob_old;
        let ratio = prob_ratio(log_prob, item.log_prob_old);
        let surrogate = clipped_objective(ratio, item.advantage, coefs.clip_eps);
        stats.policy -= surrogate / m;
        stats.approx_kl += (ratio - 1.0 - diff.clamp(-RATIO_EXP_CLAMP, RATIO_EXP_CLAMP)) / m;
        if (ratio - 1.0).abs() > coefs.clip_eps {
            clipped += 1;
        }

        // d(-surrogate/m)/d log_prob; the ratio is constant once the exponent clamp binds
        let d_logp = if diff.abs() < RATIO_EXP_CLAMP {
            -clipped_objective_grad(ratio, item.advantage, coefs.clip_eps) * ratio / m
        } else {
            0.0
        };
        if d_logp != 0.0 {
            for d in 0..ACTION_DIM {
                let err = item.raw_action[d] - mean[d];
                d_mean[d] = d_logp * err * inv_var[d];
                grad[net.log_std_offset + d] += d_logp * (err * err * inv_var[d] - 1.0);
            }
            net.actor.backward(&net.params, &acts, &d_mean, grad);
        }

        net.critic.forward(&net.params, &item.obs, &mut acts);
        let value = acts[acts.len() - 1][0];
        let err = value - item.ret;
        stats.value += coefs.value_coef * err * err / m;
        let d_value = [2.0 * coefs.value_coef * err / m];
        net.critic.backward(&net.params, &acts, &d_value, grad);
    }

    stats.entropy = gaussian_entropy(&log_std);
    for d in 0..ACTION_DIM {
        grad[net.log_std_offset + d] -= coefs.entropy_coef;
    }
    stats.clip_fraction = clipped as f64 / m;
    stats.total = stats.policy + stats.value - coefs.entropy_coef * stats.entropy;
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(prob_ratio(-1.3, -1.3), 1.0);
        assert!((prob_ratio(0.1, 0.0) - 1.105_170_918_075_647_6).abs() < 1e-15);
        assert!((prob_ratio(-0.1, 0.0) - 0.904_837_418_035_959_6).abs() < 1e-15);
        assert_eq!(prob_ratio(1000.0, 0.0), 20.0f64.exp());
    }

    #[test]
    fn objective_examples() {
        assert_eq!(clipped_objective(1.0, 1.0, 0.2), 1.0);
        assert!((clipped_objective(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_when_clip_is_the_minimum() {
        assert_eq!(clipped_objective_grad(1.5, 1.0, 0.2), 0.0);
        assert_eq!(clipped_objective_grad(0.5, -1.0, 0.2), 0.0);
        assert_eq!(clipped_objective_grad(0.5, 1.0, 0.2), 1.0);
        assert_eq!(clipped_objective_grad(1.5, -1.0, 0.2), -1.0);
        assert_eq!(clipped_objective_grad(1.1, 2.0, 0.2), 2.0);
    }
}
