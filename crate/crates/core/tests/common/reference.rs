//! Independent PPO loss used as the finite-difference oracle, plus fixtures.

use microgrid_core::ppo::net::{gaussian_log_prob, ActionScale, ACTION_DIM, OBS_DIM};
use microgrid_core::ppo::{BatchItem, LossCoefs, PolicyNet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn small_net(rng: &mut ChaCha8Rng) -> PolicyNet {
    let scale = ActionScale {
        p_bat_max: 50.0,
        p_dg_max: 80.0,
    };
    let mut net = PolicyNet::new(&[4, 4], -0.3, scale, 100.0, rng);
    for p in net.params.iter_mut() {
        *p = rng.random_range(-0.8..0.8);
    }
    net
}

/// Straightforward re-derivation of the PPO loss.
pub fn reference_loss(net: &PolicyNet, batch: &[BatchItem], coefs: &LossCoefs) -> f64 {
    fn mlp(params: &[f64], offset: usize, dims: &[usize], x: &[f64]) -> Vec<f64> {
        let mut off = offset;
        let mut h = x.to_vec();
        for l in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut z = params[off + n_in * n_out + o];
                for i in 0..n_in {
                    z += params[off + o * n_in + i] * h[i];
                }
                next[o] = if l + 2 < dims.len() { z.tanh() } else { z };
            }
            off += n_in * n_out + n_out;
            h = next;
        }
        h
    }
    let p = &net.params;
    let log_std = &p[net.log_std_offset..net.log_std_offset + ACTION_DIM];
    let m = batch.len() as f64;
    let mut total = 0.0;
    for b in batch {
        let mean = mlp(p, net.actor.offset, &net.actor.dims, &b.obs);
        let mut logp = 0.0;
        for d in 0..ACTION_DIM {
            let s = log_std[d].exp();
            let z = (b.raw_action[d] - mean[d]) / s;
            logp += -0.5 * z * z - log_std[d] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        let r = (logp - b.log_prob_old).exp();
        let clipped = r.clamp(1.0 - coefs.clip_eps, 1.0 + coefs.clip_eps);
        let surrogate = (r * b.advantage).min(clipped * b.advantage);
        let v = mlp(p, net.critic.offset, &net.critic.dims, &b.obs)[0];
        total += -surrogate / m + coefs.value_coef * (v - b.ret).powi(2) / m;
    }
    let entropy: f64 = log_std
        .iter()
        .map(|ls| ls + 0.5 + 0.5 * (2.0 * std::f64::consts::PI).ln())
        .sum();
    total - coefs.entropy_coef * entropy
}

pub fn random_batch(net: &PolicyNet, n: usize, rng: &mut ChaCha8Rng) -> Vec<BatchItem> {
    // ratios of exp(±0.05) (inside the band) or exp(±0.5) (clipped), never near 1 ± eps
    let offsets = [-0.5, -0.05, 0.05, 0.5];
    (0..n)
        .map(|i| {
            let mut obs = [0.0; OBS_DIM];
            obs.iter_mut().for_each(|x| *x = rng.random_range(-2.0..2.0));
            let mean = net.mean(&obs);
            let raw_action = [
                mean[0] + rng.random_range(-1.0..1.0),
                mean[1] + rng.random_range(-1.0..1.0),
            ];
            let logp = gaussian_log_prob(&mean, net.log_std(), &raw_action);
            BatchItem {
                obs,
                raw_action,
                log_prob_old: logp + offsets[i % offsets.len()],
                advantage: rng.random_range(-2.0..2.0),
                ret: rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

/// Relative L2 error between the analytic gradient and central differences of
/// [`reference_loss`] with step `h`.
pub fn gradient_check(net: &PolicyNet, batch: &[BatchItem], coefs: &LossCoefs, h: f64) -> f64 {
    let refs: Vec<&BatchItem> = batch.iter().collect();
    let mut grad = vec![0.0; net.n_params()];
    microgrid_core::ppo::loss_and_grad(net, &refs, coefs, &mut grad);
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (i, g) in grad.iter().enumerate() {
        let mut plus = net.clone();
        plus.params[i] += h;
        let mut minus = net.clone();
        minus.params[i] -= h;
        let numeric =
            (reference_loss(&plus, batch, coefs) - reference_loss(&minus, batch, coefs)) / (2.0 * h);
        diff += (g - numeric).powi(2);
        norm += numeric * numeric;
    }
    (diff / norm).sqrt()
}
