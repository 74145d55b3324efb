//! Actor-critic multilayer perceptrons over a single flat parameter vector.
//!
//! Layout of `PolicyNet::params`: actor layers, then the per-dimension
//! log-std, then critic layers. Each dense layer stores its weight matrix
//! row-major (`out x in`) followed by its bias.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{MgAction, MgState};
use crate::error::{MgError, Result};

pub const OBS_DIM: usize = 7;
pub const ACTION_DIM: usize = 2;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const NORM_CLIP: f64 = 10.0;

/// Shape of a tanh MLP with a linear output layer, located at `offset` in the flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLayout {
    pub dims: Vec<usize>,
    pub offset: usize,
}

impl MlpLayout {
    pub fn new(dims: Vec<usize>, offset: usize) -> Self {
        Self { dims, offset }
    }

    pub fn n_params(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = self.offset;
        self.dims.windows(2).map(move |w| {
            let start = off;
            off += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    /// Forward pass. `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub fn forward(&self, params: &[f64], x: &[f64], acts: &mut Vec<Vec<f64>>) {
        let n_layers = self.dims.len() - 1;
        acts.resize(n_layers + 1, Vec::new());
        acts[0].clear();
        acts[0].extend_from_slice(x);
        for (l, (off, n_in, n_out)) in self.layers().enumerate() {
            let (w, rest) = params[off..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            let (head, tail) = acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.clear();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
        }
    }

    /// Accumulate `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, params: &[f64], acts: &[Vec<f64>], d_out: &[f64], grad: &mut [f64]) {
        let layers: Vec<_> = self.layers().collect();
        let mut delta = d_out.to_vec();
        let mut prev = Vec::new();
        for (l, &(off, n_in, n_out)) in layers.iter().enumerate().rev() {
            let input = &acts[l];
            let w = &params[off..off + n_in * n_out];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l > 0 {
                prev.clear();
                prev.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wv;
                    }
                }
                // tanh'(z) = 1 - tanh(z)^2
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
    }

    fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R, out_gain: f64) {
        let n_layers = self.dims.len() - 1;
        for (l, (off, n_in, n_out)) in self.layers().enumerate() {
            let gain = if l + 1 == n_layers { out_gain } else { 1.0 };
            let std = gain / (n_in as f64).sqrt();
            for p in &mut params[off..off + n_in * n_out] {
                *p = if std > 0.0 {
                    Normal::new(0.0, std).unwrap().sample(rng)
                } else {
                    0.0
                };
            }
            params[off + n_in * n_out..off + n_in * n_out + n_out].fill(0.0);
        }
    }
}

/// Per-feature running mean and variance (parallel Welford merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn update(&mut self, batch: &[[f64; OBS_DIM]]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        for d in 0..self.mean.len() {
            let mean_b = batch.iter().map(|x| x[d]).sum::<f64>() / n;
            let var_b = batch.iter().map(|x| (x[d] - mean_b).powi(2)).sum::<f64>() / n;
            let total = self.count + n;
            let delta = mean_b - self.mean[d];
            let m2 = self.var[d] * self.count + var_b * n + delta * delta * self.count * n / total;
            self.mean[d] += delta * n / total;
            self.var[d] = m2 / total;
        }
        self.count += n;
    }

    pub fn normalize(&self, x: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        for d in 0..OBS_DIM {
            out[d] = ((x[d] - self.mean[d]) / (self.var[d] + 1e-8).sqrt()).clamp(-NORM_CLIP, NORM_CLIP);
        }
        out
    }
}

/// Raw feature vector: SOC, cyclic hour, powers relative to `power_scale_kw`, grid flag.
pub fn obs_encode(state: &MgState, power_scale_kw: f64) -> [f64; OBS_DIM] {
    let angle = 2.0 * std::f64::consts::PI * state.hour / 24.0;
    [
        state.soc,
        angle.sin(),
        angle.cos(),
        state.p_pv_avail / power_scale_kw,
        state.p_w_avail / power_scale_kw,
        state.p_load / power_scale_kw,
        if state.grid_up { 1.0 } else { 0.0 },
    ]
}

/// Physical ranges the unsquashed policy output is mapped onto.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScale {
    pub p_bat_max: f64,
    pub p_dg_max: f64,
}

impl ActionScale {
    /// `u[0]` in `[-1, 1]` spans the battery range, `u[1]` in `[0, 1]` the DG range.
    pub fn to_action(&self, u: &[f64; ACTION_DIM]) -> MgAction {
        MgAction::new(
            u[0].clamp(-1.0, 1.0) * self.p_bat_max,
            u[1].clamp(0.0, 1.0) * self.p_dg_max,
        )
    }
}

/// Diagonal normal log-density of `u` under `mean` and `log_std`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(u)
        .map(|((m, ls), x)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Entropy of a diagonal normal with the given log-stds.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub params: Vec<f64>,
    pub actor: MlpLayout,
    pub critic: MlpLayout,
    pub log_std_offset: usize,
    pub obs_norm: RunningNorm,
    pub action_scale: ActionScale,
    pub power_scale_kw: f64,
}

/// One stochastic policy decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySample {
    /// Unsquashed draw, before clipping into physical ranges.
    pub raw: [f64; ACTION_DIM],
    pub action: MgAction,
    pub log_prob: f64,
}

impl PolicyNet {
    /// Fresh network with the actor output layer zero-initialized, so the
    /// initial mean action is exactly zero.
    pub fn new<R: Rng + ?Sized>(
        hidden: &[usize],
        init_log_std: f64,
        action_scale: ActionScale,
        power_scale_kw: f64,
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![OBS_DIM];
        dims.extend_from_slice(hidden);
        dims.push(ACTION_DIM);
        let actor = MlpLayout::new(dims.clone(), 0);
        let log_std_offset = actor.n_params();
        *dims.last_mut().unwrap() = 1;
        let critic = MlpLayout::new(dims, log_std_offset + ACTION_DIM);
        let mut params = vec![0.0; critic.offset + critic.n_params()];
        actor.init(&mut params, rng, 0.0);
        critic.init(&mut params, rng, 1.0);
        params[log_std_offset..log_std_offset + ACTION_DIM]
            .fill(init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX));
        Self {
            params,
            actor,
            critic,
            log_std_offset,
            obs_norm: RunningNorm::new(OBS_DIM),
            action_scale,
            power_scale_kw,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.log_std_offset..self.log_std_offset + ACTION_DIM]
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.params[self.log_std_offset..self.log_std_offset + ACTION_DIM] {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Encoded and normalized observation.
    pub fn features(&self, state: &MgState) -> [f64; OBS_DIM] {
        self.obs_norm
            .normalize(&obs_encode(state, self.power_scale_kw))
    }

    pub fn mean(&self, obs: &[f64; OBS_DIM]) -> [f64; ACTION_DIM] {
        let mut acts = Vec::new();
        self.actor.forward(&self.params, obs, &mut acts);
        let out = &acts[acts.len() - 1];
        [out[0], out[1]]
    }

    pub fn value(&self, obs: &[f64; OBS_DIM]) -> f64 {
        let mut acts = Vec::new();
        self.critic.forward(&self.params, obs, &mut acts);
        acts[acts.len() - 1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Draw an action for a normalized observation.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64; OBS_DIM], rng: &mut R) -> Result<PolicySample> {
        let mean = self.mean(obs);
        let log_std = self.log_std();
        let mut raw = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            let z: f64 = rng.sample(StandardNormal);
            raw[d] = mean[d] + log_std[d].exp() * z;
        }
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(MgError::Divergence(format!(
                "non-finite policy output: mean {mean:?}, log-std {log_std:?}"
            )));
        }
        Ok(PolicySample {
            raw,
            action: self.action_scale.to_action(&raw),
            log_prob: gaussian_log_prob(&mean, log_std, &raw),
        })
    }

    /// Deterministic action: the scaled mean.
    pub fn greedy(&self, state: &MgState) -> Result<MgAction> {
        let mean = self.mean(&self.features(state));
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(MgError::Divergence(format!("non-finite policy mean {mean:?}")));
        }
        Ok(self.action_scale.to_action(&mean))
    }
}

/// Stochastic action for an environment state (encoding + normalization + sampling).
pub fn policy_sample<R: Rng + ?Sized>(
    net: &PolicyNet,
    state: &MgState,
    rng: &mut R,
) -> Result<PolicySample> {
    net.sample(&net.features(state), rng)
}
