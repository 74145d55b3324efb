//! Rollout collection, PPO updates, checkpoints and greedy evaluation.
//!
//! Training episodes are randomly placed windows of the scenario, each with
//! its own outage seed and a random initial SOC. Every random stream is derived
//! from the root seed and the iteration index, so a run resumed from a
//! checkpoint continues exactly as the uninterrupted run would have.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::gae::{compute_gae, normalize_advantages};
use super::net::{obs_encode, ActionScale, PolicyNet, ACTION_DIM, OBS_DIM};
use super::objective::{loss_and_grad, BatchItem, LossCoefs, LossStats};
use crate::env::{run_episode, EnvConfig, MgState, MicrogridEnv, Trajectory};
use crate::error::{MgError, Result};
use crate::scenario::stream;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub learning_rate: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    /// Transitions per update, summed over workers.
    pub rollout_length: usize,
    pub total_steps: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Length of a training episode window (days).
    pub episode_days: f64,
    /// Multiplier applied to rewards before advantage estimation.
    pub reward_scale: f64,
    /// Parallel rollout workers, each with its own environment and stream.
    pub workers: usize,
    /// Emit a checkpoint every this many updates; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            learning_rate: 3e-4,
            epochs_per_update: 10,
            minibatch_size: 64,
            rollout_length: 2048,
            total_steps: 240 * 2048,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            episode_days: 7.0,
            reward_scale: 0.01,
            workers: 1,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MgError::InvalidConfig(m.to_string()));
        if !((0.0..=1.0).contains(&self.gamma) && (0.0..=1.0).contains(&self.gae_lambda)) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be > 0");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be >= 0");
        }
        if self.epochs_per_update == 0
            || self.minibatch_size == 0
            || self.rollout_length == 0
            || self.total_steps == 0
            || self.workers == 0
        {
            return bad("epochs, minibatch size, rollout length, total steps and workers must be positive");
        }
        if self.minibatch_size > self.rollout_length {
            return bad("minibatch_size must not exceed rollout_length");
        }
        if self.workers > self.rollout_length {
            return bad("more workers than rollout steps");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.episode_days > 0.0 && self.reward_scale > 0.0) {
            return bad("episode_days and reward_scale must be > 0");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0 && self.max_grad_norm >= 0.0) {
            return bad("loss coefficients must be >= 0");
        }
        Ok(())
    }

    /// Number of collect-and-update iterations.
    pub fn iterations(&self) -> usize {
        self.total_steps.div_ceil(self.rollout_length)
    }

    fn coefs(&self) -> LossCoefs {
        LossCoefs {
            clip_eps: self.clip_eps,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }
}

/// One stored interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Normalized observation the action was chosen on.
    pub obs: [f64; OBS_DIM],
    /// Encoded observation before normalization.
    pub raw_obs: [f64; OBS_DIM],
    pub action: [f64; ACTION_DIM],
    pub log_prob_old: f64,
    /// Scaled reward.
    pub reward: f64,
    pub value: f64,
    /// Last step of its episode segment.
    pub done: bool,
    /// Critic value of the state following a segment end.
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub steps: usize,
    /// Mean unscaled per-step reward over the rollout.
    pub mean_reward: f64,
    /// Mean per-step operational cost (grid + degradation + diesel).
    pub mean_cost: f64,
    /// Unserved energy over the rollout (kWh).
    pub unmet_kwh: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: usize,
    pub steps_done: usize,
    pub train: TrainConfig,
    pub net: PolicyNet,
    pub optimizer: Adam,
    pub log: Vec<LogRow>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self)?;
        std::fs::write(path, json).map_err(|e| MgError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| MgError::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(MgError::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: PolicyNet,
    pub log: Vec<LogRow>,
    pub checkpoint: Checkpoint,
}

/// Stream for `(iteration, worker, purpose)` under the root seed.
fn derived_rng(seed: u64, iteration: usize, worker: usize, purpose: u64) -> ChaCha8Rng {
    let mut x = (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (worker as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ purpose.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    stream(seed, x)
}

const PURPOSE_INIT: u64 = 1;
const PURPOSE_ROLLOUT: u64 = 2;
const PURPOSE_UPDATE: u64 = 3;

pub fn init_policy(env_cfg: &EnvConfig, cfg: &TrainConfig) -> PolicyNet {
    let fleet = &env_cfg.fleet;
    let scale = ActionScale {
        p_bat_max: fleet.battery.p_max_kw,
        p_dg_max: fleet.diesel.max_kw,
    };
    let peak_load = env_cfg
        .scenario
        .load_kw
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let power_scale = if peak_load > 0.0 { peak_load } else { 1.0 };
    let mut rng = derived_rng(cfg.seed, 0, 0, PURPOSE_INIT);
    PolicyNet::new(&cfg.hidden, cfg.init_log_std, scale, power_scale, &mut rng)
}

struct RolloutStats {
    reward_sum: f64,
    cost_sum: f64,
    unmet_kwh: f64,
}

/// Collect `steps` transitions from fresh randomly-placed episodes.
fn collect(
    net: &PolicyNet,
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Transition>, RolloutStats)> {
    let n = env_cfg.scenario.len();
    let window = ((cfg.episode_days * 24.0 / env_cfg.scenario.dt_h).round() as usize).clamp(1, n);
    let battery = &env_cfg.fleet.battery;
    let mut out = Vec::with_capacity(steps);
    let mut stats = RolloutStats {
        reward_sum: 0.0,
        cost_sum: 0.0,
        unmet_kwh: 0.0,
    };

    while out.len() < steps {
        let mut ep_cfg = env_cfg.clone();
        ep_cfg.start = rng.random_range(0..=n - window);
        ep_cfg.horizon = window;
        ep_cfg.seed = rng.random();
        ep_cfg.grid_schedule = None;
        ep_cfg.initial_soc = Some(rng.random_range(battery.soc_min..=battery.soc_max));
        let mut env = MicrogridEnv::new(ep_cfg)?;
        let mut state = env.reset();

        while !env.is_done() && out.len() < steps {
            let raw_obs = obs_encode(&state, net.power_scale_kw);
            let obs = net.obs_norm.normalize(&raw_obs);
            let sample = net.sample(&obs, rng)?;
            let value = net.value(&obs);
            let (next, rec) = env.step(&sample.action)?;
            stats.reward_sum += rec.reward;
            stats.cost_sum += rec.operational_cost();
            stats.unmet_kwh += rec.unmet_kw * rec.dt_h;
            let seg_end = env.is_done() || out.len() + 1 == steps;
            let bootstrap_value = if seg_end {
                // window ends are truncations, not terminals
                net.value(&net.features(&next))
            } else {
                0.0
            };
            out.push(Transition {
                obs,
                raw_obs,
                action: sample.raw,
                log_prob_old: sample.log_prob,
                reward: rec.reward * cfg.reward_scale,
                value,
                done: seg_end,
                bootstrap_value,
            });
            state = next;
        }
    }
    Ok((out, stats))
}

/// GAE per episode segment, then batch-wide advantage normalization.
pub fn prepare_batch(transitions: &[Transition], cfg: &TrainConfig) -> Result<Vec<BatchItem>> {
    let mut items = Vec::with_capacity(transitions.len());
    let mut start = 0;
    for (i, tr) in transitions.iter().enumerate() {
        if tr.done || i + 1 == transitions.len() {
            let seg = &transitions[start..=i];
            let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seg.iter().map(|t| t.value).collect();
            let (adv, ret) =
                compute_gae(&rewards, &values, tr.bootstrap_value, cfg.gamma, cfg.gae_lambda)?;
            for ((t, a), r) in seg.iter().zip(adv).zip(ret) {
                items.push(BatchItem {
                    obs: t.obs,
                    raw_action: t.action,
                    log_prob_old: t.log_prob_old,
                    advantage: a,
                    ret: r,
                });
            }
            start = i + 1;
        }
    }
    let mut adv: Vec<f64> = items.iter().map(|b| b.advantage).collect();
    normalize_advantages(&mut adv);
    for (item, a) in items.iter_mut().zip(adv) {
        item.advantage = a;
    }
    Ok(items)
}

/// `epochs_per_update` passes of shuffled minibatch steps over `batch`.
pub fn update(
    net: &mut PolicyNet,
    optimizer: &mut Adam,
    batch: &[BatchItem],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossStats> {
    if batch.len() < cfg.minibatch_size {
        return Err(MgError::InvalidConfig(format!(
            "batch of {} is smaller than minibatch_size {}",
            batch.len(),
            cfg.minibatch_size
        )));
    }
    optimizer.lr = cfg.learning_rate;
    let coefs = cfg.coefs();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut grad = vec![0.0; net.n_params()];
    let mut mean = LossStats::default();
    let mut count = 0.0;

    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let mb: Vec<&BatchItem> = chunk.iter().map(|&i| &batch[i]).collect();
            grad.fill(0.0);
            let stats = loss_and_grad(net, &mb, &coefs, &mut grad);
            if !stats.total.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(MgError::Divergence(format!(
                    "non-finite loss {stats:?} after {} optimizer steps",
                    optimizer.t
                )));
            }
            if cfg.max_grad_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.max_grad_norm {
                    let k = cfg.max_grad_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= k);
                }
            }
            optimizer.step(&mut net.params, &grad);
            net.clamp_log_std();

            mean.total += stats.total;
            mean.policy += stats.policy;
            mean.value += stats.value;
            mean.entropy += stats.entropy;
            mean.approx_kl += stats.approx_kl;
            mean.clip_fraction += stats.clip_fraction;
            count += 1.0;
        }
    }
    mean.total /= count;
    mean.policy /= count;
    mean.value /= count;
    mean.entropy /= count;
    mean.approx_kl /= count;
    mean.clip_fraction /= count;
    Ok(mean)
}

/// Train from scratch, or continue from `resume`. `on_checkpoint` receives
/// periodic checkpoints (every `checkpoint_every` updates) and the final one.
pub fn train<F>(
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
    mut on_checkpoint: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&Checkpoint) -> Result<()>,
{
    cfg.validate()?;
    env_cfg.validate()?;
    let (mut net, mut optimizer, mut log, first_iter, mut steps_done) = match resume {
        Some(ck) => (ck.net, ck.optimizer, ck.log, ck.iteration, ck.steps_done),
        None => {
            let net = init_policy(env_cfg, cfg);
            let adam = Adam::new(net.n_params(), cfg.learning_rate);
            (net, adam, Vec::new(), 0, 0)
        }
    };
    let iterations = cfg.iterations();
    let snapshot = |net: &PolicyNet, optimizer: &Adam, log: &Vec<LogRow>, it, steps| Checkpoint {
        version: CHECKPOINT_VERSION,
        iteration: it,
        steps_done: steps,
        train: cfg.clone(),
        net: net.clone(),
        optimizer: optimizer.clone(),
        log: log.clone(),
    };

    for it in first_iter..iterations {
        let steps = cfg.rollout_length.min(cfg.total_steps - steps_done.min(cfg.total_steps));
        let steps = steps.max(cfg.minibatch_size);
        let shares: Vec<usize> = (0..cfg.workers)
            .map(|w| steps / cfg.workers + usize::from(w < steps % cfg.workers))
            .collect();

        let results: Vec<Result<(Vec<Transition>, RolloutStats)>> = if cfg.workers == 1 {
            vec![collect(&net, env_cfg, cfg, shares[0], &mut derived_rng(cfg.seed, it, 0, PURPOSE_ROLLOUT))]
        } else {
            let net_ref = &net;
            std::thread::scope(|scope| {
                let handles: Vec<_> = shares
                    .iter()
                    .enumerate()
                    .map(|(w, &n)| {
                        scope.spawn(move || {
                            let mut rng = derived_rng(cfg.seed, it, w, PURPOSE_ROLLOUT);
                            collect(net_ref, env_cfg, cfg, n, &mut rng)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("rollout worker panicked"))
                    .collect()
            })
        };

        let mut transitions = Vec::with_capacity(steps);
        let (mut reward_sum, mut cost_sum, mut unmet_kwh) = (0.0, 0.0, 0.0);
        for r in results {
            let (tr, st) = r?;
            transitions.extend(tr);
            reward_sum += st.reward_sum;
            cost_sum += st.cost_sum;
            unmet_kwh += st.unmet_kwh;
        }

        let raw: Vec<[f64; OBS_DIM]> = transitions.iter().map(|t| t.raw_obs).collect();
        let batch = prepare_batch(&transitions, cfg)?;
        let mut rng = derived_rng(cfg.seed, it, 0, PURPOSE_UPDATE);
        let stats = update(&mut net, &mut optimizer, &batch, cfg, &mut rng)?;
        net.obs_norm.update(&raw);
        if !net.is_finite() {
            return Err(MgError::Divergence(format!(
                "non-finite parameters after update {it}"
            )));
        }

        steps_done += transitions.len();
        let n = transitions.len() as f64;
        log.push(LogRow {
            iteration: it,
            steps: steps_done,
            mean_reward: reward_sum / n,
            mean_cost: cost_sum / n,
            unmet_kwh,
            policy_loss: stats.policy,
            value_loss: stats.value,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
        });

        if cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && it + 1 < iterations {
            on_checkpoint(&snapshot(&net, &optimizer, &log, it + 1, steps_done))?;
        }
    }

    let checkpoint = snapshot(&net, &optimizer, &log, iterations.max(first_iter), steps_done);
    on_checkpoint(&checkpoint)?;
    Ok(TrainOutcome {
        net,
        log,
        checkpoint,
    })
}

/// Greedy rollout over the configured horizon: the action is the scaled policy mean.
pub fn evaluate(net: &PolicyNet, env_cfg: &EnvConfig) -> Result<Trajectory> {
    let mut failure = None;
    let traj = run_episode(env_cfg, |s: &MgState| match net.greedy(s) {
        Ok(a) => a,
        Err(e) => {
            failure.get_or_insert(e);
            Default::default()
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Write the learning curve as CSV.
pub fn write_log_csv<W: std::io::Write>(log: &[LogRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in log {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| MgError::io("<csv writer>", e))?;
    Ok(())
}
