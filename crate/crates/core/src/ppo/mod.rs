//! Proximal policy optimization for the dispatch problem, written against
//! plain `f64` buffers: a tanh actor-critic with a diagonal-normal policy,
//! analytic backpropagation, GAE and the clipped surrogate objective.

pub mod adam;
pub mod gae;
pub mod net;
pub mod objective;
pub mod train;

pub use adam::Adam;
pub use gae::{compute_gae, normalize_advantages};
pub use net::{obs_encode, policy_sample, ActionScale, PolicyNet, PolicySample, RunningNorm};
pub use objective::{clipped_objective, loss_and_grad, prob_ratio, BatchItem, LossCoefs, LossStats};
pub use train::{evaluate, prepare_batch, train, update, Checkpoint, LogRow, TrainConfig, TrainOutcome, Transition};
