//! Hybrid community microgrid laboratory: device models, a finite-horizon
//! dispatch environment with stochastic grid outages, a rule-based controller,
//! a PPO agent and KPI reporting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod devices;
pub mod env;
pub mod error;
pub mod kpi;
pub mod ppo;
pub mod rbc;
pub mod scenario;

pub use devices::DeviceFleet;
pub use env::{run_episode, EnvConfig, MgAction, MgState, MicrogridEnv, StepRecord, Trajectory};
pub use error::{MgError, Result};
pub use config::RunConfig;
pub use kpi::{compute_kpis, comparison_report, normalize_kpis, ComparisonReport, Kpi, KpiReport};
pub use rbc::{rbc_action, rbc_episode, RbcParams};
pub use scenario::{load_scenario, synth_scenario, Scenario, SynthConfig};
