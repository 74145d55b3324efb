//! Static rule-based dispatch.
//!
//! Grid up: renewable surplus charges the battery (the rest is exported by the
//! environment); a deficit is covered by battery discharge while SOC is above
//! the floor, then by imports. Grid down: battery at full discharge plus DG
//! for whatever remains when the load exceeds renewables plus battery rating,
//! otherwise the battery alone. The DG never runs while the grid is up.

use serde::{Deserialize, Serialize};

use crate::devices::DeviceFleet;
use crate::env::{run_episode, EnvConfig, MgAction, MgState, Trajectory};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbcParams {
    pub p_ch_max: f64,
    pub p_dis_max: f64,
    pub p_grid_max: f64,
    pub p_dg_max: f64,
    /// SOC at or below which the battery counts as empty.
    pub soc_floor: f64,
}

impl RbcParams {
    pub fn from_fleet(fleet: &DeviceFleet) -> Self {
        Self {
            p_ch_max: fleet.battery.p_max_kw,
            p_dis_max: fleet.battery.p_max_kw,
            p_grid_max: fleet.grid.import_max_kw,
            p_dg_max: fleet.diesel.max_kw,
            soc_floor: fleet.battery.soc_min,
        }
    }
}

pub fn rbc_action(state: &MgState, params: &RbcParams) -> MgAction {
    let renewables = state.renewables();
    let load = state.p_load;
    if state.grid_up {
        if load < renewables {
            let surplus = renewables - load;
            MgAction::new(-surplus.min(params.p_ch_max), 0.0)
        } else {
            let deficit = load - renewables;
            let discharge = if state.soc > params.soc_floor {
                deficit.min(params.p_dis_max)
            } else {
                0.0
            };
            MgAction::new(discharge, 0.0)
        }
    } else if load > renewables + params.p_dis_max {
        let remaining = load - renewables - params.p_dis_max;
        MgAction::new(params.p_dis_max, remaining.min(params.p_dg_max))
    } else {
        MgAction::new((load - renewables).clamp(0.0, params.p_dis_max), 0.0)
    }
}

/// Full episode under the rule-based controller.
pub fn rbc_episode(cfg: &EnvConfig) -> Result<Trajectory> {
    let params = RbcParams::from_fleet(&cfg.fleet);
    run_episode(cfg, |s| rbc_action(s, &params))
}
