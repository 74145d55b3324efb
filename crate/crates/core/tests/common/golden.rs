//! Five-step toy episode whose RBC outcome is computed by hand.
//!
//! Every quantity is a dyadic rational, so the expected values are exact.

use std::sync::Arc;

use microgrid_core::devices::{BatteryParams, DieselParams, PvParams};
use microgrid_core::scenario::{Origin, ScenarioMeta};
use microgrid_core::{DeviceFleet, EnvConfig, Scenario};

pub struct Expected {
    pub grid_up: bool,
    pub p_bat: f64,
    pub p_dg: f64,
    pub import: f64,
    pub export: f64,
    pub unmet: f64,
    pub soc_after: f64,
    pub fuel_l: f64,
    pub reward: f64,
}

pub fn golden_config() -> EnvConfig {
    let fleet = DeviceFleet {
        pv: PvParams {
            rated_kw: 128.0,
            derating: 1.0,
            stc_irradiance: 1.0,
        },
        diesel: DieselParams {
            rated_kw: 64.0,
            slope: 0.25,
            intercept: 0.0625,
            fuel_price: 1.5,
            max_kw: 64.0,
        },
        battery: BatteryParams {
            capacity_kwh: 128.0,
            dod: 1.0,
            soc_min: 0.125,
            soc_max: 0.875,
            p_max_kw: 32.0,
            eta_ch: 1.0,
            eta_dis: 1.0,
            deg_cost_per_kwh: 0.0625,
        },
        ..Default::default()
    };
    let scenario = Scenario {
        dt_h: 1.0,
        load_kw: vec![40.0, 56.0, 96.0, 24.0, 40.0],
        // PV of 80, 16, 16, 8, 0 kW
        irradiance: vec![0.625, 0.125, 0.125, 0.0625, 0.0],
        wind_speed: vec![0.0; 5], // below cut-in
        price_buy: vec![0.25; 5],
        price_sell: vec![0.125; 5],
        meta: ScenarioMeta {
            name: "golden".into(),
            origin: Origin::Synthetic,
            seed: None,
        },
    };
    let mut cfg = EnvConfig::new(fleet, Arc::new(scenario), 0);
    cfg.initial_soc = Some(0.5);
    cfg.grid_schedule = Some(Arc::new(vec![true, true, false, false, true]));
    cfg
}

pub fn golden_expected() -> Vec<Expected> {
    let row = |grid_up, p_bat, p_dg, import, export, unmet, soc_after, fuel_l, reward| Expected {
        grid_up,
        p_bat,
        p_dg,
        import,
        export,
        unmet,
        soc_after,
        fuel_l,
        reward,
    };
    vec![
        // surplus 40 kW: charge at the 32 kW limit, export 8 kW
        row(true, -32.0, 0.0, 0.0, 8.0, 0.0, 0.75, 0.0, -1.0),
        // deficit 40 kW: discharge 32 kW, import 8 kW
        row(true, 32.0, 0.0, 8.0, 0.0, 0.0, 0.5, 0.0, -4.0),
        // islanded, load beyond PV + battery: DG covers 48 kW
        row(false, 32.0, 48.0, 0.0, 0.0, 0.0, 0.25, 16.0, -26.0),
        // islanded, battery alone covers the 16 kW gap
        row(false, 16.0, 0.0, 0.0, 0.0, 0.0, 0.125, 0.0, -1.0),
        // battery at its floor: everything imported
        row(true, 0.0, 0.0, 40.0, 0.0, 0.0, 0.125, 0.0, -10.0),
    ]
}
