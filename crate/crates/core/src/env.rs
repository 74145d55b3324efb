//! Finite-horizon dispatch environment.
//!
//! One [`MicrogridEnv`] owns the mutable episode state: battery SOC, the step
//! index and the outage random stream. [`MicrogridEnv::step`] clips the
//! requested action to device limits, settles the power balance against the
//! grid tie, and returns the realized dispatch with its cost breakdown.
//!
//! Settlement order for a step:
//!
//! 1. DG setpoint clipped to `[0, max_kw]`, battery request clipped to
//!    `±p_max_kw` and then to the SOC window.
//! 2. Net power `renewables + discharge + DG - load - charge`.
//! 3. Surplus is exported up to the tie limit (nothing while islanded unless
//!    `export_during_outage`). Whatever cannot leave is shed from DG output
//!    first, then battery discharge, then renewables (curtailment).
//! 4. Deficit is imported up to the tie limit (nothing while islanded). Any
//!    remaining shortfall first cancels battery charging, the rest is unmet.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::devices::{self, DeviceFleet};
use crate::error::{MgError, Result};
use crate::scenario::{hex, stream, Scenario};

/// Largest power-balance residual tolerated by the invariant checks (kW).
pub const BALANCE_TOL_KW: f64 = 1e-9;

/// Observation available to controllers at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgState {
    pub soc: f64,
    /// Hour of day in `[0, 24)`.
    pub hour: f64,
    pub p_pv_avail: f64,
    pub p_w_avail: f64,
    pub p_load: f64,
    pub grid_up: bool,
    pub t: usize,
}

impl MgState {
    pub fn renewables(&self) -> f64 {
        self.p_pv_avail + self.p_w_avail
    }
}

/// Requested setpoints. Positive battery power discharges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MgAction {
    pub p_bat_kw: f64,
    pub p_dg_kw: f64,
}

impl MgAction {
    pub fn new(p_bat_kw: f64, p_dg_kw: f64) -> Self {
        Self { p_bat_kw, p_dg_kw }
    }
}

/// Realized dispatch, costs and reward of a single step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub hour: f64,
    pub dt_h: f64,
    pub grid_up: bool,
    pub load_kw: f64,
    pub pv_avail_kw: f64,
    pub w_avail_kw: f64,
    pub p_pv_used: f64,
    pub p_w_used: f64,
    /// Signed battery terminal power, positive when discharging.
    pub p_bat: f64,
    pub p_ch: f64,
    pub p_dis: f64,
    pub p_dg: f64,
    pub p_grid_import: f64,
    pub p_grid_export: f64,
    pub curtailed_kw: f64,
    pub unmet_kw: f64,
    pub soc_before: f64,
    pub soc_after: f64,
    pub fuel_l: f64,
    pub price_buy: f64,
    pub price_sell: f64,
    pub c_grid: f64,
    pub c_deg: f64,
    pub c_dg: f64,
    /// Unmet-load penalty, included in the reward only.
    pub penalty: f64,
    pub reward: f64,
}

impl StepRecord {
    /// `supply - demand` including curtailment and unmet load; zero up to rounding.
    pub fn balance_residual(&self) -> f64 {
        let supply = self.p_pv_used + self.p_w_used + self.p_dis + self.p_dg + self.p_grid_import;
        let demand = self.load_kw - self.unmet_kw + self.p_ch + self.p_grid_export;
        supply - demand
    }

    pub fn operational_cost(&self) -> f64 {
        self.c_grid + self.c_deg + self.c_dg
    }
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub fleet: DeviceFleet,
    pub scenario: Arc<Scenario>,
    /// First scenario row of the episode.
    pub start: usize,
    /// Episode length T in steps.
    pub horizon: usize,
    /// Reward penalty per kWh of unserved load.
    pub unmet_penalty: f64,
    /// Seed of the outage stream.
    pub seed: u64,
    /// Initial SOC; defaults to the midpoint of the SOC window.
    pub initial_soc: Option<f64>,
    pub export_during_outage: bool,
    /// Scripted grid availability per episode step (`true` = up). Replaces the
    /// Bernoulli outage draws when set; must cover the whole horizon.
    pub grid_schedule: Option<Arc<Vec<bool>>>,
}

impl EnvConfig {
    /// Full-horizon configuration with default penalty and no outage export.
    pub fn new(fleet: DeviceFleet, scenario: Arc<Scenario>, seed: u64) -> Self {
        let horizon = scenario.len();
        Self {
            fleet,
            scenario,
            start: 0,
            horizon,
            unmet_penalty: DEFAULT_UNMET_PENALTY,
            seed,
            initial_soc: None,
            export_during_outage: false,
            grid_schedule: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet.validate()?;
        self.scenario.validate()?;
        if self.horizon == 0 || self.start + self.horizon > self.scenario.len() {
            return Err(MgError::InvalidConfig(format!(
                "episode [{}, {}) does not fit a scenario of {} steps",
                self.start,
                self.start + self.horizon,
                self.scenario.len()
            )));
        }
        if !(self.unmet_penalty >= 0.0) {
            return Err(MgError::InvalidConfig("unmet_penalty must be >= 0".into()));
        }
        if let Some(schedule) = &self.grid_schedule {
            if schedule.len() < self.horizon {
                return Err(MgError::InvalidConfig(format!(
                    "grid schedule covers {} steps, horizon is {}",
                    schedule.len(),
                    self.horizon
                )));
            }
        }
        if let Some(soc) = self.initial_soc {
            let b = &self.fleet.battery;
            if !(soc >= b.soc_min && soc <= b.soc_max) {
                return Err(MgError::InvalidConfig(format!(
                    "initial_soc {soc} outside [{}, {}]",
                    b.soc_min, b.soc_max
                )));
            }
        }
        Ok(())
    }

    /// Identifies the exogenous inputs of an episode: scenario window and outage seed.
    pub fn scenario_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.scenario.content_hash().as_bytes());
        h.update((self.start as u64).to_le_bytes());
        h.update((self.horizon as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(self.fleet.grid.outage_prob.to_le_bytes());
        if let Some(schedule) = &self.grid_schedule {
            h.update(schedule.iter().map(|&up| up as u8).collect::<Vec<_>>());
        }
        hex(&h.finalize())
    }
}

pub const DEFAULT_UNMET_PENALTY: f64 = 10.0;

/// One Bernoulli outage draw. Returns `true` when the grid stays up.
pub fn sample_outage<R: Rng + ?Sized>(rng: &mut R, outage_prob: f64) -> bool {
    rng.random::<f64>() >= outage_prob
}

pub struct MicrogridEnv {
    cfg: EnvConfig,
    state: MgState,
    outage_rng: ChaCha8Rng,
}

impl MicrogridEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let outage_rng = stream(cfg.seed, 0);
        let soc = cfg.initial_soc.unwrap_or(cfg.fleet.battery.soc_mid());
        let mut env = Self {
            state: MgState {
                soc,
                hour: 0.0,
                p_pv_avail: 0.0,
                p_w_avail: 0.0,
                p_load: 0.0,
                grid_up: true,
                t: 0,
            },
            cfg,
            outage_rng,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &MgState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.cfg.horizon
    }

    /// Restart the episode; the outage stream is re-seeded, so resets are reproducible.
    pub fn reset(&mut self) -> MgState {
        self.outage_rng = stream(self.cfg.seed, 0);
        let soc = self
            .cfg
            .initial_soc
            .unwrap_or(self.cfg.fleet.battery.soc_mid());
        let grid_up = self.draw_grid(0);
        self.state = self.observe(0, soc, grid_up);
        self.state
    }

    /// Grid availability for step `t`. One draw is consumed per step either
    /// way, so the outage sequence does not depend on the controller.
    fn draw_grid(&mut self, t: usize) -> bool {
        let drawn = sample_outage(&mut self.outage_rng, self.cfg.fleet.grid.outage_prob);
        match &self.cfg.grid_schedule {
            Some(schedule) => schedule.get(t).copied().unwrap_or(true),
            None => drawn,
        }
    }

    fn observe(&self, t: usize, soc: f64, grid_up: bool) -> MgState {
        let s = &self.cfg.scenario;
        let row = self.cfg.start + t.min(self.cfg.horizon - 1);
        let fleet = &self.cfg.fleet;
        // scenario values are validated non-negative, so the models cannot fail
        let p_pv_avail = devices::pv_power(&fleet.pv, s.irradiance[row]).unwrap_or(0.0);
        let p_w_avail = devices::wind_power(&fleet.wind, s.wind_speed[row]).unwrap_or(0.0);
        MgState {
            soc,
            hour: s.hour_of_day(row),
            p_pv_avail,
            p_w_avail,
            p_load: s.load_kw[row],
            grid_up,
            t,
        }
    }

    pub fn step(&mut self, action: &MgAction) -> Result<(MgState, StepRecord)> {
        if self.is_done() {
            return Err(MgError::EpisodeFinished {
                t: self.state.t,
                horizon: self.cfg.horizon,
            });
        }
        if !(action.p_bat_kw.is_finite() && action.p_dg_kw.is_finite()) {
            return Err(MgError::InputDomain(format!("non-finite action {action:?}")));
        }
        let st = self.state;
        let fleet = &self.cfg.fleet;
        let s = &self.cfg.scenario;
        let row = self.cfg.start + st.t;
        let dt = s.dt_h;
        let grid = &fleet.grid;

        let mut p_dg = action.p_dg_kw.clamp(0.0, fleet.diesel.max_kw);
        let mut bat = devices::battery_apply(&fleet.battery, st.soc, action.p_bat_kw, dt)?;
        let renewables = st.renewables();

        let net = renewables + bat.p_dis_kw + p_dg - st.p_load - bat.p_ch_kw;
        let mut import = 0.0;
        let mut export = 0.0;
        let mut curtailed = 0.0;
        let mut unmet = 0.0;

        if net > 0.0 {
            let cap = if st.grid_up || self.cfg.export_during_outage {
                grid.export_max_kw
            } else {
                0.0
            };
            export = net.min(cap);
            let mut excess = net - export;
            if excess > 0.0 {
                let cut = excess.min(p_dg);
                p_dg -= cut;
                excess -= cut;
            }
            if excess > 0.0 && bat.p_dis_kw > 0.0 {
                let keep = (bat.p_dis_kw - excess).max(0.0);
                excess -= bat.p_dis_kw - keep;
                bat = devices::battery_apply(&fleet.battery, st.soc, keep, dt)?;
            }
            curtailed = excess.clamp(0.0, renewables);
        } else if net < 0.0 {
            let deficit = -net;
            let cap = if st.grid_up { grid.import_max_kw } else { 0.0 };
            import = deficit.min(cap);
            let mut shortfall = deficit - import;
            if shortfall > 0.0 && bat.p_ch_kw > 0.0 {
                let keep = (bat.p_ch_kw - shortfall).max(0.0);
                shortfall -= bat.p_ch_kw - keep;
                bat = devices::battery_apply(&fleet.battery, st.soc, -keep, dt)?;
            }
            unmet = shortfall.clamp(0.0, st.p_load);
        }

        let used_share = if renewables > 0.0 {
            (renewables - curtailed) / renewables
        } else {
            0.0
        };
        let (fuel_l, c_dg) = devices::diesel_fuel_and_cost(&fleet.diesel, p_dg, dt)?;
        let price_buy = s.price_buy[row];
        let price_sell = s.price_sell[row];
        let c_grid = import * dt * price_buy - export * dt * price_sell;
        let c_deg = bat.deg_cost;
        let penalty = self.cfg.unmet_penalty * unmet * dt;
        let reward = -(c_grid + c_deg + c_dg) - penalty;

        let record = StepRecord {
            t: st.t,
            hour: st.hour,
            dt_h: dt,
            grid_up: st.grid_up,
            load_kw: st.p_load,
            pv_avail_kw: st.p_pv_avail,
            w_avail_kw: st.p_w_avail,
            p_pv_used: st.p_pv_avail * used_share,
            p_w_used: st.p_w_avail * used_share,
            p_bat: bat.p_bat_kw(),
            p_ch: bat.p_ch_kw,
            p_dis: bat.p_dis_kw,
            p_dg,
            p_grid_import: import,
            p_grid_export: export,
            curtailed_kw: curtailed,
            unmet_kw: unmet,
            soc_before: bat.soc_before,
            soc_after: bat.soc_after,
            fuel_l,
            price_buy,
            price_sell,
            c_grid,
            c_deg,
            c_dg,
            penalty,
            reward,
        };

        let t_next = st.t + 1;
        let soc_after = bat.soc_after;
        let grid_up = self.draw_grid(t_next);
        self.state = self.observe(t_next, soc_after, grid_up);
        Ok((self.state, record))
    }
}

/// Ordered step records of one episode, tagged with the episode's scenario hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario_hash: String,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| MgError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| MgError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Read step records back; the scenario hash travels separately in the run summary.
    pub fn read_csv<R: std::io::Read>(reader: R, scenario_hash: String) -> Result<Trajectory> {
        let mut rdr = csv::Reader::from_reader(reader);
        let records = rdr
            .deserialize::<StepRecord>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Trajectory {
            scenario_hash,
            records,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, scenario_hash: String) -> Result<Trajectory> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| MgError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), scenario_hash)
    }
}

/// Roll a controller over the full configured horizon.
pub fn run_episode<F>(cfg: &EnvConfig, mut controller: F) -> Result<Trajectory>
where
    F: FnMut(&MgState) -> MgAction,
{
    let mut env = MicrogridEnv::new(cfg.clone())?;
    let mut state = env.reset();
    let mut records = Vec::with_capacity(cfg.horizon);
    while !env.is_done() {
        let action = controller(&state);
        let (next, rec) = env.step(&action)?;
        records.push(rec);
        state = next;
    }
    Ok(Trajectory {
        scenario_hash: cfg.scenario_hash(),
        records,
    })
}
