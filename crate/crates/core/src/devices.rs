//! Physical and economic models for the distributed energy resources of the
//! microgrid: PV array, wind turbine, diesel generator, battery and power
//! converter, plus the grid tie.
//!
//! Every function here is pure. Default parameter values are configuration
//! defaults for a mid-sized rural community feeder; none of them are measured
//! values of a specific site.

use serde::{Deserialize, Serialize};

use crate::error::{MgError, Result};

/// Betz limit on the power coefficient of a wind rotor.
pub const BETZ_LIMIT: f64 = 16.0 / 27.0;

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(MgError::InvalidConfig(msg()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PvParams {
    /// Rated array capacity (kW).
    pub rated_kw: f64,
    /// Derating factor in (0, 1].
    pub derating: f64,
    /// Irradiance at standard test conditions (kW/m²).
    pub stc_irradiance: f64,
}

impl Default for PvParams {
    fn default() -> Self {
        Self {
            rated_kw: 150.0,
            derating: 0.85,
            stc_irradiance: 1.0,
        }
    }
}

impl PvParams {
    pub fn validate(&self) -> Result<()> {
        require(self.rated_kw > 0.0, || "pv.rated_kw must be > 0".into())?;
        require(self.derating > 0.0 && self.derating <= 1.0, || {
            "pv.derating must lie in (0, 1]".into()
        })?;
        require(self.stc_irradiance > 0.0, || {
            "pv.stc_irradiance must be > 0".into()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindParams {
    /// Air density (kg/m³).
    pub air_density: f64,
    /// Rotor swept area (m²).
    pub swept_area: f64,
    /// Power coefficient, at most the Betz limit.
    pub power_coeff: f64,
    /// Electrical output cap (kW).
    pub rated_kw: f64,
    /// Cut-in wind speed (m/s).
    pub cut_in: f64,
    /// Cut-out wind speed (m/s).
    pub cut_out: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            air_density: 1.225,
            swept_area: 700.0,
            power_coeff: 0.35,
            rated_kw: 60.0,
            cut_in: 3.0,
            cut_out: 25.0,
        }
    }
}

impl WindParams {
    pub fn validate(&self) -> Result<()> {
        require(
            self.air_density > 0.0
                && self.swept_area > 0.0
                && self.power_coeff > 0.0
                && self.rated_kw > 0.0
                && self.cut_in > 0.0
                && self.cut_out > 0.0,
            || "wind parameters must all be positive".into(),
        )?;
        require(self.cut_in < self.cut_out, || {
            "wind.cut_in must be below wind.cut_out".into()
        })?;
        require(self.power_coeff <= BETZ_LIMIT, || {
            format!("wind.power_coeff exceeds the Betz limit {BETZ_LIMIT:.4}")
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DieselParams {
    /// Nameplate rating (kW); sets the fuel intercept term.
    pub rated_kw: f64,
    /// Fuel curve slope (L/kWh).
    pub slope: f64,
    /// Fuel curve intercept (L/h per kW rated).
    pub intercept: f64,
    /// Fuel price (currency/L).
    pub fuel_price: f64,
    /// Dispatch ceiling (kW).
    pub max_kw: f64,
}

impl Default for DieselParams {
    fn default() -> Self {
        Self {
            rated_kw: 80.0,
            slope: 0.246,
            intercept: 0.08415,
            fuel_price: 1.60,
            max_kw: 80.0,
        }
    }
}

impl DieselParams {
    pub fn validate(&self) -> Result<()> {
        require(self.rated_kw > 0.0, || "diesel.rated_kw must be > 0".into())?;
        require(self.slope > 0.0, || "diesel.slope must be > 0".into())?;
        require(self.intercept >= 0.0, || "diesel.intercept must be >= 0".into())?;
        require(self.fuel_price >= 0.0, || {
            "diesel.fuel_price must be >= 0".into()
        })?;
        require(self.max_kw >= 0.0 && self.max_kw <= self.rated_kw, || {
            "diesel.max_kw must lie in [0, rated_kw]".into()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryParams {
    /// Total capacity (kWh).
    pub capacity_kwh: f64,
    /// Usable depth of discharge.
    pub dod: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Symmetric charge/discharge power limit (kW).
    pub p_max_kw: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    /// Degradation cost per kWh of terminal throughput (currency/kWh).
    pub deg_cost_per_kwh: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity_kwh: 200.0,
            dod: 0.8,
            soc_min: 0.1,
            soc_max: 0.9,
            p_max_kw: 50.0,
            eta_ch: 0.95,
            eta_dis: 0.95,
            deg_cost_per_kwh: 0.15,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        require(self.capacity_kwh > 0.0, || {
            "battery.capacity_kwh must be > 0".into()
        })?;
        require(self.p_max_kw > 0.0, || "battery.p_max_kw must be > 0".into())?;
        require(
            0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0,
            || "battery SOC bounds must satisfy 0 <= soc_min < soc_max <= 1".into(),
        )?;
        require(self.dod > 0.0 && self.dod <= 1.0, || {
            "battery.dod must lie in (0, 1]".into()
        })?;
        // usable window may not exceed the depth of discharge
        require(self.soc_max - self.soc_min <= self.dod + 1e-12, || {
            "battery SOC window exceeds the depth of discharge".into()
        })?;
        require(
            self.eta_ch > 0.0 && self.eta_ch <= 1.0 && self.eta_dis > 0.0 && self.eta_dis <= 1.0,
            || "battery efficiencies must lie in (0, 1]".into(),
        )?;
        require(self.deg_cost_per_kwh >= 0.0, || {
            "battery.deg_cost_per_kwh must be >= 0".into()
        })
    }

    /// Midpoint of the SOC window.
    pub fn soc_mid(&self) -> f64 {
        0.5 * (self.soc_min + self.soc_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConverterParams {
    pub efficiency: f64,
    pub rated_kw: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self {
            efficiency: 0.95,
            rated_kw: 100.0,
        }
    }
}

impl ConverterParams {
    pub fn validate(&self) -> Result<()> {
        require(self.efficiency > 0.0 && self.efficiency <= 1.0, || {
            "converter.efficiency must lie in (0, 1]".into()
        })?;
        require(self.rated_kw > 0.0, || "converter.rated_kw must be > 0".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    pub import_max_kw: f64,
    pub export_max_kw: f64,
    /// Per-step probability of an outage.
    pub outage_prob: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            import_max_kw: 300.0,
            export_max_kw: 300.0,
            outage_prob: 0.01,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        require(self.import_max_kw >= 0.0 && self.export_max_kw >= 0.0, || {
            "grid limits must be >= 0".into()
        })?;
        require((0.0..=1.0).contains(&self.outage_prob), || {
            "grid.outage_prob must lie in [0, 1]".into()
        })
    }
}

/// Parameter bundle for every device of the microgrid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceFleet {
    #[serde(default)]
    pub pv: PvParams,
    #[serde(default)]
    pub wind: WindParams,
    #[serde(default)]
    pub diesel: DieselParams,
    #[serde(default)]
    pub battery: BatteryParams,
    #[serde(default)]
    pub converter: ConverterParams,
    #[serde(default)]
    pub grid: GridParams,
}

impl DeviceFleet {
    pub fn validate(&self) -> Result<()> {
        self.pv.validate()?;
        self.wind.validate()?;
        self.diesel.validate()?;
        self.battery.validate()?;
        self.converter.validate()?;
        self.grid.validate()?;
        // the battery inverter must carry the battery's rated power
        require(self.battery.p_max_kw <= self.converter.rated_kw, || {
            "battery.p_max_kw exceeds converter.rated_kw".into()
        })
    }
}

/// PV output (kW) for an incident irradiance (kW/m²). Temperature effects are ignored.
pub fn pv_power(params: &PvParams, irradiance: f64) -> Result<f64> {
    if !(irradiance >= 0.0) {
        return Err(MgError::InputDomain(format!(
            "irradiance must be >= 0, got {irradiance}"
        )));
    }
    let normalized = irradiance / params.stc_irradiance;
    Ok((params.rated_kw * normalized * params.derating).max(0.0))
}

/// Wind turbine output (kW): cubic law between cut-in and cut-out, capped at rating.
pub fn wind_power(params: &WindParams, wind_speed: f64) -> Result<f64> {
    if !(wind_speed >= 0.0) {
        return Err(MgError::InputDomain(format!(
            "wind speed must be >= 0, got {wind_speed}"
        )));
    }
    if wind_speed < params.cut_in || wind_speed >= params.cut_out {
        return Ok(0.0);
    }
    let watts =
        0.5 * params.air_density * params.swept_area * params.power_coeff * wind_speed.powi(3);
    Ok((watts / 1000.0).min(params.rated_kw))
}

/// Fuel burnt (L) and its cost over a step of `dt_h` hours at `output_kw`.
///
/// A generator at zero output is off and burns nothing; otherwise the hourly
/// rate is `slope * output + intercept * rated`.
pub fn diesel_fuel_and_cost(params: &DieselParams, output_kw: f64, dt_h: f64) -> Result<(f64, f64)> {
    if !(output_kw >= 0.0) {
        return Err(MgError::InputDomain(format!(
            "diesel output must be >= 0, got {output_kw}"
        )));
    }
    if output_kw > params.max_kw {
        return Err(MgError::Capacity(format!(
            "diesel output {output_kw} kW exceeds max {} kW",
            params.max_kw
        )));
    }
    if output_kw == 0.0 {
        return Ok((0.0, 0.0));
    }
    let rate = params.slope * output_kw + params.intercept * params.rated_kw;
    let fuel = rate * dt_h;
    Ok((fuel, fuel * params.fuel_price))
}

/// Usable stored energy (kWh) of the battery.
pub fn stored_energy(params: &BatteryParams) -> f64 {
    params.dod * params.capacity_kwh
}

/// Converter output (kW) for a given input, capped at the converter rating.
pub fn converter_limit(params: &ConverterParams, p_in_kw: f64) -> Result<f64> {
    if !(p_in_kw >= 0.0) {
        return Err(MgError::InputDomain(format!(
            "converter input must be >= 0, got {p_in_kw}"
        )));
    }
    Ok((params.efficiency * p_in_kw).min(params.rated_kw))
}

/// Outcome of applying a power request to the battery for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryTransition {
    pub soc_before: f64,
    pub soc_after: f64,
    pub p_ch_kw: f64,
    pub p_dis_kw: f64,
    pub throughput_kwh: f64,
    pub deg_cost: f64,
}

impl BatteryTransition {
    /// Signed terminal power, positive when discharging.
    pub fn p_bat_kw(&self) -> f64 {
        self.p_dis_kw - self.p_ch_kw
    }
}

const SOC_TOL: f64 = 1e-12;

/// Apply a signed power request (positive = discharge) for `dt_h` hours.
///
/// The request is clipped to the power rating and then to whatever keeps the
/// SOC inside its window under
/// `soc' = soc + (eta_ch * p_ch - p_dis / eta_dis) * dt / capacity`.
pub fn battery_apply(
    params: &BatteryParams,
    soc: f64,
    p_request_kw: f64,
    dt_h: f64,
) -> Result<BatteryTransition> {
    if !(soc >= params.soc_min - SOC_TOL && soc <= params.soc_max + SOC_TOL) {
        return Err(MgError::StateCorruption(format!(
            "soc {soc} outside [{}, {}]",
            params.soc_min, params.soc_max
        )));
    }
    if !p_request_kw.is_finite() {
        return Err(MgError::InputDomain(format!(
            "battery request must be finite, got {p_request_kw}"
        )));
    }
    if !(dt_h > 0.0) {
        return Err(MgError::InputDomain(format!("dt_h must be > 0, got {dt_h}")));
    }
    let soc = soc.clamp(params.soc_min, params.soc_max);
    let request = p_request_kw.clamp(-params.p_max_kw, params.p_max_kw);
    let cap = params.capacity_kwh;

    let (p_ch, p_dis, soc_after) = if request > 0.0 {
        let headroom = (soc - params.soc_min) * cap * params.eta_dis / dt_h;
        if request >= headroom {
            (0.0, headroom, params.soc_min)
        } else {
            let after = soc - request / params.eta_dis * dt_h / cap;
            (0.0, request, after.max(params.soc_min))
        }
    } else if request < 0.0 {
        let wanted = -request;
        let headroom = (params.soc_max - soc) * cap / (params.eta_ch * dt_h);
        if wanted >= headroom {
            (headroom, 0.0, params.soc_max)
        } else {
            let after = soc + params.eta_ch * wanted * dt_h / cap;
            (wanted, 0.0, after.min(params.soc_max))
        }
    } else {
        (0.0, 0.0, soc)
    };

    let throughput_kwh = (p_ch + p_dis) * dt_h;
    Ok(BatteryTransition {
        soc_before: soc,
        soc_after,
        p_ch_kw: p_ch,
        p_dis_kw: p_dis,
        throughput_kwh,
        deg_cost: throughput_kwh * params.deg_cost_per_kwh,
    })
}
