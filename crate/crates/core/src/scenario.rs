//! Hourly time-series scenarios: CSV ingestion/emission and a seeded
//! synthetic generator for year-long solar, wind, load and tariff profiles.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Weibull};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MgError, Result};

/// CSV header, in column order.
pub const CSV_HEADER: [&str; 6] = [
    "hour",
    "load_kw",
    "irradiance_kwm2",
    "wind_ms",
    "price_buy",
    "price_sell",
];

/// Hour-to-hour smoothing coefficient of the synthetic wind series.
pub const WIND_AR_COEFF: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Ingested,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub origin: Origin,
    pub seed: Option<u64>,
}

/// Aligned time series driving one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Step length in hours.
    pub dt_h: f64,
    pub load_kw: Vec<f64>,
    /// Incident irradiance (kW/m²).
    pub irradiance: Vec<f64>,
    /// Hub-height wind speed (m/s).
    pub wind_speed: Vec<f64>,
    /// Import tariff (currency/kWh).
    pub price_buy: Vec<f64>,
    /// Export tariff (currency/kWh).
    pub price_sell: Vec<f64>,
    pub meta: ScenarioMeta,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.load_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load_kw.is_empty()
    }

    fn columns(&self) -> [(&'static str, &[f64]); 5] {
        [
            (CSV_HEADER[1], &self.load_kw),
            (CSV_HEADER[2], &self.irradiance),
            (CSV_HEADER[3], &self.wind_speed),
            (CSV_HEADER[4], &self.price_buy),
            (CSV_HEADER[5], &self.price_sell),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_h > 0.0 && self.dt_h.is_finite()) {
            return Err(MgError::InvalidConfig(format!(
                "dt_h must be positive, got {}",
                self.dt_h
            )));
        }
        let n = self.len();
        if n == 0 {
            return Err(MgError::Schema("scenario must contain at least one step".into()));
        }
        for (name, series) in self.columns() {
            if series.len() != n {
                return Err(MgError::Schema(format!(
                    "column `{name}` has {} values, expected {n}",
                    series.len()
                )));
            }
            if let Some((i, v)) = series
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
            {
                return Err(MgError::Validation {
                    row: i + 1,
                    column: name.to_string(),
                    message: format!("value {v} must be finite and non-negative"),
                });
            }
        }
        Ok(())
    }

    /// Hour of day (0..24) at step `t`.
    pub fn hour_of_day(&self, t: usize) -> f64 {
        (t as f64 * self.dt_h).rem_euclid(24.0)
    }

    /// SHA-256 over the step length and every series value, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dt_h.to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for (_, series) in self.columns() {
            for v in series {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    /// Contiguous sub-scenario `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Scenario> {
        if len == 0 || start + len > self.len() {
            return Err(MgError::InvalidConfig(format!(
                "window [{start}, {}) outside scenario of length {}",
                start + len,
                self.len()
            )));
        }
        let r = start..start + len;
        Ok(Scenario {
            dt_h: self.dt_h,
            load_kw: self.load_kw[r.clone()].to_vec(),
            irradiance: self.irradiance[r.clone()].to_vec(),
            wind_speed: self.wind_speed[r.clone()].to_vec(),
            price_buy: self.price_buy[r.clone()].to_vec(),
            price_sell: self.price_sell[r].to_vec(),
            meta: self.meta.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for i in 0..self.len() {
            w.write_record([
                fmt_f64(i as f64 * self.dt_h),
                fmt_f64(self.load_kw[i]),
                fmt_f64(self.irradiance[i]),
                fmt_f64(self.wind_speed[i]),
                fmt_f64(self.price_buy[i]),
                fmt_f64(self.price_sell[i]),
            ])?;
        }
        w.flush().map_err(|e| MgError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| MgError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R, name: &str) -> Result<Scenario> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(schema_error)?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(MgError::Schema(format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }

        let mut cols: [Vec<f64>; 6] = Default::default();
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 1;
            let record = record.map_err(schema_error)?;
            for (c, cell) in record.iter().enumerate() {
                let value: f64 = cell.parse().map_err(|_| MgError::Validation {
                    row,
                    column: CSV_HEADER[c].to_string(),
                    message: format!("`{cell}` is not a number"),
                })?;
                if !value.is_finite() || value < 0.0 {
                    return Err(MgError::Validation {
                        row,
                        column: CSV_HEADER[c].to_string(),
                        message: format!("value {value} must be finite and non-negative"),
                    });
                }
                cols[c].push(value);
            }
        }
        let [hours, load_kw, irradiance, wind_speed, price_buy, price_sell] = cols;
        if hours.is_empty() {
            return Err(MgError::Schema("file contains no data rows".into()));
        }
        let dt_h = if hours.len() > 1 { hours[1] - hours[0] } else { 1.0 };
        if !(dt_h > 0.0) {
            return Err(MgError::Schema("hour column must be strictly increasing".into()));
        }
        for (i, h) in hours.iter().enumerate() {
            let expected = hours[0] + i as f64 * dt_h;
            if (h - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(MgError::Validation {
                    row: i + 1,
                    column: CSV_HEADER[0].into(),
                    message: format!("hour {h} breaks the uniform step of {dt_h} h"),
                });
            }
        }
        let s = Scenario {
            dt_h,
            load_kw,
            irradiance,
            wind_speed,
            price_buy,
            price_sell,
            meta: ScenarioMeta {
                name: name.to_string(),
                origin: Origin::Ingested,
                seed: None,
            },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn stats(&self) -> ScenarioStats {
        scenario_stats(self)
    }
}

fn schema_error(e: csv::Error) -> MgError {
    MgError::Schema(e.to_string())
}

/// Shortest representation that parses back to the identical `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Read and validate a scenario CSV file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| MgError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    Scenario::read_csv(std::io::BufReader::new(file), &name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tariff {
    Flat {
        buy: f64,
        sell: f64,
    },
    /// Two-band time of use; the peak band covers hours `[peak_start, peak_end)`.
    TimeOfUse {
        offpeak_buy: f64,
        peak_buy: f64,
        peak_start: u32,
        peak_end: u32,
        sell: f64,
    },
}

impl Default for Tariff {
    fn default() -> Self {
        Tariff::TimeOfUse {
            offpeak_buy: 0.22,
            peak_buy: 0.38,
            peak_start: 15,
            peak_end: 21,
            sell: 0.08,
        }
    }
}

impl Tariff {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Tariff::Flat { buy, sell } => buy >= 0.0 && sell >= 0.0,
            Tariff::TimeOfUse {
                offpeak_buy,
                peak_buy,
                peak_start,
                peak_end,
                sell,
            } => {
                offpeak_buy >= 0.0
                    && peak_buy >= 0.0
                    && sell >= 0.0
                    && peak_start < peak_end
                    && peak_end <= 24
            }
        };
        if ok {
            Ok(())
        } else {
            Err(MgError::InvalidConfig(format!("invalid tariff {self:?}")))
        }
    }

    /// (buy, sell) prices at hour-of-day `hour`.
    pub fn prices(&self, hour: f64) -> (f64, f64) {
        match *self {
            Tariff::Flat { buy, sell } => (buy, sell),
            Tariff::TimeOfUse {
                offpeak_buy,
                peak_buy,
                peak_start,
                peak_end,
                sell,
            } => {
                let peak = hour >= peak_start as f64 && hour < peak_end as f64;
                (if peak { peak_buy } else { offpeak_buy }, sell)
            }
        }
    }
}

/// Parameters of the synthetic year generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub days: usize,
    pub peak_load_kw: f64,
    /// Mean and spread of the daily clearness index.
    pub solar_clearness_mean: f64,
    pub solar_clearness_std: f64,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    /// Multiplicative log-normal load noise (log-space standard deviation).
    pub load_noise: f64,
    pub tariff: Tariff,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 365,
            peak_load_kw: 100.0,
            solar_clearness_mean: 0.65,
            solar_clearness_std: 0.2,
            weibull_shape: 2.0,
            weibull_scale: 7.0,
            load_noise: 0.1,
            tariff: Tariff::default(),
            seed: 2024,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MgError::InvalidConfig(m.to_string()));
        if self.days < 1 {
            return bad("synth.days must be >= 1");
        }
        if !(self.peak_load_kw >= 0.0) {
            return bad("synth.peak_load_kw must be >= 0");
        }
        if !(self.weibull_shape > 0.0 && self.weibull_scale > 0.0) {
            return bad("Weibull shape and scale must be > 0");
        }
        if !((0.0..=1.0).contains(&self.solar_clearness_mean) && self.solar_clearness_std >= 0.0) {
            return bad("solar clearness mean must lie in [0, 1] and std be >= 0");
        }
        if !(self.load_noise >= 0.0) {
            return bad("synth.load_noise must be >= 0");
        }
        self.tariff.validate()
    }
}

fn raw_load_shape(hour: f64) -> f64 {
    let bump = |centre: f64, width: f64| (-0.5 * ((hour - centre) / width).powi(2)).exp();
    0.35 + 0.40 * bump(7.5, 1.5) + 0.65 * bump(19.0, 2.0)
}

/// Normalized double-peak residential demand shape; maximum 1.
pub fn load_shape(hour: f64) -> f64 {
    static MAX: OnceLock<f64> = OnceLock::new();
    let max = *MAX.get_or_init(|| {
        (0..24 * 3600)
            .map(|s| raw_load_shape(s as f64 / 3600.0))
            .fold(0.0, f64::max)
    });
    raw_load_shape(hour) / max
}

/// Generate a deterministic synthetic scenario of `cfg.days` hourly steps.
///
/// Irradiance is a half-sine clear-sky envelope over a seasonally varying day
/// length (southern-hemisphere seasons, day 0 = 1 January) scaled by a noisy
/// clearness index. Wind is Weibull noise passed through an AR(1) filter. Load
/// is a morning/evening double peak with winter uplift and log-normal noise.
pub fn synth_scenario(cfg: &SynthConfig) -> Result<Scenario> {
    cfg.validate()?;
    let steps = cfg.days * 24;
    let mut solar_rng = stream(cfg.seed, 1);
    let mut wind_rng = stream(cfg.seed, 2);
    let mut load_rng = stream(cfg.seed, 3);

    let clearness = Normal::new(cfg.solar_clearness_mean, cfg.solar_clearness_std)
        .map_err(|e| MgError::InvalidConfig(e.to_string()))?;
    let weibull = Weibull::new(cfg.weibull_scale, cfg.weibull_shape)
        .map_err(|e| MgError::InvalidConfig(e.to_string()))?;
    let noise = LogNormal::new(0.0, cfg.load_noise)
        .map_err(|e| MgError::InvalidConfig(e.to_string()))?;

    let mut s = Scenario {
        dt_h: 1.0,
        load_kw: Vec::with_capacity(steps),
        irradiance: Vec::with_capacity(steps),
        wind_speed: Vec::with_capacity(steps),
        price_buy: Vec::with_capacity(steps),
        price_sell: Vec::with_capacity(steps),
        meta: ScenarioMeta {
            name: format!("synthetic-{}d-seed{}", cfg.days, cfg.seed),
            origin: Origin::Synthetic,
            seed: Some(cfg.seed),
        },
    };

    let mut wind_prev: Option<f64> = None;
    for day in 0..cfg.days {
        let season = (2.0 * std::f64::consts::PI * day as f64 / 365.0).cos(); // +1 midsummer
        let day_length = 12.0 + 2.0 * season;
        let sunrise = 12.0 - 0.5 * day_length;
        let peak_irr = 0.80 + 0.20 * season;
        let daily_clear: f64 = clearness.sample(&mut solar_rng).clamp(0.05, 1.0);
        let winter_uplift = 1.0 - 0.10 * season;

        for h in 0..24 {
            let hour = h as f64;
            let mid = hour + 0.5 - sunrise;
            let clear_sky = if mid > 0.0 && mid < day_length {
                peak_irr * (std::f64::consts::PI * mid / day_length).sin()
            } else {
                0.0
            };
            let hourly: f64 = 1.0 + 0.1 * (solar_rng.random::<f64>() - 0.5);
            let irr = (clear_sky * (daily_clear * hourly).clamp(0.0, 1.0)).clamp(0.0, 1.0);
            s.irradiance.push(irr);

            let draw: f64 = weibull.sample(&mut wind_rng);
            let v = match wind_prev {
                None => draw,
                Some(prev) => WIND_AR_COEFF * prev + (1.0 - WIND_AR_COEFF) * draw,
            };
            wind_prev = Some(v);
            s.wind_speed.push(v);

            let n: f64 = noise.sample(&mut load_rng);
            s.load_kw
                .push(cfg.peak_load_kw * load_shape(hour) * winter_uplift / 1.1 * n);

            let (buy, sell) = cfg.tariff.prices(hour);
            s.price_buy.push(buy);
            s.price_sell.push(sell);
        }
    }
    s.validate()?;
    Ok(s)
}

/// Independent ChaCha stream `id` under a root seed.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl SeriesStats {
    fn of(v: &[f64]) -> Self {
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        Self { min, mean, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub steps: usize,
    pub dt_h: f64,
    pub load_kw: SeriesStats,
    pub irradiance_kwm2: SeriesStats,
    pub wind_ms: SeriesStats,
    pub price_buy: SeriesStats,
    pub price_sell: SeriesStats,
    /// Total demand (kWh).
    pub load_energy_kwh: f64,
    /// Total insolation (kWh/m²).
    pub solar_energy_kwhm2: f64,
}

pub fn scenario_stats(s: &Scenario) -> ScenarioStats {
    ScenarioStats {
        steps: s.len(),
        dt_h: s.dt_h,
        load_kw: SeriesStats::of(&s.load_kw),
        irradiance_kwm2: SeriesStats::of(&s.irradiance),
        wind_ms: SeriesStats::of(&s.wind_speed),
        price_buy: SeriesStats::of(&s.price_buy),
        price_sell: SeriesStats::of(&s.price_sell),
        load_energy_kwh: s.load_kw.iter().sum::<f64>() * s.dt_h,
        solar_energy_kwhm2: s.irradiance.iter().sum::<f64>() * s.dt_h,
    }
}
