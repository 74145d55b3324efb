//! The five comparison KPIs, their normalization and side-by-side reports.
//!
//! Definitions (all energies integrate `power * dt_h` over the trajectory):
//!
//! | KPI | formula | better |
//! |-----|---------|--------|
//! | reliability | served / demanded × 100 | higher |
//! | battery cycles | (charge + discharge throughput) / (2 · capacity) | lower |
//! | self-sufficiency | (1 − import / load) × 100, floored at 0 | higher |
//! | renewable utilization | (available − curtailed) / available × 100 | higher |
//! | operational cost | Σ grid + degradation + diesel cost | lower |
//!
//! Exported renewable energy counts as utilized; only curtailment is waste.
//! The unmet-load reward penalty is not part of the operational cost.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::devices::DeviceFleet;
use crate::env::Trajectory;
use crate::error::{MgError, Result};

/// Version tag of the KPI definitions above.
pub const KPI_DEFINITIONS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kpi {
    Reliability,
    BatteryCycles,
    SelfSufficiency,
    RenewableUtilization,
    OperationalCost,
}

impl Kpi {
    pub const ALL: [Kpi; 5] = [
        Kpi::Reliability,
        Kpi::RenewableUtilization,
        Kpi::BatteryCycles,
        Kpi::SelfSufficiency,
        Kpi::OperationalCost,
    ];

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Kpi::BatteryCycles | Kpi::OperationalCost)
    }

    pub fn label(self) -> &'static str {
        match self {
            Kpi::Reliability => "System Reliability (%)",
            Kpi::BatteryCycles => "Battery Cycles",
            Kpi::SelfSufficiency => "Self-Sufficiency Ratio (%)",
            Kpi::RenewableUtilization => "Renewable Utilization (%)",
            Kpi::OperationalCost => "Operational Cost",
        }
    }

    fn short(self) -> &'static str {
        match self {
            Kpi::Reliability => "Reliability",
            Kpi::BatteryCycles => "Cycles",
            Kpi::SelfSufficiency => "Self-suff.",
            Kpi::RenewableUtilization => "RE util.",
            Kpi::OperationalCost => "Cost",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTotals {
    pub load_kwh: f64,
    pub served_kwh: f64,
    pub unmet_kwh: f64,
    pub import_kwh: f64,
    pub export_kwh: f64,
    pub renewable_available_kwh: f64,
    pub renewable_used_kwh: f64,
    pub dg_kwh: f64,
    pub curtailed_kwh: f64,
    pub charge_kwh: f64,
    pub discharge_kwh: f64,
    pub fuel_l: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub grid: f64,
    pub degradation: f64,
    pub diesel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub scenario_hash: String,
    pub steps: usize,
    pub reliability_pct: f64,
    pub battery_cycles: f64,
    pub self_sufficiency_pct: f64,
    pub renewable_utilization_pct: f64,
    pub operational_cost: f64,
    pub energy: EnergyTotals,
    pub cost: CostBreakdown,
}

impl KpiReport {
    pub fn value(&self, kpi: Kpi) -> f64 {
        match kpi {
            Kpi::Reliability => self.reliability_pct,
            Kpi::BatteryCycles => self.battery_cycles,
            Kpi::SelfSufficiency => self.self_sufficiency_pct,
            Kpi::RenewableUtilization => self.renewable_utilization_pct,
            Kpi::OperationalCost => self.operational_cost,
        }
    }
}

fn pct(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den * 100.0).clamp(0.0, 100.0)
    } else {
        100.0
    }
}

pub fn compute_kpis(trajectory: &Trajectory, fleet: &DeviceFleet) -> Result<KpiReport> {
    if trajectory.is_empty() {
        return Err(MgError::EmptyTrajectory);
    }
    let mut e = EnergyTotals::default();
    let mut c = CostBreakdown::default();
    for r in &trajectory.records {
        let dt = r.dt_h;
        e.load_kwh += r.load_kw * dt;
        e.unmet_kwh += r.unmet_kw * dt;
        e.import_kwh += r.p_grid_import * dt;
        e.export_kwh += r.p_grid_export * dt;
        e.renewable_available_kwh += (r.pv_avail_kw + r.w_avail_kw) * dt;
        e.renewable_used_kwh += (r.p_pv_used + r.p_w_used) * dt;
        e.dg_kwh += r.p_dg * dt;
        e.curtailed_kwh += r.curtailed_kw * dt;
        e.charge_kwh += r.p_ch * dt;
        e.discharge_kwh += r.p_dis * dt;
        e.fuel_l += r.fuel_l;
        c.grid += r.c_grid;
        c.degradation += r.c_deg;
        c.diesel += r.c_dg;
    }
    e.served_kwh = (e.load_kwh - e.unmet_kwh).max(0.0);

    let reliability_pct = if e.unmet_kwh == 0.0 {
        100.0
    } else {
        pct(e.served_kwh, e.load_kwh)
    };
    Ok(KpiReport {
        scenario_hash: trajectory.scenario_hash.clone(),
        steps: trajectory.len(),
        reliability_pct,
        battery_cycles: (e.charge_kwh + e.discharge_kwh) / (2.0 * fleet.battery.capacity_kwh),
        self_sufficiency_pct: if e.load_kwh > 0.0 {
            ((1.0 - e.import_kwh / e.load_kwh) * 100.0).clamp(0.0, 100.0)
        } else {
            100.0
        },
        renewable_utilization_pct: pct(e.renewable_used_kwh, e.renewable_available_kwh),
        operational_cost: c.grid + c.degradation + c.diesel,
        energy: e,
        cost: c,
    })
}

/// Score of one KPI value relative to all strategies' values; the best scores 1.
///
/// Higher-better KPIs use `value / max`, lower-better ones `min / value`.
pub fn normalized_score(kpi: Kpi, value: f64, all: &[f64]) -> Result<f64> {
    let undefined = || MgError::UndefinedScore(format!("{kpi:?}"));
    if kpi.higher_is_better() {
        let max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) || value < 0.0 {
            return Err(undefined());
        }
        Ok(value / max)
    } else {
        let min = all.iter().copied().fold(f64::INFINITY, f64::min);
        if value == min {
            return Ok(1.0);
        }
        if !(min > 0.0) {
            return Err(undefined());
        }
        Ok(min / value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScores {
    pub reliability: f64,
    pub battery_cycles: f64,
    pub self_sufficiency: f64,
    pub renewable_utilization: f64,
    pub operational_cost: f64,
}

impl NormalizedScores {
    pub fn get(&self, kpi: Kpi) -> f64 {
        match kpi {
            Kpi::Reliability => self.reliability,
            Kpi::BatteryCycles => self.battery_cycles,
            Kpi::SelfSufficiency => self.self_sufficiency,
            Kpi::RenewableUtilization => self.renewable_utilization,
            Kpi::OperationalCost => self.operational_cost,
        }
    }
}

/// Normalized scores for each report, in input order.
pub fn normalize_kpis(reports: &[KpiReport]) -> Result<Vec<NormalizedScores>> {
    if reports.len() < 2 {
        return Err(MgError::InvalidConfig(
            "normalization needs at least two reports".into(),
        ));
    }
    let score = |kpi: Kpi, r: &KpiReport| -> Result<f64> {
        let all: Vec<f64> = reports.iter().map(|x| x.value(kpi)).collect();
        normalized_score(kpi, r.value(kpi), &all)
    };
    reports
        .iter()
        .map(|r| {
            Ok(NormalizedScores {
                reliability: score(Kpi::Reliability, r)?,
                battery_cycles: score(Kpi::BatteryCycles, r)?,
                self_sufficiency: score(Kpi::SelfSufficiency, r)?,
                renewable_utilization: score(Kpi::RenewableUtilization, r)?,
                operational_cost: score(Kpi::OperationalCost, r)?,
            })
        })
        .collect()
}

/// Relative change from `old` to `new` in percent, signed so that positive
/// always means better: `(new - old) / |old|` for higher-better KPIs,
/// `(old - new) / |old|` for lower-better ones. `None` when `old` is zero.
pub fn improvement_pct(kpi: Kpi, old: f64, new: f64) -> Option<f64> {
    if old == 0.0 {
        return None;
    }
    let delta = if kpi.higher_is_better() { new - old } else { old - new };
    Some(delta / old.abs() * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRow {
    pub kpi: Kpi,
    pub higher_is_better: bool,
    pub baseline: f64,
    pub candidate: f64,
    pub improvement_pct: Option<f64>,
    pub baseline_score: Option<f64>,
    pub candidate_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub definitions_version: u32,
    pub scenario_hash: String,
    pub baseline_label: String,
    pub candidate_label: String,
    pub baseline: KpiReport,
    pub candidate: KpiReport,
    pub rows: Vec<KpiRow>,
}

/// Compare a candidate strategy against the rule-based baseline on the same episode.
pub fn comparison_report(rbc: &KpiReport, ppo: &KpiReport) -> Result<ComparisonReport> {
    compare_labeled("RBC", rbc, "DRL-PPO", ppo)
}

pub fn compare_labeled(
    baseline_label: &str,
    baseline: &KpiReport,
    candidate_label: &str,
    candidate: &KpiReport,
) -> Result<ComparisonReport> {
    if baseline.scenario_hash != candidate.scenario_hash {
        return Err(MgError::ScenarioMismatch {
            left: baseline.scenario_hash.clone(),
            right: candidate.scenario_hash.clone(),
        });
    }
    let rows = Kpi::ALL
        .iter()
        .map(|&kpi| {
            let (b, c) = (baseline.value(kpi), candidate.value(kpi));
            KpiRow {
                kpi,
                higher_is_better: kpi.higher_is_better(),
                baseline: b,
                candidate: c,
                improvement_pct: improvement_pct(kpi, b, c),
                baseline_score: normalized_score(kpi, b, &[b, c]).ok(),
                candidate_score: normalized_score(kpi, c, &[b, c]).ok(),
            }
        })
        .collect();
    Ok(ComparisonReport {
        definitions_version: KPI_DEFINITIONS_VERSION,
        scenario_hash: baseline.scenario_hash.clone(),
        baseline_label: baseline_label.to_string(),
        candidate_label: candidate_label.to_string(),
        baseline: baseline.clone(),
        candidate: candidate.clone(),
        rows,
    })
}

impl ComparisonReport {
    /// Plain-text table with one row per KPI and a key-improvement column.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>14} {:>14}  Key Improvement",
            "Performance Category", self.baseline_label, self.candidate_label
        );
        let _ = writeln!(out, "{}", "-".repeat(80));
        for row in &self.rows {
            let imp = match row.improvement_pct {
                Some(p) => {
                    let word = match (row.higher_is_better, p >= 0.0) {
                        (true, true) => "improvement",
                        (true, false) => "decline",
                        (false, true) => "reduction",
                        (false, false) => "increase",
                    };
                    format!("{:.1}% {word}", p.abs())
                }
                None => "n/a".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<28} {:>14.2} {:>14.2}  {}",
                row.kpi.label(),
                row.baseline,
                row.candidate,
                imp
            );
        }
        out
    }

    /// Grouped bar chart of the normalized scores as a standalone SVG document.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 360.0;
        const LEFT: f64 = 50.0;
        const TOP: f64 = 40.0;
        const PLOT_H: f64 = 240.0;
        let group_w = (W - LEFT - 20.0) / self.rows.len() as f64;
        let bar_w = group_w * 0.32;
        let colors = ["#8c8c8c", "#1f77b4"];

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Normalized performance metrics</text>"#,
            W / 2.0
        );
        for tick in 0..=4 {
            let v = tick as f64 * 0.25;
            let y = TOP + PLOT_H * (1.0 - v);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
                W - 20.0,
                LEFT - 6.0,
                y + 4.0
            );
        }
        for (i, row) in self.rows.iter().enumerate() {
            let x0 = LEFT + i as f64 * group_w + group_w * 0.15;
            for (j, score) in [row.baseline_score, row.candidate_score].iter().enumerate() {
                let x = x0 + j as f64 * (bar_w + 4.0);
                match score {
                    Some(s) => {
                        let h = PLOT_H * s.clamp(0.0, 1.0);
                        let _ = writeln!(
                            svg,
                            r#"<rect x="{x:.1}" y="{:.1}" width="{bar_w:.1}" height="{h:.1}" fill="{}"/><text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{s:.2}</text>"#,
                            TOP + PLOT_H - h,
                            colors[j],
                            x + bar_w / 2.0,
                            TOP + PLOT_H - h - 3.0
                        );
                    }
                    None => {
                        let _ = writeln!(
                            svg,
                            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">n/a</text>"#,
                            x + bar_w / 2.0,
                            TOP + PLOT_H - 3.0
                        );
                    }
                }
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x0 + bar_w + 2.0,
                TOP + PLOT_H + 18.0,
                row.kpi.short()
            );
        }
        for (j, label) in [&self.baseline_label, &self.candidate_label].iter().enumerate() {
            let x = LEFT + 10.0 + j as f64 * 120.0;
            let y = H - 24.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
                y - 10.0,
                colors[j],
                x + 18.0,
                xml_escape(label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::StepRecord;

    fn record(load: f64, unmet: f64, import: f64, ch: f64, dis: f64) -> StepRecord {
        StepRecord {
            t: 0,
            hour: 0.0,
            dt_h: 1.0,
            grid_up: true,
            load_kw: load,
            pv_avail_kw: 10.0,
            w_avail_kw: 0.0,
            p_pv_used: 10.0,
            p_w_used: 0.0,
            p_bat: dis - ch,
            p_ch: ch,
            p_dis: dis,
            p_dg: 0.0,
            p_grid_import: import,
            p_grid_export: 0.0,
            curtailed_kw: 0.0,
            unmet_kw: unmet,
            soc_before: 0.5,
            soc_after: 0.5,
            fuel_l: 0.0,
            price_buy: 0.3,
            price_sell: 0.1,
            c_grid: import * 0.3,
            c_deg: 0.0,
            c_dg: 0.0,
            penalty: 0.0,
            reward: 0.0,
        }
    }

    fn fleet(capacity: f64) -> DeviceFleet {
        let mut f = DeviceFleet::default();
        f.battery.capacity_kwh = capacity;
        f
    }

    fn traj(records: Vec<StepRecord>) -> Trajectory {
        Trajectory {
            scenario_hash: "h".into(),
            records,
        }
    }

    #[test]
    fn reliability_anchor() {
        let t = traj(vec![record(10_000.0, 475.0, 0.0, 0.0, 0.0)]);
        let k = compute_kpis(&t, &fleet(100.0)).unwrap();
        assert!((k.reliability_pct - 95.25).abs() < 1e-9);
    }

    #[test]
    fn equivalent_full_cycles() {
        let t = traj(vec![
            record(0.0, 0.0, 0.0, 1700.0, 0.0),
            record(0.0, 0.0, 0.0, 0.0, 1700.0),
        ]);
        let k = compute_kpis(&t, &fleet(100.0)).unwrap();
        assert!((k.battery_cycles - 17.0).abs() < 1e-12);
    }

    #[test]
    fn no_imports_means_full_self_sufficiency() {
        let t = traj(vec![record(5.0, 0.0, 0.0, 0.0, 0.0); 4]);
        let k = compute_kpis(&t, &fleet(100.0)).unwrap();
        assert_eq!(k.self_sufficiency_pct, 100.0);
        assert_eq!(k.reliability_pct, 100.0);
    }

    #[test]
    fn empty_trajectory_rejected() {
        assert!(matches!(
            compute_kpis(&traj(vec![]), &fleet(1.0)),
            Err(MgError::EmptyTrajectory)
        ));
    }

    fn report(rel: f64, cycles: f64, ss: f64, ru: f64, cost: f64) -> KpiReport {
        KpiReport {
            scenario_hash: "h".into(),
            steps: 1,
            reliability_pct: rel,
            battery_cycles: cycles,
            self_sufficiency_pct: ss,
            renewable_utilization_pct: ru,
            operational_cost: cost,
            energy: Default::default(),
            cost: Default::default(),
        }
    }

    #[test]
    fn normalization_rules() {
        let a = report(95.25, 315.38, 49.91, 47.6, 200.0);
        let b = report(99.13, 17.0, 66.7, 51.9, 100.0);
        let s = normalize_kpis(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s[1].reliability, 1.0);
        assert_eq!(s[0].operational_cost, 0.5);
        assert_eq!(s[1].battery_cycles, 1.0);
        let same = normalize_kpis(&[a.clone(), a.clone()]).unwrap();
        for kpi in Kpi::ALL {
            assert_eq!(same[0].get(kpi), 1.0);
            assert_eq!(same[1].get(kpi), 1.0);
        }
        let zero = report(0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            normalize_kpis(&[zero.clone(), zero]),
            Err(MgError::UndefinedScore(_))
        ));
        assert!(normalize_kpis(&[a]).is_err());
    }

    #[test]
    fn improvement_directions() {
        let imp = |k, a, b| improvement_pct(k, a, b).unwrap();
        assert!((imp(Kpi::Reliability, 95.25, 99.13) - 4.1).abs() < 0.1);
        assert!((imp(Kpi::BatteryCycles, 315.38, 17.0) - 94.6).abs() < 0.1);
        assert!((imp(Kpi::SelfSufficiency, 49.91, 66.7) - 33.7).abs() < 0.1);
        assert!((imp(Kpi::RenewableUtilization, 47.6, 51.9) - 9.1).abs() < 0.1);
        assert!((imp(Kpi::OperationalCost, 100.0, 80.0) - 20.0).abs() < 1e-12);
        assert_eq!(improvement_pct(Kpi::OperationalCost, 0.0, 1.0), None);
    }

    #[test]
    fn comparison_guards_hash_and_renders() {
        let a = report(95.25, 315.38, 49.91, 47.6, 200.0);
        let mut b = report(99.13, 17.0, 66.7, 51.9, 160.0);
        let cmp = comparison_report(&a, &b).unwrap();
        assert_eq!(cmp.rows.len(), 5);
        let text = cmp.to_text_table();
        assert!(text.contains("94.6% reduction"), "{text}");
        assert!(text.contains("4.1% improvement"));
        let svg = cmp.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        b.scenario_hash = "other".into();
        assert!(matches!(
            comparison_report(&a, &b),
            Err(MgError::ScenarioMismatch { .. })
        ));
    }
}
