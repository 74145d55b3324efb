//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Criterion 6 trains three full PPO runs on the default year-long scenario
//! and dominates the runtime (a few minutes per seed on one core).

#[path = "../../core/tests/common/golden.rs"]
mod golden;
#[path = "../../core/tests/common/reference.rs"]
mod reference;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use microgrid_core::devices::{
    converter_limit, diesel_fuel_and_cost, pv_power, stored_energy, wind_power, BatteryParams,
    ConverterParams, DieselParams, PvParams, WindParams,
};
use microgrid_core::env::BALANCE_TOL_KW;
use microgrid_core::kpi::{improvement_pct, Kpi};
use microgrid_core::ppo::{clipped_objective, compute_gae, evaluate, train, LossCoefs};
use microgrid_core::scenario::{Origin, ScenarioMeta};
use microgrid_core::{
    compute_kpis, rbc_episode, DeviceFleet, EnvConfig, MgAction, MicrogridEnv, RunConfig,
    Scenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn flat_scenario(rows: &[(f64, f64, f64)]) -> Scenario {
    Scenario {
        dt_h: 1.0,
        load_kw: rows.iter().map(|r| r.0).collect(),
        irradiance: rows.iter().map(|r| r.1).collect(),
        wind_speed: rows.iter().map(|r| r.2).collect(),
        price_buy: vec![0.3; rows.len()],
        price_sell: vec![0.1; rows.len()],
        meta: ScenarioMeta {
            name: "acceptance".into(),
            origin: Origin::Synthetic,
            seed: None,
        },
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64, f64)> {
    (0..n)
        .map(|_| {
            (
                rng.random_range(0.0..250.0),
                rng.random_range(0.0..1.1),
                rng.random_range(0.0..30.0),
            )
        })
        .collect()
}

fn physics_invariants() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut steps = 0usize;
    let mut worst = 0.0f64;
    let mut violations = 0usize;
    let mut outage_steps = 0usize;
    while steps < 1_000_000 {
        let mut fleet = DeviceFleet::default();
        fleet.grid.outage_prob = rng.random_range(0.0..0.3);
        let mut cfg = EnvConfig::new(
            fleet.clone(),
            Arc::new(flat_scenario(&random_rows(&mut rng, 1000))),
            rng.random(),
        );
        cfg.initial_soc = Some(rng.random_range(0.1..=0.9));
        cfg.export_during_outage = rng.random();
        let mut env = MicrogridEnv::new(cfg.clone()).unwrap();
        env.reset();
        while !env.is_done() {
            let action = MgAction::new(rng.random_range(-120.0..120.0), rng.random_range(-20.0..120.0));
            let (_, r) = env.step(&action).unwrap();
            worst = worst.max(r.balance_residual().abs());
            let b = &fleet.battery;
            let bad = !(r.soc_after >= b.soc_min && r.soc_after <= b.soc_max)
                || r.p_grid_import * r.p_grid_export != 0.0
                || (!r.grid_up && r.p_grid_import != 0.0)
                || (!r.grid_up && !cfg.export_during_outage && r.p_grid_export != 0.0);
            violations += usize::from(bad);
            outage_steps += usize::from(!r.grid_up);
            steps += 1;
        }
    }
    let elapsed = started.elapsed();
    Outcome::new(
        worst < BALANCE_TOL_KW && violations == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{steps} steps ({outage_steps} islanded), max residual {worst:.2e} kW, {violations} violations, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn equation_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    for i in 0..1000 {
        let pv = PvParams {
            rated_kw: rng.random_range(1.0..500.0),
            derating: rng.random_range(0.5..1.0),
            stc_irradiance: rng.random_range(0.8..1.2),
        };
        let g = rng.random_range(0.0..1.2);
        if !rel_close(pv_power(&pv, g).unwrap(), pv.rated_kw * (g / pv.stc_irradiance) * pv.derating) {
            failures.push(format!("pv #{i}"));
        }

        let wt = WindParams {
            air_density: rng.random_range(1.0..1.3),
            swept_area: rng.random_range(10.0..2000.0),
            power_coeff: rng.random_range(0.2..0.59),
            rated_kw: rng.random_range(10.0..500.0),
            cut_in: rng.random_range(2.0..4.0),
            cut_out: rng.random_range(20.0..26.0),
        };
        let v = rng.random_range(0.0..30.0);
        let cubic = 0.5 * wt.air_density * wt.swept_area * wt.power_coeff * v * v * v / 1000.0;
        let expected = if v < wt.cut_in || v >= wt.cut_out {
            0.0
        } else {
            cubic.min(wt.rated_kw)
        };
        if !rel_close(wind_power(&wt, v).unwrap(), expected) {
            failures.push(format!("wind #{i}"));
        }

        let rated = rng.random_range(10.0..200.0);
        let dg = DieselParams {
            rated_kw: rated,
            slope: rng.random_range(0.1..0.4),
            intercept: rng.random_range(0.0..0.1),
            fuel_price: rng.random_range(0.5..3.0),
            max_kw: rated,
        };
        let p = rng.random_range(0.0..rated);
        let dt = rng.random_range(0.25..2.0);
        let fuel = (dg.slope * p + dg.intercept * dg.rated_kw) * dt;
        let (got_fuel, got_cost) = diesel_fuel_and_cost(&dg, p, dt).unwrap();
        if !rel_close(got_fuel, fuel) || !rel_close(got_cost, fuel * dg.fuel_price) {
            failures.push(format!("diesel #{i}"));
        }

        let conv = ConverterParams {
            efficiency: rng.random_range(0.8..1.0),
            rated_kw: rng.random_range(10.0..500.0),
        };
        let p_in = rng.random_range(0.0..conv.rated_kw / conv.efficiency);
        if !rel_close(converter_limit(&conv, p_in).unwrap(), conv.efficiency * p_in) {
            failures.push(format!("converter #{i}"));
        }

        let bat = BatteryParams {
            capacity_kwh: rng.random_range(1.0..5000.0),
            dod: rng.random_range(0.1..1.0),
            ..Default::default()
        };
        if !rel_close(stored_energy(&bat), bat.dod * bat.capacity_kwh) {
            failures.push(format!("stored energy #{i}"));
        }
    }
    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            "1000 draws x 5 device models within 1e-12".to_string()
        } else {
            format!("mismatches: {:?}", &failures[..failures.len().min(5)])
        },
    )
}

fn outage_statistics() -> Outcome {
    let n = 100_000;
    let mut fleet = DeviceFleet::default();
    fleet.grid.outage_prob = 0.01;
    let cfg = EnvConfig::new(fleet, Arc::new(flat_scenario(&vec![(10.0, 0.0, 0.0); n])), 2024);
    let mut env = MicrogridEnv::new(cfg).unwrap();
    let mut state = env.reset();
    let mut down = 0usize;
    while !env.is_done() {
        down += usize::from(!state.grid_up);
        state = env.step(&MgAction::default()).unwrap().0;
    }
    let freq = down as f64 / n as f64;
    Outcome::new(
        (0.008..=0.012).contains(&freq),
        format!("{down} outages in {n} steps, frequency {freq:.5}"),
    )
}

fn rbc_golden() -> Outcome {
    let traj = rbc_episode(&golden::golden_config()).unwrap();
    let expected = golden::golden_expected();
    let mut mismatched = Vec::new();
    for (r, e) in traj.records.iter().zip(&expected) {
        let ok = r.grid_up == e.grid_up
            && r.p_bat == e.p_bat
            && r.p_dg == e.p_dg
            && r.p_grid_import == e.import
            && r.p_grid_export == e.export
            && r.unmet_kw == e.unmet
            && r.soc_after == e.soc_after
            && r.fuel_l == e.fuel_l
            && r.reward == e.reward;
        if !ok {
            mismatched.push(r.t);
        }
    }
    let golden_ok = mismatched.is_empty() && traj.len() == expected.len();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut dg_on_grid = 0usize;
    let mut steps = 0usize;
    for _ in 0..300 {
        let mut fleet = DeviceFleet::default();
        fleet.grid.outage_prob = rng.random_range(0.0..0.5);
        let n = rng.random_range(1..200);
        let cfg = EnvConfig::new(fleet, Arc::new(flat_scenario(&random_rows(&mut rng, n))), rng.random());
        for r in rbc_episode(&cfg).unwrap().records {
            steps += 1;
            dg_on_grid += usize::from(r.grid_up && r.p_dg != 0.0);
        }
    }
    Outcome::new(
        golden_ok && dg_on_grid == 0,
        format!(
            "golden trace {} (mismatched steps {mismatched:?}); DG on grid in {dg_on_grid} of {steps} fuzzed steps",
            if golden_ok { "exact" } else { "differs" }
        ),
    )
}

fn ppo_numerics() -> Outcome {
    let started = Instant::now();
    let coefs = LossCoefs {
        clip_eps: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
    };
    let mut worst_grad = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = reference::small_net(&mut rng);
        let batch = reference::random_batch(&net, 16, &mut rng);
        worst_grad = worst_grad.max(reference::gradient_check(&net, &batch, &coefs, 1e-5));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_gae = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..100);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let bootstrap = rng.random_range(-5.0..5.0);
        let gamma = rng.random_range(0.5..1.0);
        let (adv, _) = compute_gae(&rewards, &values, bootstrap, gamma, 1.0).unwrap();
        // λ = 1: advantage is the discounted return minus the baseline
        let mut ret = bootstrap;
        for t in (0..n).rev() {
            ret = rewards[t] + gamma * ret;
            worst_gae = worst_gae.max((adv[t] - (ret - values[t])).abs());
        }
    }

    let hand = [
        (clipped_objective(1.5, 1.0, 0.2), 1.2),
        (clipped_objective(0.5, -1.0, 0.2), -0.8),
        (clipped_objective(1.0, 1.0, 0.2), 1.0),
    ];
    let hand_ok = hand.iter().all(|(got, want)| (got - want).abs() < 1e-15);
    let elapsed = started.elapsed();
    Outcome::new(
        worst_grad < 1e-4 && worst_gae < 1e-12 && hand_ok && elapsed < Duration::from_secs(60),
        format!(
            "gradient rel. error {worst_grad:.2e}, GAE(λ=1) max error {worst_gae:.2e}, clip hand values {}, {:.1}s",
            if hand_ok { "ok" } else { "wrong" },
            elapsed.as_secs_f64()
        ),
    )
}

struct SeedResult {
    seed: u64,
    pass: bool,
    line: String,
}

fn learning_run(seed: u64) -> SeedResult {
    let cfg = RunConfig {
        seed,
        ..Default::default()
    };
    let scenario = Arc::new(cfg.build_scenario().unwrap());
    let env = cfg.env_config(scenario).unwrap();
    let train_cfg = cfg.train_config();
    assert!(train_cfg.total_steps <= 500_000);
    let out = train(&env, &train_cfg, None, |_| Ok(())).unwrap();
    let rbc = compute_kpis(&rbc_episode(&env).unwrap(), &env.fleet).unwrap();
    let ppo = compute_kpis(&evaluate(&out.net, &env).unwrap(), &env.fleet).unwrap();

    let cost_cut = improvement_pct(Kpi::OperationalCost, rbc.operational_cost, ppo.operational_cost)
        .unwrap_or(f64::NAN);
    let checks = [
        cost_cut >= 5.0,
        ppo.reliability_pct >= rbc.reliability_pct,
        ppo.renewable_utilization_pct >= rbc.renewable_utilization_pct,
        ppo.battery_cycles < rbc.battery_cycles,
    ];
    let learned = out.log.last().unwrap().mean_reward > out.log[0].mean_reward;
    SeedResult {
        seed,
        pass: checks.iter().all(|&c| c),
        line: format!(
            "seed {seed}: cost {:.0} vs {:.0} ({cost_cut:+.1}%), reliability {:.3} vs {:.3}, RE util {:.3} vs {:.3}, cycles {:.1} vs {:.1}, reward improved {learned}",
            ppo.operational_cost,
            rbc.operational_cost,
            ppo.reliability_pct,
            rbc.reliability_pct,
            ppo.renewable_utilization_pct,
            rbc.renewable_utilization_pct,
            ppo.battery_cycles,
            rbc.battery_cycles
        ),
    }
}

fn learning_efficacy() -> Outcome {
    let started = Instant::now();
    let results: Vec<SeedResult> = std::thread::scope(|s| {
        let handles: Vec<_> = [0u64, 1, 2]
            .into_iter()
            .map(|seed| s.spawn(move || learning_run(seed)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let passed = results.iter().filter(|r| r.pass).count();
    for r in &results {
        println!("    [{}] {}", if r.pass { "ok" } else { "miss" }, r.line);
    }
    let seeds: Vec<u64> = results.iter().map(|r| r.seed).collect();
    Outcome::new(
        passed * 2 > results.len(),
        format!(
            "{passed}/{} seeds {seeds:?} meet all four conditions, {:.0}s",
            results.len(),
            started.elapsed().as_secs_f64()
        ),
    )
}

fn kpi_consistency() -> Outcome {
    let table = [
        (Kpi::Reliability, 95.25, 99.13, 4.1),
        (Kpi::RenewableUtilization, 47.6, 51.9, 9.1),
        (Kpi::BatteryCycles, 315.38, 17.0, 94.6),
        (Kpi::SelfSufficiency, 49.91, 66.7, 33.7),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (kpi, old, new, stated) in table {
        let got = improvement_pct(kpi, old, new).unwrap();
        ok &= (got - stated).abs() <= 0.1;
        parts.push(format!("{got:.2}/{stated}"));
    }
    Outcome::new(ok, format!("recomputed/stated: {}", parts.join(", ")))
}

fn mgsim(out_root: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_mgsim"))
        .args(args)
        .env("MGSIM_OUT_DIR", out_root)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> Option<Vec<(String, Vec<u8>)>> {
        let root = tmp.path().join(tag);
        let r = |sub: &str| root.join(sub).to_string_lossy().into_owned();
        let ok = mgsim(&root, &["gen-scenario", "--days", "30", "--seed", "7"])
            && mgsim(&root, &["simulate-rbc", "--seed", "1", "--horizon", "720"])
            && mgsim(
                &root,
                &["train-ppo", "--seed", "1", "--horizon", "720", "--total-steps", "4096", "--rollout", "2048", "--checkpoint-every", "1", "--workers", "2"],
            )
            && mgsim(
                &root,
                &["evaluate", "--seed", "1", "--horizon", "720", "--checkpoint", &format!("{}/checkpoint.json", r("train-ppo"))],
            )
            && mgsim(&root, &["compare", "--rbc", &r("simulate-rbc"), "--ppo", &r("evaluate")]);
        ok.then(|| dir_files(&root))
    };
    match (run("a"), run("b")) {
        (Some(a), Some(b)) => {
            let differing: Vec<&str> = a
                .iter()
                .zip(&b)
                .filter(|(x, y)| x != y)
                .map(|(x, _)| x.0.as_str())
                .collect();
            let same = a.len() == b.len() && differing.is_empty();
            Outcome::new(
                same,
                format!("{} artifacts across 5 commands, differing: {differing:?}", a.len()),
            )
        }
        _ => Outcome::new(false, "a command exited nonzero"),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("physics invariants", physics_invariants),
        ("equation oracles", equation_oracles),
        ("outage statistics", outage_statistics),
        ("RBC golden trace", rbc_golden),
        ("PPO numerics", ppo_numerics),
        ("learning efficacy", learning_efficacy),
        ("KPI formula consistency", kpi_consistency),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
