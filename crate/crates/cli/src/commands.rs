use std::path::{Path, PathBuf};
use std::sync::Arc;

use microgrid_core::kpi::{compare_labeled, Kpi};
use microgrid_core::ppo::train::write_log_csv;
use microgrid_core::ppo::{evaluate, train, Checkpoint};
use microgrid_core::{
    compute_kpis, rbc_episode, synth_scenario, EnvConfig, KpiReport, RunConfig, Scenario,
    Trajectory,
};

use crate::artifacts::{self, RunInfo};
use crate::{Cli, CliError, Command, CompareArgs, EpisodeArgs, EvalArgs, GenArgs, GlobalArgs, TrainArgs};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let Cli { global, command } = cli;
    match command {
        Command::GenScenario(args) => gen_scenario(&global, args),
        Command::SimulateRbc(args) => simulate_rbc(&global, &args.episode),
        Command::TrainPpo(args) => train_ppo(&global, args),
        Command::Evaluate(args) => evaluate_cmd(&global, args),
        Command::Compare(args) => compare(&global, args),
    }
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = global.workers {
        cfg.train.workers = workers;
    }
    Ok(cfg)
}

fn apply_episode(cfg: &mut RunConfig, args: &EpisodeArgs) {
    if let Some(path) = &args.scenario {
        cfg.scenario.path = Some(path.clone());
    }
    if let Some(h) = args.horizon {
        cfg.env.horizon = Some(h);
    }
}

fn out_dir(global: &GlobalArgs, cfg: &RunConfig, command: &str) -> PathBuf {
    if let Some(dir) = global.out.clone().or_else(|| cfg.output_dir.clone()) {
        return dir;
    }
    let root = std::env::var_os(crate::OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(command)
}

fn prepare(cfg: &RunConfig) -> Result<(Arc<Scenario>, EnvConfig), CliError> {
    cfg.validate()?;
    let scenario = Arc::new(cfg.build_scenario()?);
    let env = cfg.env_config(scenario.clone())?;
    Ok((scenario, env))
}

fn gen_scenario(global: &GlobalArgs, args: GenArgs) -> Result<(), CliError> {
    let mut cfg = load_config(global)?;
    if let Some(seed) = global.seed {
        cfg.scenario.synth.seed = seed;
    }
    if let Some(days) = args.days {
        if days == 0 {
            return Err(CliError::Usage("--days must be at least 1".into()));
        }
        cfg.scenario.synth.days = days;
    }
    if let Some(peak) = args.peak_load_kw {
        cfg.scenario.synth.peak_load_kw = peak;
    }
    cfg.scenario.synth.validate()?;
    let scenario = synth_scenario(&cfg.scenario.synth)?;

    let dir = out_dir(global, &cfg, "gen-scenario");
    artifacts::ensure_dir(&dir)?;
    let csv = dir.join("scenario.csv");
    scenario.save_csv(&csv)?;
    artifacts::write_json(&dir.join("scenario_stats.json"), &scenario.stats())?;
    artifacts::write_config(&dir, &cfg)?;
    println!("wrote {} ({} steps)", csv.display(), scenario.len());
    Ok(())
}

fn write_episode(
    dir: &Path,
    command: &str,
    controller: &str,
    cfg: &RunConfig,
    scenario: &Scenario,
    env: &EnvConfig,
    traj: &Trajectory,
) -> Result<KpiReport, CliError> {
    let kpis = compute_kpis(traj, &env.fleet)?;
    artifacts::ensure_dir(dir)?;
    traj.save_csv(dir.join(artifacts::TRAJECTORY_FILE))?;
    let info = RunInfo {
        command: command.into(),
        controller: controller.into(),
        seed: cfg.seed,
        scenario_name: scenario.meta.name.clone(),
        scenario_content_hash: scenario.content_hash(),
        scenario_hash: traj.scenario_hash.clone(),
        start: env.start,
        horizon: env.horizon,
        fleet: env.fleet.clone(),
        kpis: kpis.clone(),
    };
    artifacts::write_json(&dir.join(artifacts::RUN_FILE), &info)?;
    artifacts::write_config(dir, cfg)?;
    Ok(kpis)
}

fn print_kpis(label: &str, k: &KpiReport) {
    println!("{label} over {} steps", k.steps);
    for kpi in Kpi::ALL {
        println!("  {:<28} {:>12.3}", kpi.label(), k.value(kpi));
    }
}

fn simulate_rbc(global: &GlobalArgs, episode: &EpisodeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(global)?;
    apply_episode(&mut cfg, episode);
    let (scenario, env) = prepare(&cfg)?;
    let traj = rbc_episode(&env)?;
    let dir = out_dir(global, &cfg, "simulate-rbc");
    let kpis = write_episode(&dir, "simulate-rbc", "rbc", &cfg, &scenario, &env, &traj)?;
    print_kpis("RBC", &kpis);
    eprintln!("artifacts in {}", dir.display());
    Ok(())
}

fn train_ppo(global: &GlobalArgs, args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(global)?;
    apply_episode(&mut cfg, &args.episode);
    if let Some(n) = args.total_steps {
        cfg.train.total_steps = n;
    }
    if let Some(n) = args.rollout {
        cfg.train.rollout_length = n;
    }
    if let Some(n) = args.checkpoint_every {
        cfg.train.checkpoint_every = n;
    }
    let (_, env) = prepare(&cfg)?;
    let resume = args.resume.as_deref().map(Checkpoint::load).transpose()?;

    let dir = out_dir(global, &cfg, "train-ppo");
    let ckpt_dir = dir.join(artifacts::CHECKPOINT_DIR);
    artifacts::ensure_dir(&ckpt_dir)?;
    artifacts::write_config(&dir, &cfg)?;

    let train_cfg = cfg.train_config();
    let iterations = train_cfg.iterations();
    let outcome = train(&env, &train_cfg, resume, |ck| {
        if ck.iteration < iterations {
            ck.save(ckpt_dir.join(format!("iter_{:06}.json", ck.iteration)))?;
            eprintln!("checkpoint at iteration {} ({} steps)", ck.iteration, ck.steps_done);
        }
        Ok(())
    })?;
    outcome.checkpoint.save(dir.join(artifacts::CHECKPOINT_FILE))?;
    let log_path = dir.join(artifacts::TRAINING_LOG_FILE);
    let file = std::fs::File::create(&log_path).map_err(|source| CliError::Write {
        path: log_path.clone(),
        source,
    })?;
    write_log_csv(&outcome.log, std::io::BufWriter::new(file))?;

    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        println!(
            "{} updates, {} steps; mean reward {:.4} -> {:.4}",
            outcome.log.len(),
            last.steps,
            first.mean_reward,
            last.mean_reward
        );
    }
    eprintln!("artifacts in {}", dir.display());
    Ok(())
}

fn evaluate_cmd(global: &GlobalArgs, args: EvalArgs) -> Result<(), CliError> {
    let mut cfg = load_config(global)?;
    apply_episode(&mut cfg, &args.episode);
    let (scenario, env) = prepare(&cfg)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let traj = evaluate(&ckpt.net, &env)?;
    let dir = out_dir(global, &cfg, "evaluate");
    let kpis = write_episode(&dir, "evaluate", "ppo", &cfg, &scenario, &env, &traj)?;
    print_kpis("PPO (greedy)", &kpis);
    eprintln!("artifacts in {}", dir.display());
    Ok(())
}

fn compare(global: &GlobalArgs, args: CompareArgs) -> Result<(), CliError> {
    let cfg = load_config(global)?;
    let (rbc_traj, rbc_info) = artifacts::read_run(&args.rbc)?;
    let (ppo_traj, ppo_info) = artifacts::read_run(&args.ppo)?;
    let rbc = compute_kpis(&rbc_traj, &rbc_info.fleet)?;
    let ppo = compute_kpis(&ppo_traj, &ppo_info.fleet)?;
    let report = compare_labeled("RBC", &rbc, "DRL-PPO", &ppo)?;

    let dir = out_dir(global, &cfg, "compare");
    artifacts::ensure_dir(&dir)?;
    artifacts::write_json(&dir.join("comparison.json"), &report)?;
    let table = report.to_text_table();
    artifacts::write_text(&dir.join("comparison.txt"), &table)?;
    artifacts::write_text(&dir.join("kpi_chart.svg"), &report.to_svg())?;
    print!("{table}");
    eprintln!("artifacts in {}", dir.display());
    Ok(())
}
