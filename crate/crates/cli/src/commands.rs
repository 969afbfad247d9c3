use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use fishswim_core::baseline::WaypointController;
use fishswim_core::calibrate::{fit_servo_params, load_reference_dir};
use fishswim_core::env::{write_trajectory, Controller, EnvConfig, Environment, FishEnv};
use fishswim_core::fluid::write_field_csv;
use fishswim_core::harness::{
    compare as compare_controllers, episode_seeds, episode_setup, evaluate, snapshot, EnvKind,
    EpisodeOutcome, EvalMetrics, PolicyController, RunConfig, SanityEnv, Task,
};
use fishswim_core::sac::{load_checkpoint, Trainer};

use crate::Common;

/// Seed offset for the fixed evaluation episodes stored with checkpoints.
const SNAPSHOT_SEED_SALT: u64 = 0xe7a1_5eed;

fn load_config(common: &Common) -> Result<RunConfig> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(cfg)
}

fn prepare_out(common: &Common, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    fs::write(common.out.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_trajectories(dir: &Path, prefix: &str, outcomes: &[EpisodeOutcome]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, o) in outcomes.iter().enumerate() {
        let p = dir.join(format!("{prefix}_{i:03}.jsonl"));
        write_trajectory(&o.trajectory, BufWriter::new(File::create(&p)?))?;
    }
    Ok(())
}

fn fish_config(cfg: &RunConfig) -> Result<EnvConfig> {
    if cfg.env.kind != EnvKind::Fish {
        bail!("this command needs env.kind = \"fish\"");
    }
    Ok(cfg.env.fish_config())
}

fn policy(cfg: &RunConfig, path: &Path, env: &EnvConfig) -> Result<PolicyController> {
    let (sac, header) = load_checkpoint::<f32>(path, Some(&cfg.sac.config_hash()))?;
    log::info!(
        "loaded {} (episode {}, {} updates)",
        path.display(),
        header.episode,
        header.updates
    );
    Ok(PolicyController::new(sac, env.sim.morphology.joint_limit))
}

fn train_on<E, F>(cfg: &RunConfig, common: &Common, steps: usize, make_env: F) -> Result<()>
where
    E: Environment,
    F: Fn() -> fishswim_core::Result<E> + Sync,
{
    let mut env = make_env()?;
    let limit = env.action_limit();
    let mut trainer = Trainer::new(cfg.sac.clone(), common.seed)?;
    let seeds = episode_seeds(common.seed ^ SNAPSHOT_SEED_SALT, cfg.training.snapshot_episodes);
    let every = cfg.sac.checkpoint_every;
    let out = common.out.clone();
    let started = Instant::now();
    let mut on_episode = |sac: &fishswim_core::sac::Sac<f32>, log: &fishswim_core::sac::EpisodeLog| {
        let done = log.episode + 1;
        if done.is_multiple_of(50) {
            log::info!(
                "episode {done}: steps {} return {:.3} alpha {:.4} ({:.0?})",
                log.steps,
                log.episode_return,
                log.alpha,
                started.elapsed()
            );
        }
        if every > 0 && done.is_multiple_of(every) && !seeds.is_empty() {
            let ctrl = PolicyController::new(sac.clone(), limit);
            let eps = snapshot(&make_env, &ctrl, &seeds)?;
            let p = out.join(format!("eval_{done:06}.jsonl"));
            write_jsonl(&p, &eps).map_err(|e| fishswim_core::Error::Data(e.to_string()))?;
        }
        Ok(false)
    };
    let summary = trainer.run(&mut env, steps, Some(&common.out), &mut on_episode)?;
    let completed: Vec<_> = summary.completed().collect();
    let successes = completed.iter().filter(|e| e.success).count();
    #[derive(Serialize)]
    struct Summary {
        episodes: usize,
        total_steps: usize,
        aborted: usize,
        successes: usize,
    }
    write_json(
        &common.out.join("summary.json"),
        &Summary {
            episodes: summary.episodes.len(),
            total_steps: summary.total_steps,
            aborted: summary.aborted,
            successes,
        },
    )?;
    println!(
        "trained {} episodes ({} steps, {} aborted, {} successes) in {:.1?}",
        summary.episodes.len(),
        summary.total_steps,
        summary.aborted,
        successes,
        started.elapsed()
    );
    Ok(())
}

pub fn train(common: &Common, steps: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    prepare_out(common, &cfg)?;
    let steps = steps.unwrap_or(cfg.training.total_steps);
    match cfg.env.kind {
        EnvKind::Fish => {
            let env = cfg.env.fish_config();
            train_on(&cfg, common, steps, || FishEnv::new(env.clone()))
        }
        EnvKind::Sanity => {
            let env = cfg.env.sanity.clone();
            train_on(&cfg, common, steps, || SanityEnv::new(env.clone()))
        }
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    task: Task,
    controller: &'a str,
    metrics: EvalMetrics,
    episodes: Vec<fishswim_core::harness::EpisodeMetrics>,
}

pub fn eval(common: &Common, checkpoint: Option<&Path>, task: &str, trials: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    let task: Task = task.parse()?;
    let env = fish_config(&cfg)?;
    prepare_out(common, &cfg)?;
    let seeds = episode_seeds(common.seed, trials.unwrap_or(cfg.eval.episodes));
    let (name, outcomes) = match checkpoint {
        Some(p) => (
            "policy",
            evaluate(&env, &cfg.eval, &policy(&cfg, p, &env)?, task, &seeds)?,
        ),
        None => {
            let ctrl = WaypointController::new(cfg.baseline.clone());
            ("baseline", evaluate(&env, &cfg.eval, &ctrl, task, &seeds)?)
        }
    };
    let episodes: Vec<_> = outcomes.iter().map(|o| o.metrics.clone()).collect();
    let report = EvalReport {
        task,
        controller: name,
        metrics: EvalMetrics::aggregate(&episodes),
        episodes,
    };
    write_json(&common.out.join("eval.json"), &report)?;
    write_trajectories(&common.out.join("trajectories"), "episode", &outcomes)?;
    println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    Ok(())
}

pub fn compare(common: &Common, checkpoint: &Path, task: &str, trials: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    let task: Task = task.parse()?;
    let env = fish_config(&cfg)?;
    prepare_out(common, &cfg)?;
    let seeds = episode_seeds(common.seed, trials.unwrap_or(cfg.eval.trials));
    let pol = policy(&cfg, checkpoint, &env)?;
    let base = WaypointController::new(cfg.baseline.clone());
    let (report, pa, pb) = compare_controllers(&env, &cfg.eval, &pol, &base, task, &seeds)?;
    write_json(&common.out.join("compare.json"), &report)?;
    let dir = common.out.join("trajectories");
    write_trajectories(&dir, "policy", &pa)?;
    write_trajectories(&dir, "baseline", &pb)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "policy": report.policy,
            "baseline": report.baseline,
        }))?
    );
    Ok(())
}

pub fn calibrate(common: &Common, refs: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let setup = cfg.calibration.setup()?;
    let references = load_reference_dir(refs)?;
    prepare_out(common, &cfg)?;
    let started = Instant::now();
    let report = fit_servo_params(&setup, &references)?;
    fs::write(common.out.join("calibration.json"), report.to_json()?)?;
    let p = report.params;
    let snippet = format!(
        "[env.servo]\nkp = {:?}\nkd = {:?}\nlatency = {:?}\n",
        p.kp, p.kd, p.latency
    );
    fs::write(common.out.join("servo.toml"), &snippet)?;
    println!(
        "fitted kp {:.4} kd {:.4} latency {:.3} s, rmse {:.3e} rad (initial {:.3e}) in {:.1?}",
        p.kp,
        p.kd,
        p.latency,
        report.total_rmse,
        report.initial_rmse,
        started.elapsed()
    );
    Ok(())
}

pub fn dump_field(common: &Common, task: &str, steps: usize) -> Result<()> {
    let cfg = load_config(common)?;
    let task: Task = task.parse()?;
    let env_cfg = fish_config(&cfg)?;
    prepare_out(common, &cfg)?;
    let mut env = FishEnv::new(EnvConfig {
        t_max: steps.max(1),
        ..env_cfg
    })?;
    let setup = episode_setup(&env.config, &cfg.eval, task, common.seed)?;
    let spec = fishswim_core::env::ResetSpec {
        fish: setup.fish,
        target: setup.waypoints.first().copied(),
        latency: None,
    };
    let mut obs = env.reset_with(common.seed, spec)?;
    let mut ctrl = WaypointController::new(cfg.baseline.clone());
    ctrl.reset();
    for _ in 0..steps {
        let o = env.step(&ctrl.act(&obs))?;
        obs = o.observation;
        if o.status.is_done() {
            break;
        }
    }
    let sim = env.sim();
    write_field_csv(
        &sim.grid,
        BufWriter::new(File::create(common.out.join("field.csv"))?),
    )?;
    let mut w = csv::Writer::from_path(common.out.join("markers.csv"))?;
    w.write_record(["link", "x_m", "y_m", "vx_m_s", "vy_m_s"])?;
    for m in sim.markers() {
        w.write_record(&[
            m.link.to_string(),
            format!("{:.6}", m.position[0]),
            format!("{:.6}", m.position[1]),
            format!("{:.6}", m.velocity[0]),
            format!("{:.6}", m.velocity[1]),
        ])?;
    }
    w.flush()?;
    println!("dumped field after {:.2} s of simulated time", sim.time());
    Ok(())
}
