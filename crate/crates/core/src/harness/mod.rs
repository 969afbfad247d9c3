//! Evaluation tasks, metrics, run configuration and the point-mass sanity
//! environment used by the command-line harness.

mod config;
mod metrics;
mod sanity;

pub use config::{CalibrationSection, EnvKind, EnvSection, EvalConfig, RunConfig, TrainingConfig};
pub use metrics::{
    energy, min_turning_radius, paired_differences, path_length, EpisodeMetrics, EvalMetrics,
    PairedDifference, TURN_SPEED_FLOOR,
};
pub use sanity::{SanityConfig, SanityController, SanityEnv};

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::FishState;
use crate::env::{
    Controller, EnvConfig, Environment, EpisodeStatus, FishEnv, ResetSpec, TrajectoryRecord, ACT_DIM, OBS_DIM,
};
use crate::error::{Error, Result};
use crate::sac::{ActionMode, Sac};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Random start and target.
    Position,
    /// Target placed behind the nose.
    Uturn,
    /// Five waypoints in star order around the pool centre.
    Pentagram,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(Task::Position),
            "uturn" => Ok(Task::Uturn),
            "pentagram" => Ok(Task::Pentagram),
            _ => Err(Error::Config(format!(
                "unknown task `{s}` (expected position, uturn or pentagram)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::Position => "position",
            Task::Uturn => "uturn",
            Task::Pentagram => "pentagram",
        };
        f.write_str(s)
    }
}

/// Star vertices on a circle at 90 + 72 k degrees, in stroke order
/// k = 0, 2, 4, 1, 3.
pub fn pentagram_waypoints(center: [f64; 2], radius: f64) -> [[f64; 2]; 5] {
    [0, 2, 4, 1, 3].map(|k| {
        let a = FRAC_PI_2 + k as f64 * 2.0 * PI / 5.0;
        [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
    })
}

/// Episode seeds derived from a base seed.
pub fn episode_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// Environment configuration for evaluation: the training MDP with the
/// horizon stretched to `max_time`.
pub fn eval_env_config(env: &EnvConfig, eval: &EvalConfig) -> EnvConfig {
    EnvConfig {
        t_max: (eval.max_time / env.control_period).ceil() as usize,
        ..env.clone()
    }
}

/// Start state and waypoint list of one episode. `None` fields are sampled
/// by the environment from the episode seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSetup {
    pub fish: Option<FishState>,
    pub waypoints: Vec<[f64; 2]>,
}

/// U-turn distance actually used in a pool of side `size`.
pub fn uturn_distance(env: &EnvConfig, eval: &EvalConfig) -> f64 {
    let size = env.sim.fluid.domain_size;
    eval.uturn_distance
        .min(size[0].min(size[1]) - 2.0 * env.spawn_margin)
}

pub fn episode_setup(env: &EnvConfig, eval: &EvalConfig, task: Task, seed: u64) -> Result<EpisodeSetup> {
    let size = env.sim.fluid.domain_size;
    let c = [0.5 * size[0], 0.5 * size[1]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a5c_0001);
    match task {
        Task::Position => Ok(EpisodeSetup {
            fish: None,
            waypoints: Vec::new(),
        }),
        Task::Uturn => {
            // nose and target symmetric about the centre, target behind
            let d = uturn_distance(env, eval);
            let h: f64 = rng.random_range(-PI..PI);
            let u = [h.cos(), h.sin()];
            let nose = [c[0] + 0.5 * d * u[0], c[1] + 0.5 * d * u[1]];
            let target = [c[0] - 0.5 * d * u[0], c[1] - 0.5 * d * u[1]];
            Ok(EpisodeSetup {
                fish: Some(FishState::at_rest(nose, h)),
                waypoints: vec![target],
            })
        }
        Task::Pentagram => {
            let r = eval.pentagram_radius.unwrap_or(size[0].min(size[1]) / 3.0);
            let pts = pentagram_waypoints(c, r);
            let m = env.spawn_margin;
            let inside = |p: &[f64; 2]| p[0] >= m && p[0] <= size[0] - m && p[1] >= m && p[1] <= size[1] - m;
            if r < 0.0 || !pts.iter().all(inside) {
                return Err(Error::Config(format!(
                    "pentagram of radius {r} m does not fit a {size:?} m pool with {m} m margins"
                )));
            }
            let first = pts[0];
            let h = if r > 0.0 {
                (first[1] - c[1]).atan2(first[0] - c[0])
            } else {
                0.0
            };
            Ok(EpisodeSetup {
                fish: Some(FishState::at_rest(c, h)),
                waypoints: pts.to_vec(),
            })
        }
    }
}

/// Logged episode with its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub episode_return: f64,
    pub trajectory: Vec<TrajectoryRecord>,
}

/// Run one fish episode of `task`; the environment horizon bounds it.
pub fn run_episode<C: Controller + ?Sized>(
    env: &mut FishEnv,
    controller: &mut C,
    eval: &EvalConfig,
    task: Task,
    seed: u64,
) -> Result<EpisodeOutcome> {
    let setup = episode_setup(&env.config, eval, task, seed)?;
    let mut waypoints = setup.waypoints.into_iter();
    let spec = ResetSpec {
        fish: setup.fish,
        target: waypoints.next(),
        latency: None,
    };
    env.record = true;
    let mut obs = env.reset_with(seed, spec)?;
    controller.reset();
    let mut reached = 0;
    let mut ret = 0.0;
    let mut status = if env.distance() < env.config.success_radius {
        EpisodeStatus::Success
    } else {
        EpisodeStatus::Running
    };
    loop {
        if status == EpisodeStatus::Success {
            reached += 1;
            match waypoints.next() {
                Some(w) => {
                    env.next_waypoint(w)?;
                    status = if env.distance() < env.config.success_radius {
                        EpisodeStatus::Success
                    } else {
                        EpisodeStatus::Running
                    };
                    obs = env.observe();
                    continue;
                }
                None => break,
            }
        }
        if status.is_done() {
            break;
        }
        let a = controller.act(&obs);
        let o = env.step(&a)?;
        ret += o.reward.total;
        status = o.status;
        obs = o.observation;
    }
    let trajectory = env.take_trajectory();
    Ok(EpisodeOutcome {
        metrics: EpisodeMetrics::from_records(seed, status, reached, &trajectory),
        episode_return: ret,
        trajectory,
    })
}

/// Episodes of `task` on the given seeds, in parallel; each worker owns an
/// environment. Results are ordered like `seeds`.
pub fn evaluate<C: Controller + Clone + Send + Sync>(
    env: &EnvConfig,
    eval: &EvalConfig,
    controller: &C,
    task: Task,
    seeds: &[u64],
) -> Result<Vec<EpisodeOutcome>> {
    let cfg = eval_env_config(env, eval);
    seeds
        .par_iter()
        .map(|&seed| {
            let mut e = FishEnv::new(cfg.clone())?;
            let mut c = controller.clone();
            run_episode(&mut e, &mut c, eval, task, seed)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub task: Task,
    pub seeds: Vec<u64>,
    pub policy: EvalMetrics,
    pub baseline: EvalMetrics,
    pub policy_episodes: Vec<EpisodeMetrics>,
    pub baseline_episodes: Vec<EpisodeMetrics>,
    /// Policy minus baseline, per seed.
    pub differences: Vec<PairedDifference>,
}

/// Both controllers on identical seeded episodes.
pub fn compare<A, B>(
    env: &EnvConfig,
    eval: &EvalConfig,
    policy: &A,
    baseline: &B,
    task: Task,
    seeds: &[u64],
) -> Result<(CompareReport, Vec<EpisodeOutcome>, Vec<EpisodeOutcome>)>
where
    A: Controller + Clone + Send + Sync,
    B: Controller + Clone + Send + Sync,
{
    let pa = evaluate(env, eval, policy, task, seeds)?;
    let pb = evaluate(env, eval, baseline, task, seeds)?;
    let ma: Vec<_> = pa.iter().map(|o| o.metrics.clone()).collect();
    let mb: Vec<_> = pb.iter().map(|o| o.metrics.clone()).collect();
    let report = CompareReport {
        task,
        seeds: seeds.to_vec(),
        policy: EvalMetrics::aggregate(&ma),
        baseline: EvalMetrics::aggregate(&mb),
        differences: paired_differences(&ma, &mb),
        policy_episodes: ma,
        baseline_episodes: mb,
    };
    Ok((report, pa, pb))
}

/// Deterministic SAC actor as a joint-command controller.
#[derive(Debug, Clone)]
pub struct PolicyController {
    pub sac: Sac<f32>,
    /// Joint limit the unit actions are scaled to (rad).
    pub limit: f64,
    rng: ChaCha8Rng,
}

impl PolicyController {
    pub fn new(sac: Sac<f32>, limit: f64) -> Self {
        Self {
            sac,
            limit,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Controller for PolicyController {
    fn reset(&mut self) {}

    fn act(&mut self, obs: &[f64; OBS_DIM]) -> [f64; ACT_DIM] {
        self.sac
            .sample_action(obs, ActionMode::Deterministic, &mut self.rng)
            .scaled(self.limit)
    }
}

/// Replays logged joint commands in order.
#[derive(Debug, Clone)]
pub struct ReplayController {
    commands: Vec<[f64; ACT_DIM]>,
    next: usize,
}

impl ReplayController {
    /// Commands from a logged trajectory whose first record is the reset
    /// state.
    pub fn from_trajectory(records: &[TrajectoryRecord]) -> Self {
        Self {
            commands: records.iter().skip(1).map(|r| r.joints_desired).collect(),
            next: 0,
        }
    }
}

impl Controller for ReplayController {
    fn reset(&mut self) {
        self.next = 0;
    }

    fn act(&mut self, _obs: &[f64; OBS_DIM]) -> [f64; ACT_DIM] {
        let a = self.commands.get(self.next).copied().unwrap_or([0.0; ACT_DIM]);
        self.next += 1;
        a
    }
}

/// Largest pose or joint deviation between two logs of equal length.
pub fn trajectory_deviation(a: &[TrajectoryRecord], b: &[TrajectoryRecord]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let pairs = x.pose.iter().zip(&y.pose).chain(x.joints.iter().zip(&y.joints));
        for (p, q) in pairs.chain(x.joint_rates.iter().zip(&y.joint_rates)) {
            worst = worst.max((p - q).abs());
        }
    }
    Some(worst)
}

/// One rollout on the environment's own task distribution.
pub fn rollout<E: Environment, C: Controller + ?Sized>(
    env: &mut E,
    controller: &mut C,
    seed: u64,
) -> Result<EpisodeOutcome> {
    env.set_recording(true);
    let mut obs = env.reset(seed)?;
    controller.reset();
    let mut ret = 0.0;
    let status = loop {
        let o = env.step(&controller.act(&obs))?;
        ret += o.reward.total;
        obs = o.observation;
        if o.status.is_done() {
            break o.status;
        }
    };
    let trajectory = env.take_records();
    Ok(EpisodeOutcome {
        metrics: EpisodeMetrics::from_records(
            seed,
            status,
            (status == EpisodeStatus::Success) as usize,
            &trajectory,
        ),
        episode_return: ret,
        trajectory,
    })
}

/// Rollouts on fresh environments from `make_env`, in parallel.
pub fn snapshot<E, F, C>(make_env: F, controller: &C, seeds: &[u64]) -> Result<Vec<EpisodeOutcome>>
where
    E: Environment,
    F: Fn() -> Result<E> + Sync,
    C: Controller + Clone + Send + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| rollout(&mut make_env()?, &mut controller.clone(), seed))
        .collect()
}

/// Fraction of successful episodes of any environment under `controller`.
pub fn success_rate<E: Environment, C: Controller + ?Sized>(
    env: &mut E,
    controller: &mut C,
    seeds: &[u64],
) -> Result<f64> {
    let mut wins = 0;
    for &seed in seeds {
        let mut obs = env.reset(seed)?;
        controller.reset();
        loop {
            let o = env.step(&controller.act(&obs))?;
            obs = o.observation;
            if o.status.is_done() {
                wins += (o.status == EpisodeStatus::Success) as usize;
                break;
            }
        }
    }
    Ok(wins as f64 / seeds.len().max(1) as f64)
}
