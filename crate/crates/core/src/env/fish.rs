use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    compute_reward, observe, Environment, EpisodeStatus, RandomizationConfig, RewardTerms, StepOutcome,
    TrajectoryRecord, ACT_DIM, OBS_DIM,
};
use crate::body::{FishState, Kinematics, N_JOINTS};
use crate::coupling::{CoupledSim, SimConfig};
use crate::error::{Error, Result};

/// Clearance kept between the spawned body outline and the walls (m).
const SPAWN_BODY_CLEARANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Control steps per episode.
    pub t_max: usize,
    /// m
    pub success_radius: f64,
    /// s
    pub control_period: f64,
    pub substeps_per_control: usize,
    /// Minimum distance of spawn positions and targets from the walls (m).
    pub spawn_margin: f64,
    /// Minimum initial nose-to-target distance (m).
    pub min_target_distance: f64,
    pub sim: SimConfig,
    pub randomization: RandomizationConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            t_max: 100,
            success_radius: 0.05,
            control_period: 0.02,
            substeps_per_control: 5,
            spawn_margin: 0.3,
            min_target_distance: 0.2,
            sim: SimConfig::pool(190, 3.6),
            randomization: RandomizationConfig::default(),
        }
    }
}

impl EnvConfig {
    /// Same task on a smaller, cheaper pool.
    pub fn desk(n: usize, size: f64) -> Self {
        Self {
            sim: SimConfig::pool(n, size),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let period = self.substeps_per_control as f64 * self.sim.dt;
        if (period - self.control_period).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "control period {} s does not equal {} substeps of {} s",
                self.control_period, self.substeps_per_control, self.sim.dt
            )));
        }
        if self.t_max == 0 || !(self.success_radius > 0.0) {
            return Err(Error::Config("t_max and success radius must be positive".into()));
        }
        let size = self.sim.fluid.domain_size;
        if 2.0 * self.spawn_margin >= size[0].min(size[1]) {
            return Err(Error::Config(format!(
                "spawn margin {} m leaves no room in a {:?} m pool",
                self.spawn_margin, size
            )));
        }
        let r = &self.randomization;
        if r.latency_mean - r.latency_half_width < 0.0 || r.latency_half_width < 0.0 {
            return Err(Error::Config("latency interval must be non-negative".into()));
        }
        Ok(())
    }
}

/// Overrides for a reset; unset fields are sampled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResetSpec {
    pub fish: Option<FishState>,
    pub target: Option<[f64; 2]>,
    /// Command latency (s).
    pub latency: Option<f64>,
}

/// The fish position-control task.
pub struct FishEnv {
    pub config: EnvConfig,
    sim: CoupledSim,
    rng: ChaCha8Rng,
    target: [f64; 2],
    steps: usize,
    d_prev: f64,
    latency: f64,
    status: EpisodeStatus,
    fault: Option<String>,
    /// Keep a per-step log of the current episode, starting with the reset
    /// state.
    pub record: bool,
    trajectory: Vec<TrajectoryRecord>,
}

impl FishEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let size = config.sim.fluid.domain_size;
        let start = FishState::at_rest([0.5 * size[0], 0.5 * size[1]], 0.0);
        let sim = CoupledSim::new(config.sim.clone(), start, 0)?;
        Ok(Self {
            config,
            sim,
            rng: ChaCha8Rng::seed_from_u64(0),
            target: [0.0; 2],
            steps: 0,
            d_prev: 0.0,
            latency: 0.0,
            status: EpisodeStatus::Running,
            fault: None,
            record: false,
            trajectory: Vec::new(),
        })
    }

    pub fn domain_size(&self) -> [f64; 2] {
        self.config.sim.fluid.domain_size
    }

    pub fn sim(&self) -> &CoupledSim {
        &self.sim
    }

    pub fn state(&self) -> &FishState {
        &self.sim.state
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    /// Move the target; the approach reward continues from the new distance.
    pub fn set_target(&mut self, target: [f64; 2]) {
        self.target = target;
        self.d_prev = self.distance();
    }

    /// Issue the next waypoint after a success; the episode keeps running
    /// with its step count and time.
    pub fn next_waypoint(&mut self, target: [f64; 2]) -> Result<()> {
        match self.status {
            EpisodeStatus::Running | EpisodeStatus::Success => {
                self.status = EpisodeStatus::Running;
                self.set_target(target);
                Ok(())
            }
            s => Err(Error::Config(format!("cannot continue a {s:?} episode"))),
        }
    }

    pub fn distance(&self) -> f64 {
        let p = self.sim.state.base_position;
        (self.target[0] - p[0]).hypot(self.target[1] - p[1])
    }

    /// Episode latency (s) before quantisation to substeps.
    pub fn latency(&self) -> f64 {
        self.latency
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    /// Message of the solver fault that aborted the episode, if any.
    pub fn fault(&self) -> Option<&str> {
        self.fault.as_deref()
    }

    pub fn trajectory(&self) -> &[TrajectoryRecord] {
        &self.trajectory
    }

    pub fn take_trajectory(&mut self) -> Vec<TrajectoryRecord> {
        std::mem::take(&mut self.trajectory)
    }

    /// Noisy observation of the current state; consumes noise draws.
    pub fn observe(&mut self) -> [f64; OBS_DIM] {
        observe(
            &self.sim.state,
            self.target,
            &self.config.randomization,
            &mut self.rng,
        )
        .to_array()
    }

    fn body_inside(&self, state: &FishState, clearance: f64) -> bool {
        let size = self.domain_size();
        let (q, _) = state.generalized();
        let kin = Kinematics::new(&self.config.sim.morphology, &q);
        kin.joints.iter().all(|p| {
            p[0] >= clearance
                && p[0] <= size[0] - clearance
                && p[1] >= clearance
                && p[1] <= size[1] - clearance
        })
    }

    fn sample_fish(&mut self) -> FishState {
        let size = self.domain_size();
        let m = self.config.spawn_margin;
        loop {
            let pos = [
                self.rng.random_range(m..=size[0] - m),
                self.rng.random_range(m..=size[1] - m),
            ];
            for _ in 0..64 {
                let heading = self.rng.random_range(-PI..PI);
                let s = FishState::at_rest(pos, heading);
                if self.body_inside(&s, SPAWN_BODY_CLEARANCE) {
                    return s;
                }
            }
        }
    }

    fn sample_target(&mut self, nose: [f64; 2]) -> [f64; 2] {
        let size = self.domain_size();
        let m = self.config.spawn_margin;
        loop {
            let t = [
                self.rng.random_range(m..=size[0] - m),
                self.rng.random_range(m..=size[1] - m),
            ];
            if (t[0] - nose[0]).hypot(t[1] - nose[1]) >= self.config.min_target_distance {
                return t;
            }
        }
    }

    /// Reset with some quantities fixed.
    pub fn reset_with(&mut self, seed: u64, spec: ResetSpec) -> Result<[f64; OBS_DIM]> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let latency = self.config.randomization.sample_latency(&mut self.rng);
        self.latency = spec.latency.unwrap_or(latency);
        let fish = match spec.fish {
            Some(f) => f,
            None => self.sample_fish(),
        };
        self.target = match spec.target {
            Some(t) => t,
            None => self.sample_target(fish.base_position),
        };
        let delay = (self.latency / self.config.sim.dt).round() as usize;
        self.sim.reset(fish, delay)?;
        self.steps = 0;
        self.status = EpisodeStatus::Running;
        self.fault = None;
        self.trajectory.clear();
        self.d_prev = self.distance();
        if self.record {
            let rec = self.record_of(self.sim.state.joint_angles, RewardTerms::default());
            self.trajectory.push(rec);
        }
        Ok(self.observe())
    }

    fn record_of(&self, cmd: [f64; N_JOINTS], reward_terms: RewardTerms) -> TrajectoryRecord {
        let s = &self.sim.state;
        TrajectoryRecord {
            t: self.sim.time(),
            pose: [s.base_position[0], s.base_position[1], s.heading],
            joints: s.joint_angles,
            joints_desired: cmd,
            joint_rates: s.joint_velocities,
            v: s.base_linear_velocity,
            omega: s.base_angular_velocity,
            target: self.target,
            reward_terms,
            status: self.status,
        }
    }

    fn outside(&self) -> bool {
        let p = self.sim.state.base_position;
        let size = self.domain_size();
        !(p[0] >= 0.0 && p[0] <= size[0] && p[1] >= 0.0 && p[1] <= size[1])
    }
}

impl Environment for FishEnv {
    fn action_limit(&self) -> f64 {
        self.config.sim.morphology.joint_limit
    }

    fn reset(&mut self, seed: u64) -> Result<[f64; OBS_DIM]> {
        self.reset_with(seed, ResetSpec::default())
    }

    fn step(&mut self, action: &[f64; ACT_DIM]) -> Result<StepOutcome> {
        if self.status.is_done() {
            return Err(Error::Config("step called on a finished episode".into()));
        }
        let lim = self.action_limit();
        let mut cmd = [0.0; N_JOINTS];
        for j in 0..N_JOINTS {
            cmd[j] = if action[j].is_finite() {
                action[j].clamp(-lim, lim)
            } else {
                0.0
            };
        }
        let mut left = false;
        for _ in 0..self.config.substeps_per_control {
            match self.sim.substep(cmd) {
                Ok(_) => {}
                Err(Error::OutOfDomain { .. }) => {
                    left = true;
                    break;
                }
                Err(e) if e.is_numeric_fault() => {
                    self.fault = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        self.steps += 1;
        let d = self.distance();
        self.status = if self.fault.is_some() {
            EpisodeStatus::Aborted
        } else if d < self.config.success_radius {
            EpisodeStatus::Success
        } else if left || self.outside() {
            EpisodeStatus::Failed
        } else if self.steps >= self.config.t_max {
            EpisodeStatus::Truncated
        } else {
            EpisodeStatus::Running
        };
        let reward = if self.status == EpisodeStatus::Aborted {
            Default::default()
        } else {
            compute_reward(self.d_prev, d, &self.sim.state.joint_velocities, self.status)
        };
        self.d_prev = d;
        if self.record {
            let rec = self.record_of(cmd, reward);
            self.trajectory.push(rec);
        }
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            status: self.status,
            distance: d,
        })
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn set_recording(&mut self, on: bool) {
        self.record = on;
    }

    fn take_records(&mut self) -> Vec<TrajectoryRecord> {
        self.take_trajectory()
    }
}
