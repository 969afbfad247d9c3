//! Position-control task around the coupled simulator: observations,
//! reward, termination, reset and domain randomisation.

mod fish;
mod trajectory;

pub use fish::{EnvConfig, FishEnv, ResetSpec};
pub use trajectory::{read_trajectory, write_trajectory, TrajectoryRecord};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::body::{wrap_angle, FishState, N_JOINTS};
use crate::error::Result;

pub const OBS_DIM: usize = 11;
pub const ACT_DIM: usize = N_JOINTS;

/// Reward weight on approach progress.
pub const LAMBDA_APPROACH: f64 = 10.0;
/// Reward weight on joint-speed energy.
pub const LAMBDA_ENERGY: f64 = 0.001;
/// Terminal bonus or penalty.
pub const TERMINAL_REWARD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Body-frame nose velocity (m/s).
    pub v: [f64; 2],
    /// rad/s
    pub omega: f64,
    pub joints: [f64; N_JOINTS],
    pub joint_rates: [f64; N_JOINTS],
    /// Target in the body frame (m).
    pub target: [f64; 2],
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.v[0],
            self.v[1],
            self.omega,
            self.joints[0],
            self.joints[1],
            self.joints[2],
            self.joint_rates[0],
            self.joint_rates[1],
            self.joint_rates[2],
            self.target[0],
            self.target[1],
        ]
    }

    pub fn from_array(a: &[f64; OBS_DIM]) -> Self {
        Self {
            v: [a[0], a[1]],
            omega: a[2],
            joints: [a[3], a[4], a[5]],
            joint_rates: [a[6], a[7], a[8]],
            target: [a[9], a[10]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Sensor noise and actuation latency, drawn per step and per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationConfig {
    /// Mean command latency (s).
    pub latency_mean: f64,
    /// Half-width of the uniform latency interval (s).
    pub latency_half_width: f64,
    /// Standard deviation of position noise per axis (m).
    pub position_noise: f64,
    /// Standard deviation of heading noise (deg).
    pub direction_noise_deg: f64,
    /// Standard deviation of joint-angle noise (deg).
    pub joint_noise_deg: f64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            latency_mean: 0.068,
            latency_half_width: 0.02,
            position_noise: 0.05,
            direction_noise_deg: 3.0,
            joint_noise_deg: 2.0,
        }
    }
}

impl RandomizationConfig {
    /// No noise and a fixed latency at the default mean.
    pub fn none() -> Self {
        Self {
            latency_half_width: 0.0,
            position_noise: 0.0,
            direction_noise_deg: 0.0,
            joint_noise_deg: 0.0,
            ..Self::default()
        }
    }

    pub fn is_noise_free(&self) -> bool {
        self.position_noise == 0.0 && self.direction_noise_deg == 0.0 && self.joint_noise_deg == 0.0
    }

    pub fn sample_latency<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.latency_half_width > 0.0 {
            rng.random_range(
                self.latency_mean - self.latency_half_width..=self.latency_mean + self.latency_half_width,
            )
        } else {
            self.latency_mean
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Success,
    /// The fish left the pool.
    Failed,
    /// Time limit reached.
    Truncated,
    /// Solver fault; the episode is discarded.
    Aborted,
}

impl EpisodeStatus {
    pub fn is_done(self) -> bool {
        self != EpisodeStatus::Running
    }

    /// True when the value of the next state must not be bootstrapped.
    pub fn is_terminal(self) -> bool {
        matches!(self, EpisodeStatus::Success | EpisodeStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub approach: f64,
    pub energy: f64,
    pub terminal: f64,
    pub total: f64,
}

/// Approach progress minus joint-speed energy plus the terminal term.
pub fn compute_reward(
    d_prev: f64,
    d: f64,
    joint_rates: &[f64; N_JOINTS],
    status: EpisodeStatus,
) -> RewardTerms {
    let approach = LAMBDA_APPROACH * (d_prev - d);
    let energy = LAMBDA_ENERGY * joint_rates.iter().map(|v| v * v).sum::<f64>();
    let terminal = match status {
        EpisodeStatus::Success => TERMINAL_REWARD,
        EpisodeStatus::Failed => -TERMINAL_REWARD,
        _ => 0.0,
    };
    RewardTerms {
        approach,
        energy,
        terminal,
        total: approach - energy + terminal,
    }
}

/// Observation of `state` with the target expressed in the noisy body frame.
pub fn observe<R: Rng + ?Sized>(
    state: &FishState,
    target: [f64; 2],
    noise: &RandomizationConfig,
    rng: &mut R,
) -> Observation {
    let mut pos = state.base_position;
    let mut heading = state.heading;
    let mut joints = state.joint_angles;
    if !noise.is_noise_free() {
        let mut g = || -> f64 { rng.sample(StandardNormal) };
        pos[0] += noise.position_noise * g();
        pos[1] += noise.position_noise * g();
        heading += noise.direction_noise_deg.to_radians() * g();
        for j in joints.iter_mut() {
            *j += noise.joint_noise_deg.to_radians() * g();
        }
    }
    Observation {
        v: state.base_linear_velocity,
        omega: state.base_angular_velocity,
        joints,
        joint_rates: state.joint_velocities,
        target: to_body_frame(pos, wrap_angle(heading), target),
    }
}

/// `R(-heading) (target - position)`.
pub fn to_body_frame(position: [f64; 2], heading: f64, target: [f64; 2]) -> [f64; 2] {
    let (s, c) = heading.sin_cos();
    let dx = target[0] - position[0];
    let dy = target[1] - position[1];
    [c * dx + s * dy, -s * dx + c * dy]
}

/// One control step's result.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: [f64; OBS_DIM],
    pub reward: RewardTerms,
    pub status: EpisodeStatus,
    /// True distance from nose to target after the step (m).
    pub distance: f64,
}

/// Gym-style interface shared by the fish and the point-mass sanity task.
pub trait Environment {
    /// Largest absolute action per component.
    fn action_limit(&self) -> f64;

    fn reset(&mut self, seed: u64) -> Result<[f64; OBS_DIM]>;

    fn step(&mut self, action: &[f64; ACT_DIM]) -> Result<StepOutcome>;

    /// Control steps taken in the current episode.
    fn steps(&self) -> usize;

    /// Start or stop per-step logging. Environments without a log ignore it.
    fn set_recording(&mut self, _on: bool) {}

    /// Drain the per-step log of the current episode.
    fn take_records(&mut self) -> Vec<TrajectoryRecord> {
        Vec::new()
    }
}

/// Closed-loop controller producing joint commands (rad) from observations.
pub trait Controller {
    /// Clear internal state at the start of an episode.
    fn reset(&mut self);

    fn act(&mut self, obs: &[f64; OBS_DIM]) -> [f64; ACT_DIM];
}
