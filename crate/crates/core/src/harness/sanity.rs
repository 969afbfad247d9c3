//! Fluid-free point-mass stand-in with the fish task's interface.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::wrap_angle;
use crate::env::{
    compute_reward, to_body_frame, Controller, Environment, EpisodeStatus, Observation, RewardTerms,
    StepOutcome, TrajectoryRecord, ACT_DIM, OBS_DIM,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SanityConfig {
    /// s
    pub dt: f64,
    /// Side of the square arena (m).
    pub size: f64,
    pub spawn_margin: f64,
    pub min_target_distance: f64,
    pub success_radius: f64,
    pub t_max: usize,
    /// Forward acceleration at full thrust (m/s^2).
    pub thrust: f64,
    /// Linear drag rate (1/s).
    pub drag: f64,
    /// Turn rate at full command (rad/s).
    pub max_turn_rate: f64,
}

impl Default for SanityConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            size: 1.5,
            spawn_margin: 0.25,
            min_target_distance: 0.2,
            success_radius: 0.05,
            t_max: 100,
            thrust: 6.0,
            drag: 2.0,
            max_turn_rate: 2.0 * PI,
        }
    }
}

/// Drag-damped unicycle. `action[0]` is thrust, `action[1]` turn rate,
/// `action[2]` is ignored. Joint slots of the observation hold the last
/// action.
pub struct SanityEnv {
    pub config: SanityConfig,
    rng: ChaCha8Rng,
    pos: [f64; 2],
    heading: f64,
    speed: f64,
    omega: f64,
    last_action: [f64; ACT_DIM],
    target: [f64; 2],
    steps: usize,
    status: EpisodeStatus,
    record: bool,
    records: Vec<TrajectoryRecord>,
}

impl SanityEnv {
    pub fn new(config: SanityConfig) -> Result<Self> {
        if !(config.dt > 0.0) || 2.0 * config.spawn_margin >= config.size || config.t_max == 0 {
            return Err(Error::Config("invalid sanity env configuration".into()));
        }
        Ok(Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            pos: [0.0; 2],
            heading: 0.0,
            speed: 0.0,
            omega: 0.0,
            last_action: [0.0; ACT_DIM],
            target: [0.0; 2],
            steps: 0,
            status: EpisodeStatus::Running,
            record: false,
            records: Vec::new(),
        })
    }

    pub fn distance(&self) -> f64 {
        (self.target[0] - self.pos[0]).hypot(self.target[1] - self.pos[1])
    }

    fn log(&mut self, reward_terms: RewardTerms) {
        self.records.push(TrajectoryRecord {
            t: self.steps as f64 * self.config.dt,
            pose: [self.pos[0], self.pos[1], self.heading],
            joints: self.last_action,
            joints_desired: self.last_action,
            joint_rates: [0.0; ACT_DIM],
            v: [self.speed, 0.0],
            omega: self.omega,
            target: self.target,
            reward_terms,
            status: self.status,
        });
    }

    fn observe(&self) -> [f64; OBS_DIM] {
        Observation {
            v: [self.speed, 0.0],
            omega: self.omega,
            joints: self.last_action,
            joint_rates: [0.0; ACT_DIM],
            target: to_body_frame(self.pos, self.heading, self.target),
        }
        .to_array()
    }
}

/// Closest distance from `t` to the segment `a`-`b`.
fn segment_distance(a: [f64; 2], b: [f64; 2], t: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 > 0.0 {
        (((t[0] - a[0]) * d[0] + (t[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a[0] + s * d[0] - t[0]).hypot(a[1] + s * d[1] - t[1])
}

impl Environment for SanityEnv {
    fn action_limit(&self) -> f64 {
        1.0
    }

    fn reset(&mut self, seed: u64) -> Result<[f64; OBS_DIM]> {
        let c = &self.config;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (c.spawn_margin, c.size - c.spawn_margin);
        self.pos = [self.rng.random_range(lo..=hi), self.rng.random_range(lo..=hi)];
        self.heading = self.rng.random_range(-PI..PI);
        loop {
            self.target = [self.rng.random_range(lo..=hi), self.rng.random_range(lo..=hi)];
            if self.distance() >= c.min_target_distance {
                break;
            }
        }
        self.speed = 0.0;
        self.omega = 0.0;
        self.last_action = [0.0; ACT_DIM];
        self.steps = 0;
        self.status = EpisodeStatus::Running;
        self.records.clear();
        if self.record {
            self.log(Default::default());
        }
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64; ACT_DIM]) -> Result<StepOutcome> {
        if self.status.is_done() {
            return Err(Error::Config("step called on a finished episode".into()));
        }
        let c = self.config.clone();
        let a = action.map(|x| if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 });
        let d_prev = self.distance();
        self.omega = c.max_turn_rate * a[1];
        self.heading = wrap_angle(self.heading + self.omega * c.dt);
        self.speed += c.dt * (c.thrust * a[0] - c.drag * self.speed);
        let start = self.pos;
        let (s, co) = self.heading.sin_cos();
        self.pos = [
            start[0] + self.speed * co * c.dt,
            start[1] + self.speed * s * c.dt,
        ];
        self.last_action = a;
        self.steps += 1;
        let p = self.pos;
        self.status = if segment_distance(start, p, self.target) < c.success_radius {
            EpisodeStatus::Success
        } else if !(0.0..=c.size).contains(&p[0]) || !(0.0..=c.size).contains(&p[1]) {
            EpisodeStatus::Failed
        } else if self.steps >= c.t_max {
            EpisodeStatus::Truncated
        } else {
            EpisodeStatus::Running
        };
        let d = self.distance();
        let reward = compute_reward(d_prev, d, &[0.0; ACT_DIM], self.status);
        if self.record {
            self.log(reward);
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
        std::mem::take(&mut self.records)
    }
}

/// Turn toward the target at full rate, thrust once roughly aligned.
#[derive(Debug, Clone, Copy, Default)]
pub struct SanityController {
    /// Turn gain per radian of heading error, saturating at 1.
    pub turn_gain: f64,
}

impl SanityController {
    pub fn new() -> Self {
        Self { turn_gain: 2.0 }
    }
}

impl Controller for SanityController {
    fn reset(&mut self) {}

    fn act(&mut self, obs: &[f64; OBS_DIM]) -> [f64; ACT_DIM] {
        let o = Observation::from_array(obs);
        let err = o.target[1].atan2(o.target[0]);
        let turn = (self.turn_gain * err).clamp(-1.0, 1.0);
        let thrust = if err.abs() < PI / 3.0 { err.cos() } else { 0.0 };
        [thrust, turn, 0.0]
    }
}
