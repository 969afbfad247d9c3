use serde::{Deserialize, Serialize};

use super::N_JOINTS;

/// PD surrogate of the joint servos.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoModel {
    /// N m / rad
    pub kp: [f64; N_JOINTS],
    /// N m s / rad
    pub kd: [f64; N_JOINTS],
    /// N m, 17 kg cm by default.
    pub torque_limit: f64,
    /// rad/s, 60 deg per 0.2 s by default.
    pub speed_limit: f64,
    /// Gearbox-reflected rotor inertia (kg m^2).
    #[serde(default = "default_armature")]
    pub armature: f64,
}

/// Reflected rotor inertia of a hobby servo with a few-hundred-to-one
/// gearbox.
pub const DEFAULT_ARMATURE: f64 = 0.01;

fn default_armature() -> f64 {
    DEFAULT_ARMATURE
}

/// 17 kg cm in N m.
pub const DEFAULT_TORQUE_LIMIT: f64 = 17.0 * 9.80665 / 100.0;
/// 60 deg / 0.2 s in rad/s.
pub const DEFAULT_SPEED_LIMIT: f64 = std::f64::consts::PI / 3.0 / 0.2;

impl Default for ServoModel {
    fn default() -> Self {
        Self {
            kp: [2.0; N_JOINTS],
            kd: [0.05; N_JOINTS],
            torque_limit: DEFAULT_TORQUE_LIMIT,
            speed_limit: DEFAULT_SPEED_LIMIT,
            armature: DEFAULT_ARMATURE,
        }
    }
}

impl ServoModel {
    pub fn uniform(kp: f64, kd: f64) -> Self {
        Self {
            kp: [kp; N_JOINTS],
            kd: [kd; N_JOINTS],
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kp.iter().chain(&self.kd).all(|g| *g > 0.0 && g.is_finite())
            && self.torque_limit > 0.0
            && self.speed_limit > 0.0
            && self.armature >= 0.0
    }
}

/// Saturated PD torque with speed gating: once a joint is at or above the
/// speed limit, torque that would accelerate it further is dropped.
pub fn servo_torque(
    model: &ServoModel,
    desired: &[f64; N_JOINTS],
    angles: &[f64; N_JOINTS],
    velocities: &[f64; N_JOINTS],
) -> [f64; N_JOINTS] {
    let mut t = [0.0; N_JOINTS];
    for i in 0..N_JOINTS {
        let raw = model.kp[i] * (desired[i] - angles[i]) - model.kd[i] * velocities[i];
        let mut ti = raw.clamp(-model.torque_limit, model.torque_limit);
        if velocities[i].abs() >= model.speed_limit && ti * velocities[i] > 0.0 {
            ti = 0.0;
        }
        t[i] = ti;
    }
    t
}

/// Command history that replays commands a fixed number of fluid substeps
/// late.
#[derive(Debug, Clone)]
pub struct LatencyBuffer {
    history: Vec<[f64; N_JOINTS]>,
    delay_steps: usize,
    initial: [f64; N_JOINTS],
    pushed: usize,
}

impl LatencyBuffer {
    /// `capacity` must cover the largest delay the buffer will be used with.
    pub fn new(delay_steps: usize, capacity: usize, initial: [f64; N_JOINTS]) -> Self {
        let cap = capacity.max(delay_steps) + 1;
        Self {
            history: vec![initial; cap],
            delay_steps,
            initial,
            pushed: 0,
        }
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn capacity(&self) -> usize {
        self.history.len() - 1
    }

    /// Number of substeps recorded so far; the next push gets this index.
    pub fn len(&self) -> usize {
        self.pushed
    }

    pub fn is_empty(&self) -> bool {
        self.pushed == 0
    }

    /// Record the command issued at the next substep index.
    pub fn push_command(&mut self, command: [f64; N_JOINTS]) {
        let n = self.history.len();
        self.history[self.pushed % n] = command;
        self.pushed += 1;
    }

    /// Command in force at substep `t`: the one recorded at `t - delay`, or
    /// the initial pose before enough history exists.
    pub fn delayed_command(&self, t: usize) -> [f64; N_JOINTS] {
        if t < self.delay_steps {
            return self.initial;
        }
        let src = t - self.delay_steps;
        debug_assert!(src < self.pushed, "command at substep {src} not recorded yet");
        debug_assert!(self.pushed - src <= self.history.len());
        self.history[src % self.history.len()]
    }

    /// Push `command` at the next index and return the command in force there.
    pub fn advance(&mut self, command: [f64; N_JOINTS]) -> [f64; N_JOINTS] {
        let t = self.pushed;
        self.push_command(command);
        self.delayed_command(t)
    }
}
