//! CPG-PID baseline: sinusoidal joint pattern with a PID heading loop that
//! steers through a shared joint offset.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::body::wrap_angle;
use crate::env::{Controller, Observation, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};

/// Time constant of the parameter smoother (s).
pub const CPG_SMOOTHING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpgParams {
    /// Hz
    pub frequency: f64,
    /// rad
    pub amplitudes: [f64; ACT_DIM],
    /// rad
    pub phases: [f64; ACT_DIM],
    /// Turning bias shared by all joints (rad).
    pub offset: f64,
}

impl Default for CpgParams {
    fn default() -> Self {
        Self {
            frequency: 1.5,
            amplitudes: [15f64.to_radians(), 20f64.to_radians(), 30f64.to_radians()],
            phases: [0.0, (-60f64).to_radians(), (-120f64).to_radians()],
            offset: 0.0,
        }
    }
}

impl CpgParams {
    pub fn max_amplitude(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn validate(&self, joint_limit: f64) -> Result<()> {
        if !(self.frequency >= 0.0) || self.amplitudes.iter().any(|a| *a < 0.0) {
            return Err(Error::Config(
                "CPG frequency and amplitudes must be non-negative".into(),
            ));
        }
        if self.offset.abs() + self.max_amplitude() > joint_limit + 1e-12 {
            return Err(Error::Config(format!(
                "CPG offset {:.3} plus amplitude {:.3} exceeds the joint limit {joint_limit:.3}",
                self.offset,
                self.max_amplitude()
            )));
        }
        Ok(())
    }
}

/// Sinusoidal pattern generator with first-order smoothing of parameter
/// changes. The phase is integrated, so frequency changes are continuous.
#[derive(Debug, Clone)]
pub struct Cpg {
    target: CpgParams,
    current: CpgParams,
    phase: f64,
    time: f64,
}

impl Cpg {
    pub fn new(params: CpgParams) -> Self {
        Self {
            target: params,
            current: params,
            phase: 0.0,
            time: 0.0,
        }
    }

    pub fn set_params(&mut self, params: CpgParams) {
        self.target = params;
    }

    pub fn target(&self) -> &CpgParams {
        &self.target
    }

    /// Smoothed parameters in effect.
    pub fn current(&self) -> &CpgParams {
        &self.current
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Joint commands at the current time.
    pub fn output(&self) -> [f64; ACT_DIM] {
        let c = &self.current;
        std::array::from_fn(|i| c.offset + c.amplitudes[i] * (self.phase + c.phases[i]).sin())
    }

    /// Advance by `dt` and return the commands at the new time.
    pub fn advance(&mut self, dt: f64) -> [f64; ACT_DIM] {
        let k = 1.0 - (-dt / CPG_SMOOTHING).exp();
        let (c, t) = (&mut self.current, &self.target);
        c.offset += k * (t.offset - c.offset);
        for i in 0..ACT_DIM {
            c.amplitudes[i] += k * (t.amplitudes[i] - c.amplitudes[i]);
            c.phases[i] += k * (t.phases[i] - c.phases[i]);
        }
        // trapezoid on the frequency keeps constant-f phase exact
        let f0 = c.frequency;
        c.frequency += k * (t.frequency - c.frequency);
        self.phase = (self.phase + PI * (f0 + c.frequency) * dt) % TAU;
        self.time += dt;
        self.output()
    }
}

/// Stateless form for constant parameters.
pub fn cpg_output(params: &CpgParams, t: f64) -> [f64; ACT_DIM] {
    std::array::from_fn(|i| {
        params.offset + params.amplitudes[i] * (TAU * params.frequency * t + params.phases[i]).sin()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Output saturation (rad).
    pub limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 1.2,
            ki: 0.05,
            kd: 0.1,
            limit: 30f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    pub gains: PidGains,
    integral: f64,
    prev_error: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: 0.0,
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Clamped PID output for a wrapped error. The derivative of the first
    /// sample is zero.
    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        let g = self.gains;
        self.integral += error * dt;
        if g.ki > 0.0 {
            let bound = g.limit / g.ki;
            self.integral = self.integral.clamp(-bound, bound);
        }
        let deriv = match self.prev_error {
            Some(p) if dt > 0.0 => wrap_angle(error - p) / dt,
            _ => 0.0,
        };
        self.prev_error = Some(error);
        (g.kp * error + g.ki * self.integral + g.kd * deriv).clamp(-g.limit, g.limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub cpg: CpgParams,
    pub pid: PidGains,
    /// Amplitudes scale down linearly inside this distance (m).
    pub slowdown_radius: f64,
    /// Control period (s).
    pub dt: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            cpg: CpgParams::default(),
            pid: PidGains::default(),
            slowdown_radius: 0.3,
            dt: 0.02,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self, joint_limit: f64) -> Result<()> {
        let worst = CpgParams {
            offset: self.pid.limit,
            ..self.cpg
        };
        worst.validate(joint_limit)?;
        if !(self.dt > 0.0) || !(self.slowdown_radius >= 0.0) {
            return Err(Error::Config(
                "baseline dt and slowdown radius must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Heading error toward a body-frame target, in (-pi, pi].
pub fn heading_error(target_body: [f64; 2]) -> f64 {
    target_body[1].atan2(target_body[0])
}

/// CPG-PID waypoint tracker.
#[derive(Debug, Clone)]
pub struct WaypointController {
    pub config: BaselineConfig,
    cpg: Cpg,
    pid: Pid,
}

impl WaypointController {
    pub fn new(config: BaselineConfig) -> Self {
        let mut start = config.cpg;
        start.offset = 0.0;
        Self {
            cpg: Cpg::new(start),
            pid: Pid::new(config.pid),
            config,
        }
    }

    pub fn cpg(&self) -> &Cpg {
        &self.cpg
    }
}

impl Controller for WaypointController {
    fn reset(&mut self) {
        *self = Self::new(self.config.clone());
    }

    fn act(&mut self, obs: &[f64; OBS_DIM]) -> [f64; ACT_DIM] {
        let o = Observation::from_array(obs);
        let err = heading_error(o.target);
        let beta = self.pid.update(err, self.config.dt);
        let d = o.target[0].hypot(o.target[1]);
        let scale = if self.config.slowdown_radius > 0.0 {
            (d / self.config.slowdown_radius).min(1.0)
        } else {
            1.0
        };
        let mut p = self.config.cpg;
        p.offset = beta;
        p.amplitudes = p.amplitudes.map(|a| a * scale);
        self.cpg.set_params(p);
        self.cpg.advance(self.config.dt)
    }
}
