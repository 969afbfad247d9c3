use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sanity::SanityConfig;
use crate::baseline::BaselineConfig;
use crate::calibrate::{CalibrationSetup, ServoParams};
use crate::coupling::SimConfig;
use crate::env::{EnvConfig, RandomizationConfig};
use crate::error::{Error, Result};
use crate::sac::SacConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Fish,
    Sanity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub kind: EnvKind,
    /// Cells per side of the square pool.
    pub grid: usize,
    /// Side of the pool (m).
    pub domain_size: f64,
    pub t_max: usize,
    pub success_radius: f64,
    pub spawn_margin: f64,
    pub min_target_distance: f64,
    pub randomization: RandomizationConfig,
    /// Calibrated servo gains and latency; the latency replaces the mean of
    /// the randomised latency interval.
    pub servo: Option<ServoParams>,
    pub sanity: SanityConfig,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            kind: EnvKind::Fish,
            grid: 96,
            domain_size: 1.8,
            t_max: e.t_max,
            success_radius: e.success_radius,
            spawn_margin: e.spawn_margin,
            min_target_distance: e.min_target_distance,
            randomization: e.randomization,
            servo: None,
            sanity: SanityConfig::default(),
        }
    }
}

impl EnvSection {
    pub fn fish_config(&self) -> EnvConfig {
        let mut sim = SimConfig::pool(self.grid, self.domain_size);
        let mut randomization = self.randomization;
        if let Some(p) = self.servo {
            sim.servo = p.apply(&sim.servo);
            randomization.latency_mean = p.latency;
        }
        EnvConfig {
            t_max: self.t_max,
            success_radius: self.success_radius,
            spawn_margin: self.spawn_margin,
            min_target_distance: self.min_target_distance,
            sim,
            randomization,
            ..EnvConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub total_steps: usize,
    /// Evaluation trajectories stored with every checkpoint.
    pub snapshot_episodes: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            total_steps: 150_000,
            snapshot_episodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Paired trials for `compare`.
    pub trials: usize,
    /// Episode horizon for evaluation tasks (s).
    pub max_time: f64,
    /// Requested distance of the U-turn target behind the nose (m); clipped
    /// to what fits in the pool.
    pub uturn_distance: f64,
    /// Pentagram circumradius (m); defaults to a third of the pool side.
    pub pentagram_radius: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 50,
            trials: 3,
            max_time: 60.0,
            uturn_distance: 1.5,
            pentagram_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub grid: usize,
    pub domain_size: f64,
    pub initial: ServoParams,
    pub kp_range: [f64; 2],
    pub kd_range: [f64; 2],
    pub latency_max: f64,
    /// Grid points per gain axis.
    pub grid_points: usize,
    pub refine_sweeps: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let s = CalibrationSetup::default();
        Self {
            grid: s.sim.nx,
            domain_size: s.sim.fluid.domain_size[0],
            initial: s.initial,
            kp_range: [s.kp_grid[0], *s.kp_grid.last().unwrap()],
            kd_range: [s.kd_grid[0], *s.kd_grid.last().unwrap()],
            latency_max: *s.latency_grid.last().unwrap(),
            grid_points: s.kp_grid.len(),
            refine_sweeps: s.refine_sweeps,
        }
    }
}

fn log_grid(r: [f64; 2], n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![r[0]];
    }
    (0..n)
        .map(|i| r[0] * (r[1] / r[0]).powf(i as f64 / (n - 1) as f64))
        .collect()
}

impl CalibrationSection {
    pub fn setup(&self) -> Result<CalibrationSetup> {
        let ok = self.kp_range[0] > 0.0
            && self.kp_range[1] >= self.kp_range[0]
            && self.kd_range[0] > 0.0
            && self.kd_range[1] >= self.kd_range[0]
            && self.latency_max >= 0.0
            && self.grid_points > 0;
        if !ok {
            return Err(Error::Config(
                "calibration ranges must be positive and ordered".into(),
            ));
        }
        let sim = SimConfig::pool(self.grid, self.domain_size);
        let n_lat = (self.latency_max / 0.02).round() as usize;
        Ok(CalibrationSetup {
            latency_grid: (0..=n_lat).map(|i| i as f64 * 0.02).collect(),
            sim,
            initial: self.initial,
            kp_grid: log_grid(self.kp_range, self.grid_points),
            kd_grid: log_grid(self.kd_range, self.grid_points),
            refine_sweeps: self.refine_sweeps,
        })
    }
}

/// Everything a command needs; every block is optional in the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvSection,
    pub sac: SacConfig,
    pub baseline: BaselineConfig,
    pub calibration: CalibrationSection,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parse and validate. `origin` names the source in error messages.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fish = self.env.fish_config();
        fish.validate()?;
        self.sac.validate()?;
        self.baseline.validate(fish.sim.morphology.joint_limit)?;
        if self.eval.episodes == 0 || self.eval.trials == 0 || !(self.eval.max_time > 0.0) {
            return Err(Error::Config(
                "eval episodes, trials and max_time must be positive".into(),
            ));
        }
        self.calibration.setup()?;
        Ok(())
    }
}
