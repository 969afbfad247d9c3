//! Open-loop servo response matching: excite the simulated fish, compare
//! joint traces with references, and fit servo gains and command latency.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{FishState, ServoModel, N_JOINTS};
use crate::coupling::{CoupledSim, SimConfig};
use crate::error::{Error, Result};

/// Sampling period of response traces (s).
pub const SAMPLE_PERIOD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExcitationKind {
    /// Zero before `at` seconds, the amplitude after.
    Step {
        at: f64,
    },
    Sinusoid {
        frequency: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub kind: ExcitationKind,
    /// rad
    pub amplitude: f64,
    /// s
    pub duration: f64,
}

impl Excitation {
    pub fn step(amplitude: f64, at: f64, duration: f64) -> Self {
        Self {
            kind: ExcitationKind::Step { at },
            amplitude,
            duration,
        }
    }

    pub fn sinusoid(amplitude: f64, frequency: f64, duration: f64) -> Self {
        Self {
            kind: ExcitationKind::Sinusoid { frequency },
            amplitude,
            duration,
        }
    }
}

/// Joint command per sample, shared by all three joints.
pub fn generate_excitation(ex: &Excitation, joint_limit: f64) -> Result<Vec<f64>> {
    if !(ex.amplitude.abs() <= joint_limit) {
        return Err(Error::Config(format!(
            "excitation amplitude {:.3} rad exceeds the joint limit {joint_limit:.3}",
            ex.amplitude
        )));
    }
    if !(ex.duration > 0.0) {
        return Err(Error::Config("excitation duration must be positive".into()));
    }
    let n = (ex.duration / SAMPLE_PERIOD).round() as usize;
    Ok((0..n)
        .map(|k| {
            let t = k as f64 * SAMPLE_PERIOD;
            match ex.kind {
                ExcitationKind::Step { at } => {
                    if t >= at - 1e-9 {
                        ex.amplitude
                    } else {
                        0.0
                    }
                }
                ExcitationKind::Sinusoid { frequency } => {
                    ex.amplitude * (std::f64::consts::TAU * frequency * t).sin()
                }
            }
        })
        .collect())
}

/// Commanded and measured joint angles sampled at 50 Hz.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResponseTrace {
    pub t: Vec<f64>,
    pub commanded: Vec<[f64; N_JOINTS]>,
    pub measured: Vec<[f64; N_JOINTS]>,
}

impl ResponseTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.commanded.len() != self.t.len() || self.measured.len() != self.t.len() {
            return Err(Error::Data("trace columns differ in length".into()));
        }
        for w in self.t.windows(2) {
            if !((w[1] - w[0] - SAMPLE_PERIOD).abs() < 1e-6) {
                return Err(Error::Data(format!(
                    "timestamps {} -> {} are not spaced {SAMPLE_PERIOD} s apart",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    /// Columns `t, j1_cmd, j1_pos, j2_cmd, j2_pos, j3_cmd, j3_pos`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "j1_cmd", "j1_pos", "j2_cmd", "j2_pos", "j3_cmd", "j3_pos"])?;
        for k in 0..self.len() {
            let mut row = vec![self.t[k]];
            for j in 0..N_JOINTS {
                row.push(self.commanded[k][j]);
                row.push(self.measured[k][j]);
            }
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut trace = Self::default();
        for rec in r.deserialize() {
            let row: [f64; 7] = rec?;
            trace.t.push(row[0]);
            trace.commanded.push([row[1], row[3], row[5]]);
            trace.measured.push([row[2], row[4], row[6]]);
        }
        trace.validate()?;
        Ok(trace)
    }
}

/// Every `*.csv` in `dir`, sorted by file name.
pub fn load_reference_dir(dir: &Path) -> Result<Vec<(String, ResponseTrace)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!(
            "no reference CSV files in {}",
            dir.display()
        )));
    }
    paths
        .into_iter()
        .map(|p| {
            let f = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, ResponseTrace::read_csv(f)?))
        })
        .collect()
}

/// The fitted quantities. The same gains apply to all joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoParams {
    pub kp: f64,
    pub kd: f64,
    /// s
    pub latency: f64,
}

impl ServoParams {
    pub fn apply(&self, base: &ServoModel) -> ServoModel {
        ServoModel {
            kp: [self.kp; N_JOINTS],
            kd: [self.kd; N_JOINTS],
            ..*base
        }
    }
}

/// Simulation used for open-loop runs: a small walled pool with the fish
/// straight and at rest in the middle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSetup {
    pub sim: SimConfig,
    pub initial: ServoParams,
    /// Coarse grid values.
    pub kp_grid: Vec<f64>,
    pub kd_grid: Vec<f64>,
    pub latency_grid: Vec<f64>,
    /// Upper bound on coordinate-descent sweeps after the grid search.
    pub refine_sweeps: usize,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

impl Default for CalibrationSetup {
    fn default() -> Self {
        let sim = SimConfig::pool(48, 0.9);
        let servo = ServoModel::default();
        Self {
            initial: ServoParams {
                kp: servo.kp[0],
                kd: servo.kd[0],
                latency: 0.068,
            },
            sim,
            kp_grid: log_grid(0.5, 20.0, 5),
            kd_grid: log_grid(0.01, 2.0, 5),
            latency_grid: (0..=6).map(|i| i as f64 * 0.02).collect(),
            refine_sweeps: 40,
        }
    }
}

/// Replay `commands` (one per sample) open loop and record joint feedback.
pub fn run_open_loop(
    setup: &CalibrationSetup,
    commands: &[[f64; N_JOINTS]],
    params: &ServoParams,
) -> Result<ResponseTrace> {
    let mut cfg = setup.sim.clone();
    cfg.servo = params.apply(&cfg.servo);
    let size = cfg.fluid.domain_size;
    let half = 0.5 * cfg.morphology.total_length();
    let fish = FishState::at_rest([0.5 * size[0] + half, 0.5 * size[1]], 0.0);
    let delay = (params.latency / cfg.dt).round() as usize;
    let per_sample = (SAMPLE_PERIOD / cfg.dt).round() as usize;
    let mut sim = CoupledSim::new(cfg, fish, delay)?;
    let mut trace = ResponseTrace::default();
    for (k, cmd) in commands.iter().enumerate() {
        trace.t.push(k as f64 * SAMPLE_PERIOD);
        trace.commanded.push(*cmd);
        trace.measured.push(sim.state.joint_angles);
        for _ in 0..per_sample {
            sim.substep(*cmd)?;
        }
    }
    Ok(trace)
}

/// Convenience: excitation applied to all joints.
pub fn run_excitation(
    setup: &CalibrationSetup,
    ex: &Excitation,
    params: &ServoParams,
) -> Result<ResponseTrace> {
    let cmds: Vec<[f64; N_JOINTS]> = generate_excitation(ex, setup.sim.morphology.joint_limit)?
        .into_iter()
        .map(|c| [c; N_JOINTS])
        .collect();
    run_open_loop(setup, &cmds, params)
}

/// Per-joint RMSE of measured angles.
pub fn response_error(sim: &ResponseTrace, reference: &ResponseTrace) -> Result<[f64; N_JOINTS]> {
    if sim.len() != reference.len() || sim.is_empty() {
        return Err(Error::Data(format!(
            "trace lengths differ or are empty: {} vs {}",
            sim.len(),
            reference.len()
        )));
    }
    if sim.t.iter().zip(&reference.t).any(|(a, b)| (a - b).abs() > 1e-6) {
        return Err(Error::Data("trace timestamps are not aligned".into()));
    }
    let n = sim.len() as f64;
    let mut out = [0.0; N_JOINTS];
    for (a, b) in sim.measured.iter().zip(&reference.measured) {
        for j in 0..N_JOINTS {
            out[j] += (a[j] - b[j]).powi(2);
        }
    }
    Ok(out.map(|s| (s / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResidual {
    pub name: String,
    /// rad, per joint
    pub rmse: [f64; N_JOINTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: ServoParams,
    /// RMS over all traces, joints and samples (rad).
    pub total_rmse: f64,
    pub initial_rmse: f64,
    pub residuals: Vec<TraceResidual>,
    pub evaluations: usize,
}

impl CalibrationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

struct Objective<'a> {
    setup: &'a CalibrationSetup,
    refs: &'a [(String, ResponseTrace)],
}

impl Objective<'_> {
    fn residuals(&self, p: &ServoParams) -> Result<Vec<[f64; N_JOINTS]>> {
        self.refs
            .iter()
            .map(|(_, r)| response_error(&run_open_loop(self.setup, &r.commanded, p)?, r))
            .collect()
    }

    fn total(&self, p: &ServoParams) -> f64 {
        match self.residuals(p) {
            Ok(res) => {
                let n: usize = self.refs.iter().map(|(_, r)| r.len() * N_JOINTS).sum();
                let sq: f64 = res
                    .iter()
                    .zip(self.refs)
                    .map(|(e, (_, r))| e.iter().map(|v| v * v * r.len() as f64).sum::<f64>())
                    .sum();
                (sq / n as f64).sqrt()
            }
            // a candidate that breaks the solver is simply a bad fit
            Err(_) => f64::INFINITY,
        }
    }

    /// Multiplicative coordinate descent on kp and kd at fixed latency.
    fn fit_gains(
        &self,
        start: (f64, ServoParams),
        mut step: f64,
        sweeps: usize,
        evaluations: &mut usize,
    ) -> (f64, ServoParams) {
        let mut best = start;
        for _ in 0..sweeps {
            let mut improved = false;
            for axis in 0..2 {
                loop {
                    let p = best.1;
                    let trials = if axis == 0 {
                        [
                            ServoParams { kp: p.kp * step, ..p },
                            ServoParams { kp: p.kp / step, ..p },
                        ]
                    } else {
                        [
                            ServoParams { kd: p.kd * step, ..p },
                            ServoParams { kd: p.kd / step, ..p },
                        ]
                    };
                    let mut moved = false;
                    for t in trials {
                        let s = (self.total(&t), t);
                        *evaluations += 1;
                        if s.0 < best.0 {
                            best = s;
                            moved = true;
                            improved = true;
                        }
                    }
                    if !moved {
                        break;
                    }
                }
            }
            if !improved {
                step = step.sqrt();
                if step < 1.01 {
                    break;
                }
            }
        }
        best
    }
}

fn lex_less(a: &(f64, ServoParams), b: &(f64, ServoParams)) -> bool {
    let ka = (a.1.kp, a.1.kd, a.1.latency);
    let kb = (b.1.kp, b.1.kd, b.1.latency);
    a.0 < b.0 || (a.0 == b.0 && ka < kb)
}

/// Grid search over (kp, kd, latency), then a substep-resolution latency
/// walk with the gains refitted at every latency.
pub fn fit_servo_params(
    setup: &CalibrationSetup,
    refs: &[(String, ResponseTrace)],
) -> Result<CalibrationReport> {
    if refs.is_empty() {
        return Err(Error::Data("no reference traces to fit".into()));
    }
    for (name, r) in refs {
        r.validate()
            .map_err(|e| Error::Data(format!("reference {name}: {e}")))?;
    }
    let obj = Objective { setup, refs };
    let initial_rmse = obj.total(&setup.initial);
    let mut evaluations = 1;

    let mut candidates = Vec::new();
    for &kp in &setup.kp_grid {
        for &kd in &setup.kd_grid {
            for &latency in &setup.latency_grid {
                candidates.push(ServoParams { kp, kd, latency });
            }
        }
    }
    let scored: Vec<(f64, ServoParams)> = candidates.par_iter().map(|p| (obj.total(p), *p)).collect();
    evaluations += scored.len();
    let mut best = (initial_rmse, setup.initial);
    let mut grid_best: Option<(f64, ServoParams)> = None;
    for s in &scored {
        if grid_best.is_none_or(|g| lex_less(s, &g)) {
            grid_best = Some(*s);
        }
    }
    // the initial guess wins ties
    if let Some(g) = grid_best.filter(|g| g.0 < initial_rmse) {
        best = g;
    }

    // Gains and latency trade off against each other, so latency moves one
    // substep at a time and every candidate latency gets its own gain fit.
    if setup.refine_sweeps > 0 {
        best = obj.fit_gains(best, 1.5, setup.refine_sweeps, &mut evaluations);
        let lat_step = setup.sim.dt;
        let slot = |l: f64| (l / lat_step).round() as i64;
        let mut profiled = vec![slot(best.1.latency)];
        for _ in 0..setup.refine_sweeps {
            let p = best.1;
            let mut moved = false;
            for latency in [p.latency + lat_step, p.latency - lat_step] {
                if latency < -1e-12 || profiled.contains(&slot(latency)) {
                    continue;
                }
                profiled.push(slot(latency));
                let start = ServoParams {
                    latency: latency.max(0.0),
                    ..p
                };
                evaluations += 1;
                // neighbours start close to their optimum, so smaller first steps
                let cand = obj.fit_gains(
                    (obj.total(&start), start),
                    1.05,
                    setup.refine_sweeps,
                    &mut evaluations,
                );
                if cand.0 < best.0 {
                    best = cand;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }
    if !(best.0 < initial_rmse) {
        log::warn!("calibration did not improve on the initial guess (rmse {initial_rmse:.4})");
    }
    let res = obj.residuals(&best.1)?;
    Ok(CalibrationReport {
        params: best.1,
        total_rmse: best.0,
        initial_rmse,
        residuals: refs
            .iter()
            .zip(res)
            .map(|((name, _), rmse)| TraceResidual {
                name: name.clone(),
                rmse,
            })
            .collect(),
        evaluations,
    })
}

/// Lag (in samples, `0..=max_lag`) maximising the cross-correlation of
/// `b` delayed against `a`.
pub fn cross_correlation_lag(a: &[f64], b: &[f64], max_lag: usize) -> usize {
    let n = a.len().min(b.len());
    let mean = |x: &[f64]| x[..n].iter().sum::<f64>() / n as f64;
    let (ma, mb) = (mean(a), mean(b));
    let mut best = (f64::NEG_INFINITY, 0);
    for lag in 0..=max_lag.min(n.saturating_sub(1)) {
        let c: f64 = (0..n - lag).map(|i| (a[i] - ma) * (b[i + lag] - mb)).sum::<f64>() / (n - lag) as f64;
        if c > best.0 {
            best = (c, lag);
        }
    }
    best.1
}
