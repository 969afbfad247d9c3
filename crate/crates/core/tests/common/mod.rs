//! Oracles shared by the module tests and the acceptance suite. Each
//! returns the measured quantity; callers hold the thresholds.
#![allow(dead_code)]

use std::f64::consts::PI;

use fishswim_core::body::FishState;
use fishswim_core::calibrate::cross_correlation_lag;
use fishswim_core::coupling::{CoupledSim, SimConfig};
use fishswim_core::env::{ACT_DIM, OBS_DIM};
use fishswim_core::fluid::{Boundary, LatticeGrid};
use fishswim_core::sac::{ActionMode, Batch, ReplayBuffer, Sac, SacConfig, Transition};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn kinetic_energy(g: &LatticeGrid) -> f64 {
    (0..g.len())
        .map(|i| {
            let u = g.velocity_with_force(i);
            0.5 * g.density()[i] * (u[0] * u[0] + u[1] * u[1])
        })
        .sum()
}

/// L-inf error of a body-force driven channel relative to the analytic peak
/// speed. Periodic along x, bounce-back walls at y = -1/2 and ny - 1/2.
pub fn poiseuille_error(nx: usize, ny: usize, tau: f64, steps: usize) -> f64 {
    let g_acc = 1e-6;
    let mut g = LatticeGrid::new(nx, ny, tau, Boundary::Periodic, Boundary::Wall).unwrap();
    g.apply_body_force(&vec![[g_acc, 0.0]; nx * ny]).unwrap();
    for _ in 0..steps {
        g.collide_stream().unwrap();
    }
    let nu = (tau - 0.5) / 3.0;
    let h = ny as f64;
    let analytic = |y: f64| g_acc / (2.0 * nu) * (y + 0.5) * (h - 0.5 - y);
    let umax = analytic(0.5 * (h - 1.0));
    let x = nx / 2;
    (0..ny)
        .map(|y| (g.velocity_with_force(g.idx(x, y))[0] - analytic(y as f64)).abs())
        .fold(0.0, f64::max)
        / umax
}

/// Fitted and analytic kinetic-energy decay rates of a Taylor-Green vortex
/// on an n x n periodic grid.
pub fn taylor_green_rates(n: usize, tau: f64) -> (f64, f64) {
    let k = 2.0 * PI / n as f64;
    let u0 = 0.02;
    let mut g = LatticeGrid::new(n, n, tau, Boundary::Periodic, Boundary::Periodic).unwrap();
    g.set_equilibrium(|x, y| {
        let (x, y) = (x as f64 + 0.5, y as f64 + 0.5);
        let rho = 1.0 - 0.75 * u0 * u0 * ((2.0 * k * x).cos() + (2.0 * k * y).cos());
        (
            rho,
            [
                -u0 * (k * x).cos() * (k * y).sin(),
                u0 * (k * x).sin() * (k * y).cos(),
            ],
        )
    });
    let (t1, t2) = (100, 1500);
    let mut e1 = 0.0;
    for t in 1..=t2 {
        g.collide_stream().unwrap();
        if t == t1 {
            e1 = kinetic_energy(&g);
        }
    }
    let e2 = kinetic_energy(&g);
    let measured = (e1 / e2).ln() / (t2 - t1) as f64;
    let nu = (tau - 0.5) / 3.0;
    // velocity decays as exp(-2 nu k^2 t), energy at twice that rate
    (measured, 4.0 * nu * k * k)
}

pub fn perturbed(n: usize, bx: Boundary, by: Boundary) -> LatticeGrid {
    let mut g = LatticeGrid::new(n, n, 0.7, bx, by).unwrap();
    g.set_equilibrium(|x, y| {
        let (x, y) = (x as f64, y as f64);
        (
            1.0 + 0.01 * (0.3 * x).sin() * (0.2 * y).cos(),
            [0.03 * (0.1 * y).sin(), 0.02 * (0.15 * x).cos()],
        )
    });
    g
}

/// Relative mass change over 1000 steps of a perturbed 64 x 64 field.
pub fn mass_drift(bx: Boundary, by: Boundary) -> f64 {
    let mut g = perturbed(64, bx, by);
    let m0 = g.total_mass();
    for _ in 0..1000 {
        g.collide_stream().unwrap();
    }
    (g.total_mass() - m0).abs() / m0
}

/// Worst relative error of fluid plus body impulse over `steps` flapping
/// substeps.
pub fn worst_reciprocity_error(steps: usize) -> f64 {
    let cfg = SimConfig::pool(64, 1.2);
    let mut sim = CoupledSim::new(cfg, FishState::at_rest([0.85, 0.6], 0.0), 3).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * sim.dt();
        let j = std::array::from_fn(|i| 0.6 * (2.0 * PI * 1.5 * t - i as f64).sin());
        let r = sim.substep(j).unwrap();
        for i in 0..2 {
            let (a, b) = (r.fluid_impulse[i], r.body_impulse[i]);
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                worst = worst.max((a + b).abs() / scale);
            }
        }
    }
    worst
}

/// Per-substep joint angle after a 20 degree step command issued at
/// substep 25, with the given command delay in substeps.
pub fn step_response(delay: usize, substeps: usize) -> Vec<f64> {
    let cfg = SimConfig::pool(48, 0.9);
    let half = 0.5 * cfg.morphology.total_length();
    let mut sim = CoupledSim::new(cfg, FishState::at_rest([0.45 + half, 0.45], 0.0), delay).unwrap();
    let amp = 20f64.to_radians();
    (0..substeps)
        .map(|k| {
            let cmd = if k >= 25 { amp } else { 0.0 };
            sim.substep([cmd; 3]).unwrap();
            sim.state.joint_angles[2]
        })
        .collect()
}

/// Lag (substeps) of the delayed step response against the undelayed one,
/// by cross-correlation of the joint rates.
pub fn measured_delay(delay: usize) -> usize {
    let n = 150;
    let rate = |v: Vec<f64>| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
    let a = rate(step_response(0, n));
    let b = rate(step_response(delay, n));
    cross_correlation_lag(&a, &b, 60)
}

fn cfg(hidden: Vec<usize>) -> SacConfig {
    SacConfig {
        hidden,
        ..Default::default()
    }
}

/// Worst relative error of the analytic actor gradient against central
/// differences on a small f64 network.
pub fn actor_gradient_worst_error() -> (f64, usize) {
    let mut sac = Sac::<f64>::new(cfg(vec![4, 4]), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 8;
    let obs = Array2::from_shape_simple_fn((n, OBS_DIM), || rng.random_range(-1.0..1.0));
    let xi = Array2::from_shape_simple_fn((n, ACT_DIM), || rng.sample::<f64, _>(StandardNormal));
    let alpha = 0.2;
    let (_, grads, _) = sac.actor_loss_grad(obs.view(), xi.view(), alpha);
    let analytic: Vec<f64> = grads
        .weights
        .iter()
        .zip(&grads.biases)
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
        .collect();
    let mut params: Vec<f64> = sac.actor.flat_iter().collect();
    assert_eq!(params.len(), analytic.len());
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let orig = params[k];
        params[k] = orig + h;
        sac.actor.load_flat(&params);
        let lp = sac.actor_loss_grad(obs.view(), xi.view(), alpha).0;
        params[k] = orig - h;
        sac.actor.load_flat(&params);
        let lm = sac.actor_loss_grad(obs.view(), xi.view(), alpha).0;
        params[k] = orig;
        sac.actor.load_flat(&params);
        let fd = (lp - lm) / (2.0 * h);
        let rel = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3);
        worst = worst.max(rel);
    }
    (worst, params.len())
}

/// Largest `|Q - r|` of either critic after 5000 updates on a one-step
/// bandit with constant reward `r = 1`.
pub fn bandit_worst_error() -> f64 {
    let mut sac = Sac::<f32>::new(cfg(vec![32, 32]), 1).unwrap();
    let mut buf = ReplayBuffer::new(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let obs = [0.5; OBS_DIM];
    let r = 1.0;
    for _ in 0..1000 {
        let a = sac.sample_action(&obs, ActionMode::Stochastic, &mut rng).unit;
        buf.push(&Transition {
            obs,
            action: a,
            reward: r,
            next_obs: obs,
            done: true,
        });
    }
    for _ in 0..5000 {
        let idx = buf.sample_indices(64, &mut rng);
        sac.update(&Batch::from_buffer(&buf, &idx), &mut rng).unwrap();
    }
    let idx: Vec<usize> = (0..200).collect();
    let b = Batch::<f32>::from_buffer(&buf, &idx);
    let z = ndarray::concatenate![ndarray::Axis(1), b.obs.view(), b.action.view()];
    [&sac.q1, &sac.q2]
        .iter()
        .flat_map(|net| {
            net.forward(z.view())
                .iter()
                .map(|v| (*v as f64 - r).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// Result of fitting the default calibration search to synthetic step and
/// sine responses generated with `truth`.
pub struct Recovery {
    pub fitted: fishswim_core::calibrate::ServoParams,
    pub rmse: f64,
    pub amplitude: f64,
    pub seconds: f64,
    pub evaluations: usize,
}

pub fn calibration_recovery(truth: fishswim_core::calibrate::ServoParams) -> Recovery {
    use fishswim_core::calibrate::{fit_servo_params, run_excitation, CalibrationSetup, Excitation};
    let setup = CalibrationSetup::default();
    let amplitude = 20f64.to_radians();
    let refs = vec![
        (
            "step".to_string(),
            run_excitation(&setup, &Excitation::step(amplitude, 0.5, 2.0), &truth).unwrap(),
        ),
        (
            "sine".to_string(),
            run_excitation(&setup, &Excitation::sinusoid(amplitude, 1.0, 2.0), &truth).unwrap(),
        ),
    ];
    let t0 = std::time::Instant::now();
    let report = fit_servo_params(&setup, &refs).unwrap();
    Recovery {
        fitted: report.params,
        rmse: report.total_rmse,
        amplitude,
        seconds: t0.elapsed().as_secs_f64(),
        evaluations: report.evaluations,
    }
}
