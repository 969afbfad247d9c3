use serde::{Deserialize, Serialize};

use super::{interpolate_velocity, spread_force, ForcingParams, MarkerForces};
use crate::body::{
    ChainDynamics, FishState, LatencyBuffer, Marker, MarkerLayout, Mat6, Morphology, ServoModel, Vec6, DOF,
    N_JOINTS,
};
use crate::error::{Error, Result};
use crate::fluid::{unit_convert, viscosity_for_tau, Boundary, FluidParams, LatticeGrid, LatticeScaling};

/// Relaxation time used when no viscosity is configured.
pub const DEFAULT_TAU: f64 = 0.55;

/// Largest command delay (substeps) any simulation is built to hold.
const LATENCY_CAPACITY: usize = 64;

/// Servo solve passes before giving up on consistent saturation flags.
const SERVO_PASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub nx: usize,
    pub ny: usize,
    pub fluid: FluidParams,
    /// Fluid substep (s).
    pub dt: f64,
    /// Out-of-plane depth of the fluid slab (m). Defaults to the depth at
    /// which the fish is neutrally buoyant.
    #[serde(default)]
    pub slab_depth: Option<f64>,
    pub boundary_x: Boundary,
    pub boundary_y: Boundary,
    pub morphology: Morphology,
    pub servo: ServoModel,
}

impl SimConfig {
    /// Square walled pool of side `size` on an `n x n` grid, water density,
    /// viscosity chosen for [`DEFAULT_TAU`].
    pub fn pool(n: usize, size: f64) -> Self {
        let dt = 0.004;
        let dx = size / n as f64;
        Self {
            nx: n,
            ny: n,
            fluid: FluidParams {
                physical_density: 1000.0,
                kinematic_viscosity: viscosity_for_tau(DEFAULT_TAU, dx, dt),
                domain_size: [size, size],
                slip_ratio: 0.0,
            },
            dt,
            slab_depth: None,
            boundary_x: Boundary::Wall,
            boundary_y: Boundary::Wall,
            morphology: Morphology::default(),
            servo: ServoModel::default(),
        }
    }

    pub fn resolved_slab_depth(&self) -> f64 {
        self.slab_depth.unwrap_or_else(|| {
            self.morphology.total_mass() / (self.fluid.physical_density * self.morphology.outline_area())
        })
    }
}

/// Per-substep bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubstepReport {
    pub forces: MarkerForces,
    /// Servo command in force after latency.
    pub command: [f64; N_JOINTS],
    pub joint_torques: [f64; N_JOINTS],
    /// Impulse given to the fluid (N s).
    pub fluid_impulse: [f64; 2],
    /// Impulse given to the body (N s).
    pub body_impulse: [f64; 2],
}

/// Fluid pool with one fish in it.
#[derive(Debug, Clone)]
pub struct CoupledSim {
    pub config: SimConfig,
    pub grid: LatticeGrid,
    pub scaling: LatticeScaling,
    pub dynamics: ChainDynamics,
    pub layout: MarkerLayout,
    pub state: FishState,
    forcing: ForcingParams,
    latency: LatencyBuffer,
    substeps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ServoMode {
    Linear,
    Fixed(f64),
}

impl CoupledSim {
    pub fn new(config: SimConfig, state: FishState, delay_steps: usize) -> Result<Self> {
        if !config.servo.is_valid() {
            return Err(Error::Config("servo gains and limits must be positive".into()));
        }
        if delay_steps > LATENCY_CAPACITY {
            return Err(Error::Config(format!(
                "latency of {delay_steps} substeps exceeds the supported {LATENCY_CAPACITY}"
            )));
        }
        let scaling = unit_convert(&config.fluid, config.nx, config.ny, config.dt)?;
        let mut grid = LatticeGrid::new(
            config.nx,
            config.ny,
            scaling.tau,
            config.boundary_x,
            config.boundary_y,
        )?;
        grid.dx = scaling.dx;
        grid.dt_fluid = scaling.dt;
        let slab_depth = config.resolved_slab_depth();
        if !(slab_depth > 0.0 && slab_depth.is_finite()) {
            return Err(Error::Config(format!("slab depth {slab_depth} must be positive")));
        }
        let forcing = ForcingParams {
            density: config.fluid.physical_density,
            dt: config.dt,
            dx: scaling.dx,
            slab_depth,
        };
        let mut dynamics = ChainDynamics::new(&config.morphology);
        dynamics.armature = config.servo.armature;
        let layout = MarkerLayout::new(&config.morphology, scaling.dx);
        let latency = LatencyBuffer::new(delay_steps, LATENCY_CAPACITY, state.joint_angles);
        Ok(Self {
            config,
            grid,
            scaling,
            dynamics,
            layout,
            state,
            forcing,
            latency,
            substeps: 0,
        })
    }

    /// Quiescent fluid, new fish state and latency; allocations are reused.
    pub fn reset(&mut self, state: FishState, delay_steps: usize) -> Result<()> {
        if delay_steps > LATENCY_CAPACITY {
            return Err(Error::Config(format!(
                "latency of {delay_steps} substeps exceeds the supported {LATENCY_CAPACITY}"
            )));
        }
        self.grid.reset_to_rest();
        self.state = state;
        self.latency = LatencyBuffer::new(delay_steps, LATENCY_CAPACITY, state.joint_angles);
        self.substeps = 0;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn time(&self) -> f64 {
        self.substeps as f64 * self.config.dt
    }

    pub fn substeps(&self) -> u64 {
        self.substeps
    }

    pub fn slab_depth(&self) -> f64 {
        self.forcing.slab_depth
    }

    pub fn forcing(&self) -> &ForcingParams {
        &self.forcing
    }

    pub fn latency_steps(&self) -> usize {
        self.latency.delay_steps()
    }

    /// Fluid momentum in N s.
    pub fn fluid_momentum(&self) -> [f64; 2] {
        let m = self.grid.total_momentum();
        let s = self.forcing.density * self.scaling.dx.powi(3) * self.forcing.slab_depth / self.config.dt;
        [m[0] * s, m[1] * s]
    }

    /// Body linear momentum in N s and angular momentum about its centre of
    /// mass.
    pub fn body_momentum(&self) -> [f64; 3] {
        let (q, qd) = self.state.generalized();
        self.dynamics.momentum(&self.dynamics.kinematics(&q), &qd)
    }

    /// Current outline markers.
    pub fn markers(&self) -> Vec<Marker> {
        crate::body::marker_geometry(&self.config.morphology, &self.layout, &self.state).markers
    }

    /// One coupled fluid-body substep with the joint command `j_des`, which
    /// reaches the servos after the configured latency.
    pub fn substep(&mut self, j_des: [f64; N_JOINTS]) -> Result<SubstepReport> {
        let command = self.latency.advance(j_des);
        let dt = self.config.dt;
        let (q, qd) = self.state.generalized();
        let dynamics = &self.dynamics;
        let kin = dynamics.kinematics(&q);

        let points = &self.layout.points;
        let positions: Vec<[f64; 2]> = points.iter().map(|p| kin.point(p.link, p.s, p.w)).collect();
        let fluid_u = interpolate_velocity(&self.grid, &positions)?;

        // Hydrodynamic stiffness enters the velocity solve implicitly.
        let mass = dynamics.mass_matrix(&kin);
        let bias = dynamics.bias(&kin, &qd);
        let qd_v = Vec6::from_column_slice(&qd);
        let mut damping = Mat6::zeros();
        let mut rhs = mass * qd_v - bias * dt;
        let mut jacobians = Vec::with_capacity(points.len());
        for (p, u) in points.iter().zip(&fluid_u) {
            let jac = kin.point_jacobian(p.link, p.s, p.w);
            let k = self.forcing.stiffness(p.ds);
            for r in 0..DOF {
                rhs[r] += dt * k * (jac[0][r] * u[0] + jac[1][r] * u[1]);
                for c in 0..DOF {
                    damping[(r, c)] += k * (jac[0][r] * jac[0][c] + jac[1][r] * jac[1][c]);
                }
            }
            jacobians.push(jac);
        }

        // Servo PD, implicit in the new joint velocity unless saturated.
        let servo = &self.config.servo;
        let angles = self.state.joint_angles;
        let speeds = self.state.joint_velocities;
        let mut modes = [ServoMode::Linear; N_JOINTS];
        let mut qd_new = [0.0; DOF];
        let mut torques = [0.0; N_JOINTS];
        for pass in 0..SERVO_PASSES {
            let mut d = damping;
            let mut b = rhs;
            for j in 0..N_JOINTS {
                match modes[j] {
                    ServoMode::Linear => {
                        d[(3 + j, 3 + j)] += servo.kd[j] + servo.kp[j] * dt;
                        b[3 + j] += dt * servo.kp[j] * (command[j] - angles[j]);
                    }
                    ServoMode::Fixed(t) => b[3 + j] += dt * t,
                }
            }
            qd_new = dynamics.solve_velocity(&mass, &d, &b, dt)?;
            let mut changed = false;
            for j in 0..N_JOINTS {
                torques[j] = match modes[j] {
                    ServoMode::Fixed(t) => t,
                    ServoMode::Linear => {
                        servo.kp[j] * (command[j] - angles[j])
                            - (servo.kd[j] + servo.kp[j] * dt) * qd_new[3 + j]
                    }
                };
                if let ServoMode::Linear = modes[j] {
                    let t = torques[j];
                    let gated = speeds[j].abs() >= servo.speed_limit && t * speeds[j] > 0.0;
                    if gated {
                        modes[j] = ServoMode::Fixed(0.0);
                        changed = true;
                    } else if t.abs() > servo.torque_limit {
                        modes[j] = ServoMode::Fixed(t.clamp(-servo.torque_limit, servo.torque_limit));
                        changed = true;
                    }
                }
            }
            if !changed || pass + 1 == SERVO_PASSES {
                break;
            }
        }

        // The gearbox cannot exceed its no-load speed.
        for j in 0..N_JOINTS {
            qd_new[3 + j] = qd_new[3 + j].clamp(-servo.speed_limit, servo.speed_limit);
        }

        // Marker forces from the solved body velocity.
        let com = dynamics.com(&kin);
        let forces: Vec<[f64; 2]> = points
            .iter()
            .zip(&fluid_u)
            .zip(&jacobians)
            .map(|((p, u), jac)| {
                let k = self.forcing.stiffness(p.ds);
                let mut v = [0.0; 2];
                for r in 0..2 {
                    v[r] = (0..DOF).map(|c| jac[r][c] * qd_new[c]).sum();
                }
                [k * (u[0] - v[0]), k * (u[1] - v[1])]
            })
            .collect();
        let forces = MarkerForces::from_forces(forces, &positions, com);

        let p0 = dynamics.momentum(&kin, &qd);
        let target = [
            p0[0] + dt * forces.total_force[0],
            p0[1] + dt * forces.total_force[1],
            p0[2] + dt * forces.total_torque_about_com,
        ];
        let (q1, qd1) = dynamics.integrate(&q, &qd_new, target, dt)?;

        self.grid.clear_body_force();
        let added = spread_force(&mut self.grid, &positions, &forces, &self.forcing)?;
        self.grid.collide_stream()?;

        self.state = FishState::from_generalized(&q1, &qd1);
        self.substeps += 1;
        Ok(SubstepReport {
            command,
            joint_torques: torques,
            fluid_impulse: [added[0] * dt, added[1] * dt],
            body_impulse: [forces.total_force[0] * dt, forces.total_force[1] * dt],
            forces,
        })
    }
}

/// Advance `sim` by one substep; see [`CoupledSim::substep`].
pub fn coupled_substep(sim: &mut CoupledSim, j_des: [f64; N_JOINTS]) -> Result<SubstepReport> {
    sim.substep(j_des)
}
