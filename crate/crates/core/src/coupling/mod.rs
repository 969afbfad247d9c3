//! Direct-forcing immersed boundary coupling between the fish outline and
//! the lattice fluid, and the coupled fluid-body time step.

mod kernel;
mod sim;

pub use kernel::{delta4, stencil, Stencil};
pub use sim::{coupled_substep, CoupledSim, SimConfig, SubstepReport, DEFAULT_TAU};

use crate::body::Marker;
use crate::error::{Error, Result};
use crate::fluid::LatticeGrid;

/// Material constants needed to turn velocity mismatch into force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingParams {
    /// kg/m^3
    pub density: f64,
    /// s
    pub dt: f64,
    /// Fluid cell size (m).
    pub dx: f64,
    /// Out-of-plane depth of the 2D slab (m).
    pub slab_depth: f64,
}

impl ForcingParams {
    /// Fluid mass swept per unit velocity mismatch per time step at a
    /// marker covering `ds` of outline (kg/s).
    pub fn stiffness(&self, ds: f64) -> f64 {
        self.density * ds * self.dx * self.slab_depth / self.dt
    }
}

/// Hydrodynamic forces on the body, one per marker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkerForces {
    /// N, world frame.
    pub forces: Vec<[f64; 2]>,
    pub total_force: [f64; 2],
    /// N m about the body's centre of mass.
    pub total_torque_about_com: f64,
}

impl MarkerForces {
    pub fn from_forces(forces: Vec<[f64; 2]>, positions: &[[f64; 2]], com: [f64; 2]) -> Self {
        let mut total = [0.0; 2];
        let mut torque = 0.0;
        for (f, p) in forces.iter().zip(positions) {
            total[0] += f[0];
            total[1] += f[1];
            torque += (p[0] - com[0]) * f[1] - (p[1] - com[1]) * f[0];
        }
        Self {
            forces,
            total_force: total,
            total_torque_about_com: torque,
        }
    }
}

/// Fluid velocity (m/s) at each marker position, from the unforced lattice
/// velocity.
pub fn interpolate_velocity(grid: &LatticeGrid, positions: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let vscale = grid.dx / grid.dt_fluid;
    let u = grid.velocity();
    positions
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let s = stencil(grid, k, *p)?;
            let mut v = [0.0; 2];
            for (c, w) in s.iter() {
                v[0] += w * u[c][0];
                v[1] += w * u[c][1];
            }
            Ok([v[0] * vscale, v[1] * vscale])
        })
        .collect()
}

/// Force on the body at each marker: the fluid momentum needed to bring the
/// fluid near the marker to the body velocity within one step.
pub fn direct_forcing(
    markers: &[Marker],
    fluid_velocity: &[[f64; 2]],
    params: &ForcingParams,
    com: [f64; 2],
) -> Result<MarkerForces> {
    if markers.len() != fluid_velocity.len() {
        return Err(Error::Data(format!(
            "{} markers but {} fluid velocities",
            markers.len(),
            fluid_velocity.len()
        )));
    }
    let forces = markers
        .iter()
        .zip(fluid_velocity)
        .map(|(m, u)| {
            let k = params.stiffness(m.ds);
            [k * (u[0] - m.velocity[0]), k * (u[1] - m.velocity[1])]
        })
        .collect();
    let positions: Vec<[f64; 2]> = markers.iter().map(|m| m.position).collect();
    Ok(MarkerForces::from_forces(forces, &positions, com))
}

/// Add the reaction of the marker forces to the grid's body-force field
/// (lattice units). Returns the physical force added to the fluid (N).
pub fn spread_force(
    grid: &mut LatticeGrid,
    positions: &[[f64; 2]],
    forces: &MarkerForces,
    params: &ForcingParams,
) -> Result<[f64; 2]> {
    if positions.len() != forces.forces.len() {
        return Err(Error::Data(format!(
            "{} markers but {} forces",
            positions.len(),
            forces.forces.len()
        )));
    }
    // N on one cell -> lattice force density.
    let cell_volume = grid.dx * grid.dx * params.slab_depth;
    let to_lattice = params.dt * params.dt / (params.density * grid.dx * cell_volume);
    let mut stencils = Vec::with_capacity(positions.len());
    for (k, p) in positions.iter().enumerate() {
        stencils.push(stencil(grid, k, *p)?);
    }
    let field = grid.body_force_mut();
    let mut added = [0.0; 2];
    for (s, f) in stencils.iter().zip(&forces.forces) {
        added[0] -= f[0];
        added[1] -= f[1];
        for (c, w) in s.iter() {
            field[c][0] -= w * f[0] * to_lattice;
            field[c][1] -= w * f[1] * to_lattice;
        }
    }
    Ok(added)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::Boundary;

    fn grid() -> LatticeGrid {
        LatticeGrid::pool(32, 32, 0.6, 1.0 / 32.0, 0.004).unwrap()
    }

    fn params(dt: f64) -> ForcingParams {
        ForcingParams {
            density: 1000.0,
            dt,
            dx: 1.0 / 32.0,
            slab_depth: 0.05,
        }
    }

    fn marker(p: [f64; 2], v: [f64; 2]) -> Marker {
        Marker {
            position: p,
            velocity: v,
            link: 0,
            s: 0.0,
            w: 0.0,
            ds: 0.02,
        }
    }

    #[test]
    fn uniform_flow_is_reproduced() {
        let mut g = grid();
        let u0 = [0.03, -0.01];
        g.set_equilibrium(|_, _| (1.0, u0));
        let pts = [[0.5, 0.5], [0.013, 0.71], [0.99, 0.02], [0.333, 0.777]];
        let v = interpolate_velocity(&g, &pts).unwrap();
        let scale = g.dx / g.dt_fluid;
        for vk in v {
            assert!((vk[0] - u0[0] * scale).abs() < 1e-12);
            assert!((vk[1] - u0[1] * scale).abs() < 1e-12);
        }
    }

    #[test]
    fn quiescent_fluid_gives_zero() {
        let g = grid();
        let v = interpolate_velocity(&g, &[[0.4, 0.6]]).unwrap();
        assert_eq!(v[0], [0.0, 0.0]);
    }

    #[test]
    fn linear_shear_is_exact_in_the_interior() {
        let mut g = grid();
        g.boundary_x = Boundary::Periodic;
        let k = 0.002;
        let dx = g.dx;
        g.set_equilibrium(|_, y| (1.0, [k * (y as f64 + 0.5), 0.0]));
        let scale = g.dx / g.dt_fluid;
        for &y in &[0.2, 0.31, 0.5, 0.62, 0.8] {
            let v = interpolate_velocity(&g, &[[0.47, y]]).unwrap()[0];
            let expected = k * (y / dx) * scale;
            assert!(
                (v[0] - expected).abs() < 1e-12 * scale,
                "y={y}: {} vs {expected}",
                v[0]
            );
            assert!(v[1].abs() < 1e-15);
        }
    }

    #[test]
    fn matched_velocity_gives_no_force() {
        let m = [marker([0.5, 0.5], [0.1, 0.2])];
        let f = direct_forcing(&m, &[[0.1, 0.2]], &params(0.004), [0.5, 0.5]).unwrap();
        assert_eq!(f.forces[0], [0.0, 0.0]);
    }

    #[test]
    fn gliding_body_feels_drag() {
        let m: Vec<Marker> = (0..10)
            .map(|i| marker([0.3 + 0.01 * i as f64, 0.5], [0.2, 0.0]))
            .collect();
        let u = vec![[0.0, 0.0]; 10];
        let f = direct_forcing(&m, &u, &params(0.004), [0.35, 0.5]).unwrap();
        assert!(f.total_force[0] < 0.0);
        let sum: f64 = f.forces.iter().map(|v| v[0]).sum();
        assert_eq!(sum, f.total_force[0]);
    }

    #[test]
    fn doubling_dt_halves_force() {
        let m = [marker([0.5, 0.5], [0.1, 0.0])];
        let a = direct_forcing(&m, &[[0.0, 0.0]], &params(0.004), [0.5, 0.5]).unwrap();
        let b = direct_forcing(&m, &[[0.0, 0.0]], &params(0.008), [0.5, 0.5]).unwrap();
        assert!((a.total_force[0] - 2.0 * b.total_force[0]).abs() < 1e-12);
    }

    fn field_sum_newtons(g: &LatticeGrid, p: &ForcingParams) -> [f64; 2] {
        let back = p.density * g.dx * g.dx * g.dx * p.slab_depth / (p.dt * p.dt);
        let mut s = [0.0; 2];
        for f in g.body_force() {
            s[0] += f[0] * back;
            s[1] += f[1] * back;
        }
        s
    }

    #[test]
    fn single_unit_force_spreads_to_minus_one() {
        let mut g = grid();
        let p = params(0.004);
        let mf = MarkerForces::from_forces(vec![[1.0, 0.0]], &[[0.5, 0.5]], [0.5, 0.5]);
        spread_force(&mut g, &[[0.5, 0.5]], &mf, &p).unwrap();
        let s = field_sum_newtons(&g, &p);
        assert!((s[0] + 1.0).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12);
    }

    #[test]
    fn wall_truncated_stencil_still_sums_exactly() {
        let mut g = grid();
        let p = params(0.004);
        let pos = [[0.001, 0.999]];
        let mf = MarkerForces::from_forces(vec![[0.3, -0.7]], &pos, [0.0, 0.0]);
        spread_force(&mut g, &pos, &mf, &p).unwrap();
        let s = field_sum_newtons(&g, &p);
        assert!((s[0] + 0.3).abs() < 1e-12);
        assert!((s[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_and_opposite_forces() {
        let mut g = grid();
        let p = params(0.004);
        let pos = [[0.4, 0.5], [0.6, 0.5]];
        let zero = MarkerForces::from_forces(vec![[0.0; 2]; 2], &pos, [0.5, 0.5]);
        spread_force(&mut g, &pos, &zero, &p).unwrap();
        assert!(g.body_force().iter().all(|f| *f == [0.0, 0.0]));
        let opp = MarkerForces::from_forces(vec![[1.0, 2.0], [-1.0, -2.0]], &pos, [0.5, 0.5]);
        spread_force(&mut g, &pos, &opp, &p).unwrap();
        let s = field_sum_newtons(&g, &p);
        assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12);
    }
}
