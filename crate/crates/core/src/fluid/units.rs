use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical description of the fluid and pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    /// kg/m^3
    pub physical_density: f64,
    /// m^2/s
    pub kinematic_viscosity: f64,
    /// (m, m)
    pub domain_size: [f64; 2],
    /// Carried through from the solver configuration; not used by the solver.
    pub slip_ratio: f64,
}

/// Largest relaxation time accepted by [`unit_convert`].
pub const MAX_TAU: f64 = 2.0;

/// Relaxation times closer to 0.5 than this are accepted but flagged.
pub const UNDER_RESOLVED_MARGIN: f64 = 0.01;

/// Bidirectional physical/lattice conversion factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeScaling {
    pub dx: f64,
    pub dt: f64,
    pub tau: f64,
    pub physical_density: f64,
    /// m/s represented by one lattice velocity unit (`dx / dt`).
    pub velocity_scale: f64,
    /// N/m^3 represented by one lattice force-density unit
    /// (`rho dx / dt^2`).
    pub force_density_scale: f64,
}

impl LatticeScaling {
    pub fn velocity_to_lattice(&self, v: f64) -> f64 {
        v / self.velocity_scale
    }

    pub fn velocity_to_physical(&self, v: f64) -> f64 {
        v * self.velocity_scale
    }

    pub fn force_density_to_lattice(&self, f: f64) -> f64 {
        f / self.force_density_scale
    }

    pub fn force_density_to_physical(&self, f: f64) -> f64 {
        f * self.force_density_scale
    }

    pub fn lattice_viscosity(&self) -> f64 {
        (self.tau - 0.5) / 3.0
    }

    pub fn physical_viscosity(&self) -> f64 {
        self.lattice_viscosity() * self.dx * self.dx / self.dt
    }

    /// Relaxation time within [`UNDER_RESOLVED_MARGIN`] of the stability bound.
    pub fn is_under_resolved(&self) -> bool {
        self.tau - 0.5 < UNDER_RESOLVED_MARGIN
    }
}

/// Kinematic viscosity that yields relaxation time `tau` on the given lattice.
pub fn viscosity_for_tau(tau: f64, dx: f64, dt: f64) -> f64 {
    (tau - 0.5) / 3.0 * dx * dx / dt
}

/// Derive lattice scaling from physical parameters and grid resolution.
pub fn unit_convert(params: &FluidParams, nx: usize, ny: usize, dt: f64) -> Result<LatticeScaling> {
    if nx == 0 || ny == 0 {
        return Err(Error::Config("grid resolution must be positive".into()));
    }
    if !(dt > 0.0) || !(params.physical_density > 0.0) || !(params.kinematic_viscosity > 0.0) {
        return Err(Error::Config(
            "timestep, density and viscosity must be positive".into(),
        ));
    }
    let dx = params.domain_size[0] / nx as f64;
    let dy = params.domain_size[1] / ny as f64;
    if ((dx - dy) / dx).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "cells must be square: dx = {dx} m but dy = {dy} m"
        )));
    }
    let tau = 3.0 * params.kinematic_viscosity * dt / (dx * dx) + 0.5;
    if !(tau > 0.5 && tau <= MAX_TAU) {
        let nu = params.kinematic_viscosity;
        // dt that would give tau = 1 at this dx, and nx that would give tau = 1 at this dt.
        let dt_hint = dx * dx / (6.0 * nu);
        let nx_hint = (params.domain_size[0] / (6.0 * nu * dt).sqrt()).round();
        return Err(Error::Config(format!(
            "relaxation time {tau:.5} outside (0.5, {MAX_TAU}]; try dt = {dt_hint:.3e} s \
             or nx = {nx_hint} for tau = 1"
        )));
    }
    Ok(LatticeScaling {
        dx,
        dt,
        tau,
        physical_density: params.physical_density,
        velocity_scale: dx / dt,
        force_density_scale: params.physical_density * dx / (dt * dt),
    })
}
