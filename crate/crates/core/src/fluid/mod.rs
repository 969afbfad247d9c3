//! Two-dimensional lattice-Boltzmann fluid solver.

mod lattice;
mod units;

pub use lattice::{
    equilibrium, macroscopics, Boundary, CellFlag, LatticeGrid, C, CS, DEFAULT_MACH_LIMIT, OPPOSITE, Q, W,
};
pub use units::{
    unit_convert, viscosity_for_tau, FluidParams, LatticeScaling, MAX_TAU, UNDER_RESOLVED_MARGIN,
};

use std::io::Write;

use crate::error::{Error, Result};

/// Write density and physical velocity of every cell as CSV.
pub fn write_field_csv<W: Write>(grid: &LatticeGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "x_m", "y_m", "rho", "ux_m_s", "uy_m_s"])?;
    let vscale = grid.dx / grid.dt_fluid;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            let u = grid.velocity_with_force(k);
            w.write_record(&[
                i.to_string(),
                j.to_string(),
                format!("{:.6}", (i as f64 + 0.5) * grid.dx),
                format!("{:.6}", (j as f64 + 0.5) * grid.dx),
                format!("{:.9}", grid.density()[k]),
                format!("{:.9}", u[0] * vscale),
                format!("{:.9}", u[1] * vscale),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<field csv>", e))?;
    Ok(())
}
