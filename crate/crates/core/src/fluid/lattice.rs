//! D2Q9 lattice with BGK collision, Guo forcing and half-way bounce-back.
//!
//! Direction numbering:
//! ```text
//!   6   2   5
//!    \  |  /
//!   3 - 0 - 1
//!    /  |  \
//!   7   4   8
//! ```
//! Cell `(x, y)` is stored at `y * nx + x` and its centre sits at
//! `((x + 0.5) dx, (y + 0.5) dx)`. Wall boundaries lie on the edges of the
//! array, half a cell outside the outermost nodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const Q: usize = 9;

pub const C: [[i32; 2]; Q] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [-1, 0],
    [0, -1],
    [1, 1],
    [-1, 1],
    [-1, -1],
    [1, -1],
];

pub const W: [f64; Q] = [
    4.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

pub const OPPOSITE: [usize; Q] = [0, 3, 4, 1, 2, 7, 8, 5, 6];

/// Lattice speed of sound, `1/sqrt(3)`.
pub const CS: f64 = 0.577_350_269_189_625_8;

/// Default low-Mach limit on `|u|` in lattice units.
pub const DEFAULT_MACH_LIMIT: f64 = 0.3;

pub fn equilibrium(rho: f64, u: [f64; 2]) -> [f64; Q] {
    let uu = u[0] * u[0] + u[1] * u[1];
    let mut feq = [0.0; Q];
    for i in 0..Q {
        let cu = C[i][0] as f64 * u[0] + C[i][1] as f64 * u[1];
        feq[i] = W[i] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * uu);
    }
    feq
}

/// Density and force-free velocity of a single cell.
pub fn macroscopics(f: &[f64; Q]) -> Result<(f64, [f64; 2])> {
    let (rho, u) = raw_moments(f);
    if !rho.is_finite() || !u[0].is_finite() || !u[1].is_finite() {
        return Err(Error::NumericFault {
            cell: None,
            what: "non-finite distribution".into(),
        });
    }
    if rho <= 0.0 {
        return Err(Error::NumericFault {
            cell: None,
            what: format!("non-positive density {rho}"),
        });
    }
    Ok((rho, u))
}

#[inline]
fn raw_moments(f: &[f64; Q]) -> (f64, [f64; 2]) {
    let rho = f.iter().sum::<f64>();
    let jx = f[1] - f[3] + f[5] - f[6] - f[7] + f[8];
    let jy = f[2] - f[4] + f[5] + f[6] - f[7] - f[8];
    (rho, [jx / rho, jy / rho])
}

/// Guo forcing source term for one cell.
#[inline]
fn guo_source(u: [f64; 2], force: [f64; 2], tau: f64) -> [f64; Q] {
    let pref = 1.0 - 0.5 / tau;
    let mut s = [0.0; Q];
    for i in 0..Q {
        let cx = C[i][0] as f64;
        let cy = C[i][1] as f64;
        let cu = cx * u[0] + cy * u[1];
        let gx = 3.0 * (cx - u[0]) + 9.0 * cu * cx;
        let gy = 3.0 * (cy - u[1]) + 9.0 * cu * cy;
        s[i] = pref * W[i] * (gx * force[0] + gy * force[1]);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    /// Half-way bounce-back wall on both ends of the axis.
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellFlag {
    Fluid,
    Solid,
}

#[derive(Debug, Clone)]
pub struct LatticeGrid {
    pub nx: usize,
    pub ny: usize,
    /// Cell size in metres.
    pub dx: f64,
    /// Fluid time step in seconds.
    pub dt_fluid: f64,
    pub tau: f64,
    pub boundary_x: Boundary,
    pub boundary_y: Boundary,
    pub mach_limit: f64,
    f: Vec<[f64; Q]>,
    f_next: Vec<[f64; Q]>,
    rho: Vec<f64>,
    u: Vec<[f64; 2]>,
    body_force: Vec<[f64; 2]>,
    flags: Vec<CellFlag>,
    steps: u64,
}

impl LatticeGrid {
    pub fn new(nx: usize, ny: usize, tau: f64, boundary_x: Boundary, boundary_y: Boundary) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Config(format!("grid {nx}x{ny} is too small")));
        }
        if !(tau > 0.5) {
            return Err(Error::Config(format!("relaxation time {tau} violates tau > 0.5")));
        }
        let n = nx * ny;
        let feq = equilibrium(1.0, [0.0, 0.0]);
        Ok(Self {
            nx,
            ny,
            dx: 1.0,
            dt_fluid: 1.0,
            tau,
            boundary_x,
            boundary_y,
            mach_limit: DEFAULT_MACH_LIMIT,
            f: vec![feq; n],
            f_next: vec![feq; n],
            rho: vec![1.0; n],
            u: vec![[0.0; 2]; n],
            body_force: vec![[0.0; 2]; n],
            flags: vec![CellFlag::Fluid; n],
            steps: 0,
        })
    }

    /// Walled pool with physical scaling attached.
    pub fn pool(nx: usize, ny: usize, tau: f64, dx: f64, dt_fluid: f64) -> Result<Self> {
        let mut grid = Self::new(nx, ny, tau, Boundary::Wall, Boundary::Wall)?;
        grid.dx = dx;
        grid.dt_fluid = dt_fluid;
        Ok(grid)
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.nx + x
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Simulated fluid time in seconds.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt_fluid
    }

    pub fn distributions(&self) -> &[[f64; Q]] {
        &self.f
    }

    pub fn density(&self) -> &[f64] {
        &self.rho
    }

    /// Force-free velocity `sum(c f) / rho` per cell, lattice units.
    pub fn velocity(&self) -> &[[f64; 2]] {
        &self.u
    }

    pub fn body_force(&self) -> &[[f64; 2]] {
        &self.body_force
    }

    pub fn flags(&self) -> &[CellFlag] {
        &self.flags
    }

    /// Physical velocity including the half-step force correction.
    pub fn velocity_with_force(&self, i: usize) -> [f64; 2] {
        let r = self.rho[i];
        [
            self.u[i][0] + 0.5 * self.body_force[i][0] / r,
            self.u[i][1] + 0.5 * self.body_force[i][1] / r,
        ]
    }

    pub fn set_flag(&mut self, x: usize, y: usize, flag: CellFlag) {
        let i = self.idx(x, y);
        self.flags[i] = flag;
    }

    /// Initialise every cell to equilibrium with the given macroscopic field.
    pub fn set_equilibrium<F>(&mut self, field: F)
    where
        F: Fn(usize, usize) -> (f64, [f64; 2]),
    {
        for y in 0..self.ny {
            for x in 0..self.nx {
                let i = self.idx(x, y);
                let (rho, u) = field(x, y);
                self.f[i] = equilibrium(rho, u);
                self.rho[i] = rho;
                self.u[i] = u;
            }
        }
    }

    /// Quiescent unit-density fluid, no force, step counter reset.
    pub fn reset_to_rest(&mut self) {
        let feq = equilibrium(1.0, [0.0, 0.0]);
        self.f.iter_mut().for_each(|f| *f = feq);
        self.rho.iter_mut().for_each(|r| *r = 1.0);
        self.u.iter_mut().for_each(|u| *u = [0.0; 2]);
        self.clear_body_force();
        self.steps = 0;
    }

    /// Overwrite the distributions directly; macroscopic fields are refreshed.
    pub fn set_distributions(&mut self, f: Vec<[f64; Q]>) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Config(format!(
                "distribution field has {} cells, grid has {}",
                f.len(),
                self.len()
            )));
        }
        self.f = f;
        self.update_macroscopics()
    }

    /// Install a body-force field (lattice units) used by the next collision.
    pub fn apply_body_force(&mut self, force: &[[f64; 2]]) -> Result<()> {
        if force.len() != self.len() {
            return Err(Error::Config(format!(
                "force field has {} cells, grid has {}",
                force.len(),
                self.len()
            )));
        }
        self.body_force.copy_from_slice(force);
        Ok(())
    }

    pub fn body_force_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.body_force
    }

    pub fn clear_body_force(&mut self) {
        self.body_force.iter_mut().for_each(|f| *f = [0.0; 2]);
    }

    pub fn total_mass(&self) -> f64 {
        self.f
            .iter()
            .zip(&self.flags)
            .filter(|(_, fl)| **fl == CellFlag::Fluid)
            .map(|(f, _)| f.iter().sum::<f64>())
            .sum()
    }

    /// Sum of `c_i f_i` over fluid cells (lattice momentum, force-free).
    pub fn total_momentum(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        for (f, fl) in self.f.iter().zip(&self.flags) {
            if *fl != CellFlag::Fluid {
                continue;
            }
            m[0] += f[1] - f[3] + f[5] - f[6] - f[7] + f[8];
            m[1] += f[2] - f[4] + f[5] + f[6] - f[7] - f[8];
        }
        m
    }

    pub fn max_speed(&self) -> f64 {
        self.u
            .iter()
            .map(|u| (u[0] * u[0] + u[1] * u[1]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Recompute `rho` and the force-free velocity from the distributions.
    pub fn update_macroscopics(&mut self) -> Result<()> {
        let nx = self.nx;
        let mach = self.mach_limit;
        let faults: Vec<Option<(usize, String)>> = self
            .rho
            .par_chunks_mut(nx)
            .zip(self.u.par_chunks_mut(nx))
            .zip(self.f.par_chunks(nx))
            .zip(self.flags.par_chunks(nx))
            .map(|(((rho_row, u_row), f_row), flag_row)| {
                let mut fault = None;
                for x in 0..nx {
                    if flag_row[x] == CellFlag::Solid {
                        rho_row[x] = 1.0;
                        u_row[x] = [0.0; 2];
                        continue;
                    }
                    let (r, u) = raw_moments(&f_row[x]);
                    rho_row[x] = r;
                    u_row[x] = u;
                    if fault.is_none() {
                        fault = check_cell(r, u, mach).map(|w| (x, w));
                    }
                }
                fault
            })
            .collect();
        first_fault(&faults)
    }

    /// One BGK collision with Guo forcing followed by streaming with
    /// half-way bounce-back. Macroscopic fields are refreshed from the
    /// streamed distributions.
    pub fn collide_stream(&mut self) -> Result<()> {
        let nx = self.nx;
        let ny = self.ny;
        let tau = self.tau;
        let omega = 1.0 / tau;

        // Collision, in place.
        self.f
            .par_chunks_mut(nx)
            .zip(self.rho.par_chunks(nx))
            .zip(self.u.par_chunks(nx))
            .zip(self.body_force.par_chunks(nx))
            .zip(self.flags.par_chunks(nx))
            .for_each(|((((f_row, rho_row), u_row), force_row), flag_row)| {
                for x in 0..nx {
                    if flag_row[x] == CellFlag::Solid {
                        continue;
                    }
                    let rho = rho_row[x];
                    let force = force_row[x];
                    let u = [
                        u_row[x][0] + 0.5 * force[0] / rho,
                        u_row[x][1] + 0.5 * force[1] / rho,
                    ];
                    let feq = equilibrium(rho, u);
                    let f = &mut f_row[x];
                    if force[0] != 0.0 || force[1] != 0.0 {
                        let s = guo_source(u, force, tau);
                        for i in 0..Q {
                            f[i] += omega * (feq[i] - f[i]) + s[i];
                        }
                    } else {
                        for i in 0..Q {
                            f[i] += omega * (feq[i] - f[i]);
                        }
                    }
                }
            });

        // Pull streaming fused with the moment computation.
        let f_src = &self.f;
        let flags = &self.flags;
        let bx = self.boundary_x;
        let by = self.boundary_y;
        let mach = self.mach_limit;
        let faults: Vec<Option<(usize, String)>> = self
            .f_next
            .par_chunks_mut(nx)
            .zip(self.rho.par_chunks_mut(nx))
            .zip(self.u.par_chunks_mut(nx))
            .enumerate()
            .map(|(y, ((dst_row, rho_row), u_row))| {
                let mut fault = None;
                for x in 0..nx {
                    let here = y * nx + x;
                    if flags[here] == CellFlag::Solid {
                        dst_row[x] = f_src[here];
                        rho_row[x] = 1.0;
                        u_row[x] = [0.0; 2];
                        continue;
                    }
                    let mut out = [0.0; Q];
                    out[0] = f_src[here][0];
                    for i in 1..Q {
                        let src = neighbour(x, y, -C[i][0], -C[i][1], nx, ny, bx, by);
                        out[i] = match src {
                            Some(s) if flags[s] == CellFlag::Fluid => f_src[s][i],
                            _ => f_src[here][OPPOSITE[i]],
                        };
                    }
                    let (r, u) = raw_moments(&out);
                    dst_row[x] = out;
                    rho_row[x] = r;
                    u_row[x] = u;
                    if fault.is_none() {
                        fault = check_cell(r, u, mach).map(|w| (x, w));
                    }
                }
                fault
            })
            .collect();
        std::mem::swap(&mut self.f, &mut self.f_next);
        self.steps += 1;
        first_fault(&faults)
    }
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn neighbour(
    x: usize,
    y: usize,
    dx: i32,
    dy: i32,
    nx: usize,
    ny: usize,
    bx: Boundary,
    by: Boundary,
) -> Option<usize> {
    let sx = wrap(x as i64 + dx as i64, nx, bx)?;
    let sy = wrap(y as i64 + dy as i64, ny, by)?;
    Some(sy * nx + sx)
}

#[inline]
fn wrap(v: i64, n: usize, b: Boundary) -> Option<usize> {
    let n = n as i64;
    if (0..n).contains(&v) {
        return Some(v as usize);
    }
    match b {
        Boundary::Periodic => Some(v.rem_euclid(n) as usize),
        Boundary::Wall => None,
    }
}

#[inline]
fn check_cell(rho: f64, u: [f64; 2], mach: f64) -> Option<String> {
    if !rho.is_finite() || !u[0].is_finite() || !u[1].is_finite() {
        return Some("non-finite value".into());
    }
    if rho <= 0.0 {
        return Some(format!("non-positive density {rho:e}"));
    }
    let speed = (u[0] * u[0] + u[1] * u[1]).sqrt();
    if speed >= mach {
        return Some(format!("speed {speed:.4} exceeds low-Mach limit {mach}"));
    }
    None
}

fn first_fault(rows: &[Option<(usize, String)>]) -> Result<()> {
    for (y, row) in rows.iter().enumerate() {
        if let Some((x, what)) = row {
            return Err(Error::NumericFault {
                cell: Some((*x, y)),
                what: what.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_velocity_equilibrium_is_weight_vector() {
        let feq = equilibrium(1.0, [0.0, 0.0]);
        for i in 0..Q {
            assert_eq!(feq[i], W[i]);
        }
    }

    #[test]
    fn equilibrium_by_hand_for_x_flow() {
        // u = (0.1, 0): u.u = 0.01, 1 - 1.5 u.u = 0.985.
        // c.u = 0 for 0,2,4; +0.1 for 1,5,8; -0.1 for 3,6,7.
        let plus = 0.985 + 0.3 + 4.5 * 0.01; // 1.33
        let minus = 0.985 - 0.3 + 4.5 * 0.01; // 0.73
        let expected = [
            4.0 / 9.0 * 0.985,
            1.0 / 9.0 * plus,
            1.0 / 9.0 * 0.985,
            1.0 / 9.0 * minus,
            1.0 / 9.0 * 0.985,
            1.0 / 36.0 * plus,
            1.0 / 36.0 * minus,
            1.0 / 36.0 * minus,
            1.0 / 36.0 * plus,
        ];
        let feq = equilibrium(1.0, [0.1, 0.0]);
        for i in 0..Q {
            assert_relative_eq!(feq[i], expected[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn equilibrium_zeroth_moment_is_density() {
        for &(rho, u) in &[(1.0, [0.0, 0.0]), (0.7, [0.05, -0.1]), (2.3, [-0.2, 0.15])] {
            let s: f64 = equilibrium(rho, u).iter().sum();
            assert_relative_eq!(s, rho, epsilon = 1e-14);
        }
    }

    #[test]
    fn macroscopics_of_weights() {
        let (rho, u) = macroscopics(&W).unwrap();
        assert_relative_eq!(rho, 1.0, epsilon = 1e-15);
        assert!(u[0].abs() < 1e-16 && u[1].abs() < 1e-16);
        let twice = W.map(|w| 2.0 * w);
        let (rho, u) = macroscopics(&twice).unwrap();
        assert_relative_eq!(rho, 2.0, epsilon = 1e-15);
        assert!(u[0].abs() < 1e-16 && u[1].abs() < 1e-16);
    }

    #[test]
    fn macroscopics_round_trip_equilibrium() {
        let (rho, u) = macroscopics(&equilibrium(1.0, [0.1, 0.05])).unwrap();
        assert_relative_eq!(rho, 1.0, epsilon = 1e-14);
        assert_relative_eq!(u[0], 0.1, epsilon = 1e-14);
        assert_relative_eq!(u[1], 0.05, epsilon = 1e-14);
    }

    #[test]
    fn macroscopics_rejects_non_positive_density() {
        let neg = W.map(|w| -w);
        assert!(matches!(macroscopics(&neg), Err(Error::NumericFault { .. })));
    }

    #[test]
    fn tau_bound_is_enforced() {
        assert!(LatticeGrid::new(8, 8, 0.5, Boundary::Periodic, Boundary::Periodic).is_err());
        assert!(LatticeGrid::new(8, 8, 0.51, Boundary::Periodic, Boundary::Periodic).is_ok());
    }

    #[test]
    fn equilibrium_is_fixed_point_on_periodic_field() {
        let mut g = LatticeGrid::new(16, 12, 0.8, Boundary::Periodic, Boundary::Periodic).unwrap();
        let before = g.distributions().to_vec();
        for _ in 0..10 {
            g.collide_stream().unwrap();
        }
        for (a, b) in before.iter().zip(g.distributions()) {
            for i in 0..Q {
                assert!((a[i] - b[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn nan_is_reported_with_first_cell() {
        let mut g = LatticeGrid::new(8, 8, 0.8, Boundary::Periodic, Boundary::Periodic).unwrap();
        let mut f = g.distributions().to_vec();
        f[3 * 8 + 5][0] = f64::NAN;
        f[6 * 8 + 1][0] = f64::NAN;
        g.f = f;
        match g.update_macroscopics() {
            Err(Error::NumericFault { cell, .. }) => assert_eq!(cell, Some((5, 3))),
            other => panic!("expected fault, got {other:?}"),
        }
    }

    #[test]
    fn force_dimension_mismatch_is_config_error() {
        let mut g = LatticeGrid::new(8, 8, 0.8, Boundary::Periodic, Boundary::Periodic).unwrap();
        assert!(matches!(
            g.apply_body_force(&[[0.0; 2]; 10]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_force_matches_plain_collide_stream() {
        let init = |x: usize, y: usize| {
            let u = [0.02 * (x as f64 * 0.3).sin(), 0.01 * (y as f64 * 0.2).cos()];
            (1.0, u)
        };
        let mut a = LatticeGrid::new(10, 9, 0.7, Boundary::Periodic, Boundary::Wall).unwrap();
        a.set_equilibrium(init);
        let mut b = a.clone();
        b.apply_body_force(&vec![[0.0; 2]; 90]).unwrap();
        for _ in 0..5 {
            a.collide_stream().unwrap();
            b.collide_stream().unwrap();
        }
        assert_eq!(a.distributions(), b.distributions());
    }

    #[test]
    fn uniform_force_adds_momentum_impulse() {
        // Quiescent periodic fluid, uniform force F per cell: after n steps the
        // raw first moment per cell is n F, so the mean velocity is n F / rho.
        let (nx, ny) = (12, 10);
        let force = [1e-5, -4e-6];
        let mut g = LatticeGrid::new(nx, ny, 0.9, Boundary::Periodic, Boundary::Periodic).unwrap();
        g.apply_body_force(&vec![force; nx * ny]).unwrap();
        let n = 25;
        for _ in 0..n {
            g.collide_stream().unwrap();
        }
        let m = g.total_momentum();
        let cells = (nx * ny) as f64;
        let mass = g.total_mass();
        assert_relative_eq!(m[0] / mass, n as f64 * force[0], max_relative = 1e-9);
        assert_relative_eq!(m[1] / mass, n as f64 * force[1], max_relative = 1e-9);
        assert_relative_eq!(mass, cells, max_relative = 1e-12);
    }

    #[test]
    fn opposite_point_forces_leave_total_momentum_unchanged() {
        let mut g = LatticeGrid::new(12, 12, 0.8, Boundary::Periodic, Boundary::Periodic).unwrap();
        let mut field = vec![[0.0; 2]; 144];
        field[g.idx(3, 4)] = [2e-4, 1e-4];
        field[g.idx(8, 7)] = [-2e-4, -1e-4];
        g.apply_body_force(&field).unwrap();
        for _ in 0..20 {
            g.collide_stream().unwrap();
        }
        let m = g.total_momentum();
        assert!(m[0].abs() < 1e-15 && m[1].abs() < 1e-15, "{m:?}");
    }

    #[test]
    fn mach_violation_is_a_numeric_fault() {
        let mut g = LatticeGrid::new(8, 8, 0.8, Boundary::Periodic, Boundary::Periodic).unwrap();
        g.set_equilibrium(|_, _| (1.0, [0.31, 0.0]));
        assert!(matches!(
            g.collide_stream(),
            Err(Error::NumericFault {
                cell: Some((0, 0)),
                ..
            })
        ));
    }
}
