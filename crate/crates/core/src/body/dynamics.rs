use nalgebra::{SMatrix, SVector};

use super::{FishState, Morphology, N_JOINTS, N_LINKS};
use crate::error::{Error, Result};

pub const DOF: usize = 3 + N_JOINTS;

pub type Mat6 = SMatrix<f64, DOF, DOF>;
pub type Vec6 = SVector<f64, DOF>;
pub type Mat3x6 = SMatrix<f64, 3, DOF>;

#[inline]
fn e(a: f64) -> [f64; 2] {
    [a.cos(), a.sin()]
}

#[inline]
fn n(a: f64) -> [f64; 2] {
    [-a.sin(), a.cos()]
}

#[inline]
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Link poses for one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub q: [f64; DOF],
    /// Forward-axis angle of each link.
    pub psi: [f64; N_LINKS],
    /// Front end of each link; the last entry is the tail tip.
    pub joints: [[f64; 2]; N_LINKS + 1],
    lengths: [f64; N_LINKS],
}

impl Kinematics {
    pub fn new(morph: &Morphology, q: &[f64; DOF]) -> Self {
        let mut psi = [0.0; N_LINKS];
        let mut joints = [[0.0; 2]; N_LINKS + 1];
        let mut lengths = [0.0; N_LINKS];
        joints[0] = [q[0], q[1]];
        let mut a = q[2];
        for i in 0..N_LINKS {
            if i > 0 {
                a -= q[2 + i];
            }
            psi[i] = a;
            lengths[i] = morph.links[i].length;
            let d = e(a);
            joints[i + 1] = [joints[i][0] - lengths[i] * d[0], joints[i][1] - lengths[i] * d[1]];
        }
        Self {
            q: *q,
            psi,
            joints,
            lengths,
        }
    }

    /// World position of the point `s` behind the front of link `link`,
    /// offset `w` to the link's left.
    pub fn point(&self, link: usize, s: f64, w: f64) -> [f64; 2] {
        let d = e(self.psi[link]);
        let l = n(self.psi[link]);
        let p = self.joints[link];
        [p[0] - s * d[0] + w * l[0], p[1] - s * d[1] + w * l[1]]
    }

    /// Derivative of a link-attached point with respect to each link angle.
    fn angle_partials(&self, link: usize, s: f64, w: f64) -> [[f64; 2]; N_LINKS] {
        let mut d = [[0.0; 2]; N_LINKS];
        for (j, dj) in d.iter_mut().enumerate().take(link) {
            let nn = n(self.psi[j]);
            *dj = [-self.lengths[j] * nn[0], -self.lengths[j] * nn[1]];
        }
        let nn = n(self.psi[link]);
        let ee = e(self.psi[link]);
        d[link] = [-s * nn[0] - w * ee[0], -s * nn[1] - w * ee[1]];
        d
    }

    /// 2 x DOF Jacobian of a link-attached point, rows are world x and y.
    pub fn point_jacobian(&self, link: usize, s: f64, w: f64) -> [[f64; DOF]; 2] {
        let d = self.angle_partials(link, s, w);
        let mut jac = [[0.0; DOF]; 2];
        jac[0][0] = 1.0;
        jac[1][1] = 1.0;
        for (j, dj) in d.iter().enumerate().take(link + 1) {
            for r in 0..2 {
                jac[r][2] += dj[r];
                // link j's angle depends on joints 1..=j with coefficient -1
                for k in 1..=j {
                    jac[r][2 + k] -= dj[r];
                }
            }
        }
        jac
    }

    /// Point acceleration when all generalised accelerations vanish.
    pub fn point_bias(&self, qd: &[f64; DOF], link: usize, s: f64, w: f64) -> [f64; 2] {
        let rates = link_rates(qd);
        let mut b = [0.0; 2];
        for j in 0..link {
            let ee = e(self.psi[j]);
            let k = self.lengths[j] * rates[j] * rates[j];
            b[0] += k * ee[0];
            b[1] += k * ee[1];
        }
        let ee = e(self.psi[link]);
        let nn = n(self.psi[link]);
        let r2 = rates[link] * rates[link];
        b[0] += (s * ee[0] - w * nn[0]) * r2;
        b[1] += (s * ee[1] - w * nn[1]) * r2;
        b
    }
}

/// Angular velocity of each link.
pub fn link_rates(qd: &[f64; DOF]) -> [f64; N_LINKS] {
    let mut r = [0.0; N_LINKS];
    let mut a = qd[2];
    for (i, ri) in r.iter_mut().enumerate() {
        if i > 0 {
            a -= qd[2 + i];
        }
        *ri = a;
    }
    r
}

/// Angular Jacobian row of link `i`.
fn angle_row(i: usize) -> [f64; DOF] {
    let mut a = [0.0; DOF];
    a[2] = 1.0;
    for k in 1..=i {
        a[2 + k] = -1.0;
    }
    a
}

/// External force applied at a link-attached point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointForce {
    pub link: usize,
    pub s: f64,
    pub w: f64,
    /// N, world frame.
    pub force: [f64; 2],
}

/// Rigid-chain inertia bookkeeping for one morphology.
#[derive(Debug, Clone)]
pub struct ChainDynamics {
    pub morph: Morphology,
    /// Reflected rotor inertia added to each joint (kg m^2).
    pub armature: f64,
    masses: [f64; N_LINKS],
    inertias: [f64; N_LINKS],
    half_lengths: [f64; N_LINKS],
}

impl ChainDynamics {
    pub fn new(morph: &Morphology) -> Self {
        let mut masses = [0.0; N_LINKS];
        let mut inertias = [0.0; N_LINKS];
        let mut half_lengths = [0.0; N_LINKS];
        for i in 0..N_LINKS {
            masses[i] = morph.links[i].mass;
            inertias[i] = morph.link_inertia(i);
            half_lengths[i] = 0.5 * morph.links[i].length;
        }
        Self {
            morph: morph.clone(),
            armature: 0.0,
            masses,
            inertias,
            half_lengths,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn kinematics(&self, q: &[f64; DOF]) -> Kinematics {
        Kinematics::new(&self.morph, q)
    }

    pub fn mass_matrix(&self, kin: &Kinematics) -> Mat6 {
        let mut m = Mat6::zeros();
        for i in 0..N_LINKS {
            let jac = kin.point_jacobian(i, self.half_lengths[i], 0.0);
            let a = angle_row(i);
            for r in 0..DOF {
                for c in 0..DOF {
                    m[(r, c)] += self.masses[i] * (jac[0][r] * jac[0][c] + jac[1][r] * jac[1][c])
                        + self.inertias[i] * a[r] * a[c];
                }
            }
        }
        for j in 3..DOF {
            m[(j, j)] += self.armature;
        }
        m
    }

    /// Velocity-product generalised forces (moved to the left-hand side).
    pub fn bias(&self, kin: &Kinematics, qd: &[f64; DOF]) -> Vec6 {
        let mut c = Vec6::zeros();
        for i in 0..N_LINKS {
            let jac = kin.point_jacobian(i, self.half_lengths[i], 0.0);
            let b = kin.point_bias(qd, i, self.half_lengths[i], 0.0);
            for r in 0..DOF {
                c[r] += self.masses[i] * (jac[0][r] * b[0] + jac[1][r] * b[1]);
            }
        }
        c
    }

    pub fn com(&self, kin: &Kinematics) -> [f64; 2] {
        let mut c = [0.0; 2];
        for i in 0..N_LINKS {
            let p = kin.point(i, self.half_lengths[i], 0.0);
            c[0] += self.masses[i] * p[0];
            c[1] += self.masses[i] * p[1];
        }
        let m = self.total_mass();
        [c[0] / m, c[1] / m]
    }

    /// Rows map generalised velocity to `[P_x, P_y, L_com]`.
    pub fn momentum_matrix(&self, kin: &Kinematics) -> Mat3x6 {
        let com = self.com(kin);
        let mut b = Mat3x6::zeros();
        for i in 0..N_LINKS {
            let p = kin.point(i, self.half_lengths[i], 0.0);
            let jac = kin.point_jacobian(i, self.half_lengths[i], 0.0);
            let a = angle_row(i);
            let r = [p[0] - com[0], p[1] - com[1]];
            for c in 0..DOF {
                b[(0, c)] += self.masses[i] * jac[0][c];
                b[(1, c)] += self.masses[i] * jac[1][c];
                b[(2, c)] += self.masses[i] * (r[0] * jac[1][c] - r[1] * jac[0][c]) + self.inertias[i] * a[c];
            }
        }
        b
    }

    /// Linear momentum and angular momentum about the centre of mass.
    pub fn momentum(&self, kin: &Kinematics, qd: &[f64; DOF]) -> [f64; 3] {
        let p = self.momentum_matrix(kin) * Vec6::from_column_slice(qd);
        [p[0], p[1], p[2]]
    }

    pub fn kinetic_energy(&self, kin: &Kinematics, qd: &[f64; DOF]) -> f64 {
        let v = Vec6::from_column_slice(qd);
        0.5 * (v.transpose() * self.mass_matrix(kin) * v)[(0, 0)]
    }

    /// Generalised force of point forces, plus their resultant
    /// `[F_x, F_y, torque about the centre of mass]`.
    pub fn generalized_force(&self, kin: &Kinematics, forces: &[PointForce]) -> (Vec6, [f64; 3]) {
        let com = self.com(kin);
        let mut q = Vec6::zeros();
        let mut total = [0.0; 3];
        for pf in forces {
            let jac = kin.point_jacobian(pf.link, pf.s, pf.w);
            for r in 0..DOF {
                q[r] += jac[0][r] * pf.force[0] + jac[1][r] * pf.force[1];
            }
            let p = kin.point(pf.link, pf.s, pf.w);
            total[0] += pf.force[0];
            total[1] += pf.force[1];
            total[2] += cross([p[0] - com[0], p[1] - com[1]], pf.force);
        }
        (q, total)
    }

    /// Advance positions with the new velocities, enforce joint limits, then
    /// correct the base velocity so that momentum matches `target`
    /// (`[P_x, P_y, L_com]` after the step).
    pub fn integrate(
        &self,
        q: &[f64; DOF],
        qd_new: &[f64; DOF],
        target: [f64; 3],
        dt: f64,
    ) -> Result<([f64; DOF], [f64; DOF])> {
        let mut q1 = [0.0; DOF];
        let mut qd1 = *qd_new;
        for i in 0..DOF {
            q1[i] = q[i] + dt * qd1[i];
        }
        let lim = self.morph.joint_limit;
        for j in 3..DOF {
            if q1[j] > lim {
                q1[j] = lim;
                qd1[j] = qd1[j].min(0.0);
            } else if q1[j] < -lim {
                q1[j] = -lim;
                qd1[j] = qd1[j].max(0.0);
            }
        }
        let kin1 = self.kinematics(&q1);
        let b = self.momentum_matrix(&kin1);
        let cur = b * Vec6::from_column_slice(&qd1);
        let resid = nalgebra::Vector3::new(target[0] - cur[0], target[1] - cur[1], target[2] - cur[2]);
        let base = b.fixed_view::<3, 3>(0, 0).into_owned();
        let delta = base
            .lu()
            .solve(&resid)
            .ok_or_else(|| Error::BodyFault("singular locked inertia".into()))?;
        for k in 0..3 {
            qd1[k] += delta[k];
        }
        if q1.iter().chain(qd1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::BodyFault("non-finite state".into()));
        }
        Ok((q1, qd1))
    }

    /// Solve `(M + dt D) qd' = M qd + dt (Q - c)` for the new velocity.
    pub fn solve_velocity(&self, mass: &Mat6, implicit: &Mat6, rhs: &Vec6, dt: f64) -> Result<[f64; DOF]> {
        let lhs = mass + implicit * dt;
        let sol = lhs
            .cholesky()
            .map(|c| c.solve(rhs))
            .or_else(|| lhs.lu().solve(rhs))
            .ok_or_else(|| Error::BodyFault("singular mass matrix".into()))?;
        let mut out = [0.0; DOF];
        out.copy_from_slice(sol.as_slice());
        Ok(out)
    }
}

/// Advance the free-floating chain by one semi-implicit Euler step under
/// joint torques (internal) and point forces (external).
pub fn body_step(
    dynamics: &ChainDynamics,
    state: &FishState,
    joint_torques: &[f64; N_JOINTS],
    forces: &[PointForce],
    dt: f64,
) -> Result<FishState> {
    if !state.is_finite() {
        return Err(Error::BodyFault("non-finite input state".into()));
    }
    let (q, qd) = state.generalized();
    let kin = dynamics.kinematics(&q);
    let m = dynamics.mass_matrix(&kin);
    let c = dynamics.bias(&kin, &qd);
    let (mut gen, resultant) = dynamics.generalized_force(&kin, forces);
    for j in 0..N_JOINTS {
        gen[3 + j] += joint_torques[j];
    }
    let qd_v = Vec6::from_column_slice(&qd);
    let rhs = m * qd_v + (gen - c) * dt;
    let qd_new = dynamics.solve_velocity(&m, &Mat6::zeros(), &rhs, dt)?;
    let p0 = dynamics.momentum(&kin, &qd);
    let target = [
        p0[0] + dt * resultant[0],
        p0[1] + dt * resultant[1],
        p0[2] + dt * resultant[2],
    ];
    let (q1, qd1) = dynamics.integrate(&q, &qd_new, target, dt)?;
    Ok(FishState::from_generalized(&q1, &qd1))
}
