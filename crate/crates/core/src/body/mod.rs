//! Free-floating planar fish: a rigid head, two mid-body links and a tail
//! joined by three actuated revolute joints.
//!
//! Generalised coordinates are `q = [x, y, heading, J1, J2, J3]` where
//! `(x, y)` is the nose position in the world frame. Every link points
//! backwards from its front joint. Link `i` has forward-axis angle
//! `heading - (J1 + .. + Ji)`, so a positive joint angle bends the distal
//! part of the body towards the fish's left (+y in the body frame).

mod dynamics;
mod markers;
mod servo;

pub use dynamics::{body_step, link_rates, ChainDynamics, Kinematics, Mat3x6, Mat6, PointForce, Vec6, DOF};
pub use markers::{
    marker_geometry, outline_self_intersects, LayoutPoint, Marker, MarkerLayout, MarkerSet, MARKER_SPACING,
};
pub use servo::{servo_torque, LatencyBuffer, ServoModel, DEFAULT_ARMATURE};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_LINKS: usize = 4;
pub const N_JOINTS: usize = 3;

/// Default joint range, +-60 degrees.
pub const DEFAULT_JOINT_LIMIT: f64 = PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// kg
    pub mass: f64,
    /// m
    pub length: f64,
    /// Outline width at the front of the link (m).
    pub width: f64,
    /// Mass per length relative to the whole body's mass per length.
    #[serde(default)]
    pub normalized_density: f64,
}

/// Per-link mass per unit length, normalised by the body's mean mass per
/// unit length.
pub fn normalized_density(masses: &[f64], lengths: &[f64]) -> Result<Vec<f64>> {
    if masses.is_empty() || masses.len() != lengths.len() {
        return Err(Error::Config(format!(
            "need equal, non-empty mass and length lists (got {} and {})",
            masses.len(),
            lengths.len()
        )));
    }
    if masses.iter().chain(lengths).any(|v| !(*v > 0.0)) {
        return Err(Error::Config("link masses and lengths must be positive".into()));
    }
    let total_l: f64 = lengths.iter().sum();
    let total_m: f64 = masses.iter().sum();
    Ok(masses
        .iter()
        .zip(lengths)
        .map(|(m, l)| (m / l) * (total_l / total_m))
        .collect())
}

/// Link masses that reproduce the given normalised densities for a body of
/// `total_mass`.
pub fn masses_from_normalized_density(
    total_mass: f64,
    lengths: &[f64],
    densities: &[f64],
) -> Result<Vec<f64>> {
    if lengths.len() != densities.len() || lengths.is_empty() {
        return Err(Error::Config("length and density lists differ".into()));
    }
    let total_l: f64 = lengths.iter().sum();
    Ok(lengths
        .iter()
        .zip(densities)
        .map(|(l, d)| d * l / total_l * total_mass)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    pub links: [LinkSpec; N_LINKS],
    /// Symmetric joint range (rad).
    pub joint_limit: f64,
}

impl Default for Morphology {
    fn default() -> Self {
        let link = |mass, length, width| LinkSpec {
            mass,
            length,
            width,
            normalized_density: 0.0,
        };
        Morphology::new(
            [
                link(0.62, 0.24, 0.13),
                link(0.15, 0.07, 0.08),
                link(0.15, 0.07, 0.05),
                link(0.18, 0.14, 0.02),
            ],
            DEFAULT_JOINT_LIMIT,
        )
        .expect("default morphology is valid")
    }
}

impl Morphology {
    /// Validate the links and fill in their normalised densities.
    pub fn new(mut links: [LinkSpec; N_LINKS], joint_limit: f64) -> Result<Self> {
        if !(joint_limit > 0.0 && joint_limit < PI) {
            return Err(Error::Config(format!(
                "joint limit {joint_limit} rad out of range"
            )));
        }
        if links.iter().any(|l| !(l.width > 0.0)) {
            return Err(Error::Config("link widths must be positive".into()));
        }
        let masses: Vec<f64> = links.iter().map(|l| l.mass).collect();
        let lengths: Vec<f64> = links.iter().map(|l| l.length).collect();
        let rho = normalized_density(&masses, &lengths)?;
        for (l, r) in links.iter_mut().zip(rho) {
            l.normalized_density = r;
        }
        Ok(Self { links, joint_limit })
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn total_length(&self) -> f64 {
        self.links.iter().map(|l| l.length).sum()
    }

    /// Rotational inertia of link `i` about its centre of mass (thin plate).
    pub fn link_inertia(&self, i: usize) -> f64 {
        let l = &self.links[i];
        l.mass * (l.length * l.length + l.width * l.width) / 12.0
    }

    /// Half-width of the outline at arc length `s` from the nose.
    ///
    /// Piecewise linear: zero at the nose, full head width at 40% of the head,
    /// each later link's width at its front joint, and a quarter of the tail
    /// width at the tail tip.
    pub fn half_width(&self, s: f64) -> f64 {
        let mut nodes = [(0.0, 0.0); N_LINKS + 2];
        nodes[1] = (0.4 * self.links[0].length, 0.5 * self.links[0].width);
        let mut acc = self.links[0].length;
        for i in 1..N_LINKS {
            nodes[i + 1] = (acc, 0.5 * self.links[i].width);
            acc += self.links[i].length;
        }
        nodes[N_LINKS + 1] = (acc, 0.125 * self.links[N_LINKS - 1].width);
        let s = s.clamp(0.0, acc);
        for w in nodes.windows(2) {
            let (s0, h0) = w[0];
            let (s1, h1) = w[1];
            if s <= s1 {
                let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 1.0 };
                return h0 + t * (h1 - h0);
            }
        }
        nodes[N_LINKS + 1].1
    }

    /// Area enclosed by the straight outline (m^2), by trapezoid rule.
    pub fn outline_area(&self) -> f64 {
        let n = 2000;
        let len = self.total_length();
        let h = len / n as f64;
        (0..n)
            .map(|k| {
                let a = self.half_width(k as f64 * h);
                let b = self.half_width((k + 1) as f64 * h);
                (a + b) * h
            })
            .sum()
    }
}

/// Kinematic state of the fish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FishState {
    /// Nose position in the world frame (m).
    pub base_position: [f64; 2],
    /// Direction the nose points, in (-pi, pi].
    pub heading: f64,
    /// Nose velocity in the body frame (m/s).
    pub base_linear_velocity: [f64; 2],
    /// rad/s
    pub base_angular_velocity: f64,
    pub joint_angles: [f64; N_JOINTS],
    pub joint_velocities: [f64; N_JOINTS],
}

impl FishState {
    pub fn at_rest(position: [f64; 2], heading: f64) -> Self {
        Self {
            base_position: position,
            heading: wrap_angle(heading),
            base_linear_velocity: [0.0; 2],
            base_angular_velocity: 0.0,
            joint_angles: [0.0; N_JOINTS],
            joint_velocities: [0.0; N_JOINTS],
        }
    }

    /// Generalised coordinates and world-frame generalised velocities.
    pub fn generalized(&self) -> ([f64; DOF], [f64; DOF]) {
        let (s, c) = self.heading.sin_cos();
        let v = self.base_linear_velocity;
        let q = [
            self.base_position[0],
            self.base_position[1],
            self.heading,
            self.joint_angles[0],
            self.joint_angles[1],
            self.joint_angles[2],
        ];
        let qd = [
            c * v[0] - s * v[1],
            s * v[0] + c * v[1],
            self.base_angular_velocity,
            self.joint_velocities[0],
            self.joint_velocities[1],
            self.joint_velocities[2],
        ];
        (q, qd)
    }

    pub fn from_generalized(q: &[f64; DOF], qd: &[f64; DOF]) -> Self {
        let heading = wrap_angle(q[2]);
        let (s, c) = q[2].sin_cos();
        Self {
            base_position: [q[0], q[1]],
            heading,
            base_linear_velocity: [c * qd[0] + s * qd[1], -s * qd[0] + c * qd[1]],
            base_angular_velocity: qd[2],
            joint_angles: [q[3], q[4], q[5]],
            joint_velocities: [qd[3], qd[4], qd[5]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|v| v.is_finite())
            && self.heading.is_finite()
            && self.base_linear_velocity.iter().all(|v| v.is_finite())
            && self.base_angular_velocity.is_finite()
            && self.joint_angles.iter().all(|v| v.is_finite())
            && self.joint_velocities.iter().all(|v| v.is_finite())
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}
