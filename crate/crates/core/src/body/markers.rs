use super::dynamics::{Kinematics, DOF};
use super::{FishState, Morphology, N_LINKS};

/// Marker spacing relative to the fluid cell size.
pub const MARKER_SPACING: f64 = 0.7;

/// Marker position in link coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutPoint {
    pub link: usize,
    /// Distance behind the link's front joint (m).
    pub s: f64,
    /// Offset to the link's left (m).
    pub w: f64,
    /// Outline length represented by this marker (m).
    pub ds: f64,
}

/// Ordered set of outline markers: nose, left side front to back, tail tip,
/// right side back to front.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerLayout {
    pub points: Vec<LayoutPoint>,
    pub spacing: f64,
}

impl MarkerLayout {
    /// Layout for a fluid grid with cell size `dx`.
    pub fn new(morph: &Morphology, dx: f64) -> Self {
        let spacing = MARKER_SPACING * dx;
        let mut left = Vec::new();
        let mut front = 0.0;
        let mut first_h = spacing;
        for i in 0..N_LINKS {
            let len = morph.links[i].length;
            let count = (len / spacing).ceil().max(1.0) as usize;
            let h = len / count as f64;
            if i == 0 {
                first_h = h;
            }
            for k in 0..count {
                let s = (k as f64 + 0.5) * h;
                let w = morph.half_width(front + s);
                let dw = morph.half_width(front + s + 0.5 * h) - morph.half_width(front + s - 0.5 * h);
                left.push(LayoutPoint {
                    link: i,
                    s,
                    w,
                    ds: h.hypot(dw),
                });
            }
            front += len;
        }
        let tail = N_LINKS - 1;
        let tail_len = morph.links[tail].length;
        let mut points = Vec::with_capacity(2 * left.len() + 2);
        points.push(LayoutPoint {
            link: 0,
            s: 0.0,
            w: 0.0,
            ds: first_h,
        });
        points.extend(left.iter().copied());
        points.push(LayoutPoint {
            link: tail,
            s: tail_len,
            w: 0.0,
            ds: (2.0 * morph.half_width(front)).max(0.5 * spacing),
        });
        points.extend(left.iter().rev().map(|p| LayoutPoint { w: -p.w, ..*p }));
        Self { points, spacing }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// World-frame marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub link: usize,
    pub s: f64,
    pub w: f64,
    pub ds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet {
    pub markers: Vec<Marker>,
    /// Whether the closed outline crosses itself in this pose.
    pub self_intersecting: bool,
}

/// Marker positions and rigid-body velocities for the given state.
pub fn marker_geometry(morph: &Morphology, layout: &MarkerLayout, state: &FishState) -> MarkerSet {
    let (q, qd) = state.generalized();
    let kin = Kinematics::new(morph, &q);
    let markers: Vec<Marker> = layout.points.iter().map(|p| marker_at(&kin, &qd, p)).collect();
    let outline: Vec<[f64; 2]> = markers.iter().map(|m| m.position).collect();
    let self_intersecting = outline_self_intersects(&outline);
    if self_intersecting {
        log::warn!("fish outline self-intersects");
    }
    MarkerSet {
        markers,
        self_intersecting,
    }
}

pub(crate) fn marker_at(kin: &Kinematics, qd: &[f64; DOF], p: &LayoutPoint) -> Marker {
    let jac = kin.point_jacobian(p.link, p.s, p.w);
    let mut v = [0.0; 2];
    for r in 0..2 {
        v[r] = (0..DOF).map(|c| jac[r][c] * qd[c]).sum();
    }
    Marker {
        position: kin.point(p.link, p.s, p.w),
        velocity: v,
        link: p.link,
        s: p.s,
        w: p.w,
        ds: p.ds,
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Whether any two non-adjacent edges of the closed polygon properly cross.
pub fn outline_self_intersects(points: &[[f64; 2]]) -> bool {
    let n = points.len();
    if n < 4 {
        return false;
    }
    let edge = |i: usize| (points[i], points[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = edge(j);
            if a[0].max(b[0]) < c[0].min(d[0])
                || c[0].max(d[0]) < a[0].min(b[0])
                || a[1].max(b[1]) < c[1].min(d[1])
                || c[1].max(d[1]) < a[1].min(b[1])
            {
                continue;
            }
            if segments_cross(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup() -> (Morphology, MarkerLayout) {
        let m = Morphology::default();
        let l = MarkerLayout::new(&m, 2.0 / 128.0);
        (m, l)
    }

    #[test]
    fn spacing_is_at_most_target() {
        let (m, l) = setup();
        let set = marker_geometry(&m, &l, &FishState::at_rest([1.0, 1.0], 0.0));
        let pts: Vec<_> = set.markers.iter().map(|k| k.position).collect();
        for w in pts.windows(2) {
            let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            assert!(d <= 1.5 * l.spacing, "gap {d}");
        }
        assert!(!set.self_intersecting);
    }

    #[test]
    fn straight_fish_is_mirror_symmetric() {
        let (m, l) = setup();
        let set = marker_geometry(&m, &l, &FishState::at_rest([1.0, 1.0], 0.0));
        let n = set.markers.len();
        let half = (n - 2) / 2;
        for k in 0..half {
            let a = set.markers[1 + k].position;
            let b = set.markers[n - 1 - k].position;
            assert_relative_eq!(a[0], b[0], epsilon = 1e-12);
            assert_relative_eq!(a[1] - 1.0, 1.0 - b[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_equivariance() {
        let (m, l) = setup();
        let mut s = FishState::at_rest([0.0, 0.0], 0.0);
        s.joint_angles = [0.3, -0.2, 0.4];
        let a = marker_geometry(&m, &l, &s);
        s.heading = 0.9;
        let b = marker_geometry(&m, &l, &s);
        let (sn, cs) = 0.9f64.sin_cos();
        for (p, r) in a.markers.iter().zip(&b.markers) {
            let x = cs * p.position[0] - sn * p.position[1];
            let y = sn * p.position[0] + cs * p.position[1];
            assert_relative_eq!(x, r.position[0], epsilon = 1e-12);
            assert_relative_eq!(y, r.position[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn rigid_rotation_velocity() {
        let (m, l) = setup();
        let mut s = FishState::at_rest([0.5, 0.5], 0.4);
        s.base_angular_velocity = 1.3;
        let set = marker_geometry(&m, &l, &s);
        for k in &set.markers {
            let r = [k.position[0] - 0.5, k.position[1] - 0.5];
            assert_relative_eq!(k.velocity[0], -1.3 * r[1], epsilon = 1e-12);
            assert_relative_eq!(k.velocity[1], 1.3 * r[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn crossing_polygon_detected() {
        let bow = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(outline_self_intersects(&bow));
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(!outline_self_intersects(&square));
    }
}
