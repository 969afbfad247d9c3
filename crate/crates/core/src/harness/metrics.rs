use serde::{Deserialize, Serialize};

use crate::env::{EpisodeStatus, TrajectoryRecord};

/// Speeds below this do not enter the turning-radius estimate (m/s).
pub const TURN_SPEED_FLOOR: f64 = 0.02;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Trapezoidal integral of the joint-speed norm over the logged records (rad).
pub fn energy(records: &[TrajectoryRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| 0.5 * (norm(&w[0].joint_rates) + norm(&w[1].joint_rates)) * (w[1].t - w[0].t))
        .sum()
}

/// Distance travelled by the nose (m).
pub fn path_length(records: &[TrajectoryRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| (w[1].pose[0] - w[0].pose[0]).hypot(w[1].pose[1] - w[0].pose[1]))
        .sum()
}

/// Smallest `|v| / |omega|` over samples moving faster than
/// [`TURN_SPEED_FLOOR`]; `None` when the fish never moved.
pub fn min_turning_radius(records: &[TrajectoryRecord]) -> Option<f64> {
    records
        .iter()
        .filter_map(|r| {
            let speed = norm(&r.v);
            (speed >= TURN_SPEED_FLOOR).then(|| {
                if r.omega == 0.0 {
                    f64::INFINITY
                } else {
                    speed / r.omega.abs()
                }
            })
        })
        .reduce(f64::min)
        .filter(|r| r.is_finite())
}

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub status: EpisodeStatus,
    pub success: bool,
    /// Waypoints reached (1 for single-target tasks on success).
    pub reached: usize,
    /// Simulated duration of the episode (s).
    pub duration: f64,
    pub path_length: f64,
    pub energy: f64,
    pub min_turning_radius: Option<f64>,
}

impl EpisodeMetrics {
    pub fn from_records(
        seed: u64,
        status: EpisodeStatus,
        reached: usize,
        records: &[TrajectoryRecord],
    ) -> Self {
        let duration = match (records.first(), records.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        };
        Self {
            seed,
            status,
            success: status == EpisodeStatus::Success,
            reached,
            duration,
            path_length: path_length(records),
            energy: energy(records),
            min_turning_radius: min_turning_radius(records),
        }
    }
}

/// Aggregate over a set of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub success_rate: f64,
    /// Mean duration of the successful episodes (s).
    pub mean_time: Option<f64>,
    pub mean_path_length: f64,
    pub mean_energy: f64,
    /// Mean of the per-episode minimum turning radius over episodes where
    /// it is defined (m).
    pub mean_min_turning_radius: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

impl EvalMetrics {
    /// Order-independent: episodes are sorted by seed before reduction.
    pub fn aggregate(episodes: &[EpisodeMetrics]) -> Self {
        let mut eps: Vec<&EpisodeMetrics> = episodes.iter().collect();
        eps.sort_by_key(|e| e.seed);
        let n = eps.len();
        let successes = eps.iter().filter(|e| e.success).count();
        Self {
            episodes: n,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            mean_time: mean(eps.iter().filter(|e| e.success).map(|e| e.duration)),
            mean_path_length: mean(eps.iter().map(|e| e.path_length)).unwrap_or(0.0),
            mean_energy: mean(eps.iter().map(|e| e.energy)).unwrap_or(0.0),
            mean_min_turning_radius: mean(eps.iter().filter_map(|e| e.min_turning_radius)),
        }
    }
}

/// Per-episode `a - b` on identical seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub seed: u64,
    pub duration: f64,
    pub path_length: f64,
    pub energy: f64,
    pub min_turning_radius: Option<f64>,
    pub success: (bool, bool),
}

pub fn paired_differences(a: &[EpisodeMetrics], b: &[EpisodeMetrics]) -> Vec<PairedDifference> {
    a.iter()
        .filter_map(|x| {
            let y = b.iter().find(|y| y.seed == x.seed)?;
            Some(PairedDifference {
                seed: x.seed,
                duration: x.duration - y.duration,
                path_length: x.path_length - y.path_length,
                energy: x.energy - y.energy,
                min_turning_radius: x.min_turning_radius.zip(y.min_turning_radius).map(|(p, q)| p - q),
                success: (x.success, y.success),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rec(t: f64, pose: [f64; 3], rates: [f64; 3], v: [f64; 2], omega: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            t,
            pose,
            joints: [0.0; 3],
            joints_desired: [0.0; 3],
            joint_rates: rates,
            v,
            omega,
            target: [0.0; 2],
            reward_terms: Default::default(),
            status: EpisodeStatus::Running,
        }
    }

    #[test]
    fn motionless_energy_is_zero() {
        let rs: Vec<_> = (0..50)
            .map(|k| rec(k as f64 * 0.02, [0.0; 3], [0.0; 3], [0.0; 2], 0.0))
            .collect();
        assert_eq!(energy(&rs), 0.0);
        assert_eq!(path_length(&rs), 0.0);
        assert_eq!(min_turning_radius(&rs), None);
    }

    #[test]
    fn sinusoidal_joint_energy() {
        // A = 30 deg at 1 Hz on one joint for 1 s: 4 A f = 2.094 rad
        let a = 30f64.to_radians();
        let w = 2.0 * PI;
        let n = 2000;
        let rs: Vec<_> = (0..=n)
            .map(|k| {
                let t = k as f64 / n as f64;
                rec(t, [0.0; 3], [a * w * (w * t).cos(), 0.0, 0.0], [0.0; 2], 0.0)
            })
            .collect();
        let e = energy(&rs);
        assert!((e - 4.0 * a).abs() < 1e-5, "{e}");
        assert!((e - 2.094).abs() < 1e-3);
    }

    #[test]
    fn energy_is_trapezoid_by_hand() {
        let rs = [
            rec(0.0, [0.0; 3], [3.0, 4.0, 0.0], [0.0; 2], 0.0),
            rec(0.5, [0.0; 3], [0.0, 0.0, 1.0], [0.0; 2], 0.0),
        ];
        assert_eq!(energy(&rs), 0.5 * (5.0 + 1.0) * 0.5);
    }

    #[test]
    fn circle_radius_and_path() {
        let r = 0.4;
        let omega = 1.5;
        let rs: Vec<_> = (0..=100)
            .map(|k| {
                let t = k as f64 * 0.02;
                let th = omega * t;
                rec(
                    t,
                    [r * th.cos(), r * th.sin(), th],
                    [0.0; 3],
                    [r * omega, 0.0],
                    omega,
                )
            })
            .collect();
        assert!((min_turning_radius(&rs).unwrap() - r).abs() < 1e-12);
        let arc = r * omega * 2.0;
        assert!((path_length(&rs) - arc).abs() < 1e-3);
    }

    #[test]
    fn slow_samples_are_ignored() {
        let rs = [
            rec(0.0, [0.0; 3], [0.0; 3], [0.01, 0.0], 5.0),
            rec(0.1, [0.0; 3], [0.0; 3], [0.1, 0.0], 0.5),
        ];
        assert!((min_turning_radius(&rs).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn aggregate_and_identical_pairs() {
        let e = |seed, success, duration| EpisodeMetrics {
            seed,
            status: if success {
                EpisodeStatus::Success
            } else {
                EpisodeStatus::Truncated
            },
            success,
            reached: success as usize,
            duration,
            path_length: 1.0,
            energy: 2.0,
            min_turning_radius: Some(0.3),
        };
        let eps = vec![e(3, true, 2.0), e(1, false, 10.0), e(2, true, 4.0)];
        let m = EvalMetrics::aggregate(&eps);
        assert!((m.success_rate - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.mean_time, Some(3.0));
        let mut rev = eps.clone();
        rev.reverse();
        assert_eq!(EvalMetrics::aggregate(&rev), m);
        for d in paired_differences(&eps, &rev) {
            assert_eq!((d.duration, d.energy, d.path_length), (0.0, 0.0, 0.0));
            assert_eq!(d.min_turning_radius, Some(0.0));
        }
    }
}
