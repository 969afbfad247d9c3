use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EpisodeStatus, RewardTerms};
use crate::body::N_JOINTS;
use crate::error::{Error, Result};

/// One control step of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Simulated time after the step (s).
    pub t: f64,
    /// `[x, y, heading]` of the nose.
    pub pose: [f64; 3],
    #[serde(rename = "J")]
    pub joints: [f64; N_JOINTS],
    #[serde(rename = "J_des")]
    pub joints_desired: [f64; N_JOINTS],
    #[serde(rename = "J_dot")]
    pub joint_rates: [f64; N_JOINTS],
    /// Body-frame nose velocity (m/s).
    pub v: [f64; 2],
    pub omega: f64,
    pub target: [f64; 2],
    pub reward_terms: RewardTerms,
    pub status: EpisodeStatus,
}

pub fn write_trajectory<W: Write>(records: &[TrajectoryRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<trajectory>", e))?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<trajectory>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("trajectory line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
