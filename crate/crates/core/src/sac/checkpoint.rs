use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::Sac;
use super::mlp::{Mlp, Real};
use super::SacConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FSWSAC01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config_hash: String,
    pub config: SacConfig,
    /// `[in, out]` per layer for actor, q1, q2, q1_target, q2_target.
    pub shapes: Vec<Vec<[usize; 2]>>,
    pub log_alpha: f64,
    pub updates: u64,
    pub episode: usize,
}

fn nets<F: Real>(sac: &Sac<F>) -> [&Mlp<F>; 5] {
    [&sac.actor, &sac.q1, &sac.q2, &sac.q1_target, &sac.q2_target]
}

/// Header length (u32 LE) and JSON header after the magic, then all
/// parameters as f32 LE.
pub fn save_checkpoint<F: Real>(path: &Path, sac: &Sac<F>, episode: usize) -> Result<()> {
    let header = CheckpointHeader {
        config_hash: sac.config.config_hash(),
        config: sac.config.clone(),
        shapes: nets(sac).iter().map(|n| n.shapes()).collect(),
        log_alpha: sac.log_alpha,
        updates: sac.updates(),
        episode,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf =
        Vec::with_capacity(12 + json.len() + 4 * nets(sac).iter().map(|n| n.param_count()).sum::<usize>());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for n in nets(sac) {
        for v in n.flat_iter() {
            buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Load a checkpoint, optionally requiring a config hash.
pub fn load_checkpoint<F: Real>(
    path: &Path,
    expect_hash: Option<&str>,
) -> Result<(Sac<F>, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
    if header.config.config_hash() != header.config_hash {
        return Err(bad("header hash does not match its config"));
    }
    if let Some(h) = expect_hash {
        if h != header.config_hash {
            return Err(bad(&format!(
                "config hash {} does not match expected {h}",
                header.config_hash
            )));
        }
    }
    let mut sac = Sac::<F>::new(header.config.clone(), 0)?;
    let expected: Vec<_> = nets(&sac).iter().map(|n| n.shapes()).collect();
    if expected != header.shapes {
        return Err(bad("layer shapes do not match the config"));
    }
    let params = &bytes[12 + hlen..];
    let total: usize = nets(&sac).iter().map(|n| n.param_count()).sum();
    if params.len() != 4 * total {
        return Err(bad(&format!(
            "expected {total} parameters, found {} bytes",
            params.len()
        )));
    }
    let vals: Vec<F> = params
        .chunks_exact(4)
        .map(|c| F::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    let mut k = 0;
    for n in [
        &mut sac.actor,
        &mut sac.q1,
        &mut sac.q2,
        &mut sac.q1_target,
        &mut sac.q2_target,
    ] {
        k += n.load_flat(&vals[k..]);
    }
    sac.log_alpha = header.log_alpha;
    Ok((sac, header))
}
