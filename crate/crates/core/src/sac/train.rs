use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{ActionMode, Batch, LossReport, Sac};
use super::checkpoint::save_checkpoint;
use super::replay::{ReplayBuffer, Transition};
use super::SacConfig;
use crate::env::{Environment, EpisodeStatus, ACT_DIM};
use crate::error::{Error, Result};

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Total env steps taken so far.
    pub steps: usize,
    pub length: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub success: bool,
    pub status: EpisodeStatus,
    pub alpha: f64,
    /// Mean over the updates made during the episode.
    pub losses: Option<LossReport>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingSummary {
    pub episodes: Vec<EpisodeLog>,
    pub total_steps: usize,
    pub aborted: usize,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainingSummary {
    /// Episodes that were not aborted.
    pub fn completed(&self) -> impl Iterator<Item = &EpisodeLog> {
        self.episodes
            .iter()
            .filter(|e| e.status != EpisodeStatus::Aborted)
    }
}

/// Single-worker SAC training loop.
pub struct Trainer {
    pub sac: Sac<f32>,
    pub buffer: ReplayBuffer,
    rollout_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    seed_rng: ChaCha8Rng,
    steps: usize,
    episode: usize,
}

fn mean_report(rs: &[LossReport]) -> Option<LossReport> {
    if rs.is_empty() {
        return None;
    }
    let n = rs.len() as f64;
    let mut m = LossReport::default();
    for r in rs {
        m.critic1 += r.critic1 / n;
        m.critic2 += r.critic2 / n;
        m.actor += r.actor / n;
        m.alpha_loss += r.alpha_loss / n;
        m.entropy += r.entropy / n;
    }
    m.alpha = rs[rs.len() - 1].alpha;
    Some(m)
}

impl Trainer {
    pub fn new(config: SacConfig, seed: u64) -> Result<Self> {
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        let sac = Sac::new(config, seed)?;
        Ok(Self {
            sac,
            buffer,
            rollout_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001),
            update_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002),
            seed_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0003),
            steps: 0,
            episode: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn learn(&mut self, reports: &mut Vec<LossReport>) -> Result<()> {
        let cfg = &self.sac.config;
        if self.steps < cfg.warmup_steps || self.buffer.len() < cfg.batch_size {
            return Ok(());
        }
        for _ in 0..cfg.updates_per_step {
            let idx = self
                .buffer
                .sample_indices(self.sac.config.batch_size, &mut self.update_rng);
            let batch = Batch::from_buffer(&self.buffer, &idx);
            reports.push(self.sac.update(&batch, &mut self.update_rng)?);
        }
        Ok(())
    }

    /// Run until `total_steps` env steps. With `out` set, writes
    /// `metrics.jsonl` and checkpoints there. `on_episode` sees every logged
    /// episode and may stop training by returning `true`.
    pub fn run<E: Environment>(
        &mut self,
        env: &mut E,
        total_steps: usize,
        out: Option<&Path>,
        on_episode: &mut dyn FnMut(&Sac<f32>, &EpisodeLog) -> Result<bool>,
    ) -> Result<TrainingSummary> {
        let mut metrics = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let p = dir.join("metrics.jsonl");
                Some(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?))
            }
            None => None,
        };
        let limit = env.action_limit();
        let mut summary = TrainingSummary::default();
        'outer: while self.steps < total_steps {
            let seed = self.seed_rng.random::<u64>();
            let mut obs = env.reset(seed)?;
            let mut pending = Vec::new();
            let mut reports = Vec::new();
            let mut ret = 0.0;
            let mut status = EpisodeStatus::Running;
            while !status.is_done() {
                if self.steps >= total_steps {
                    break;
                }
                let unit: [f64; ACT_DIM] = if self.steps < self.sac.config.warmup_steps {
                    std::array::from_fn(|_| self.rollout_rng.random_range(-1.0..1.0))
                } else {
                    self.sac
                        .sample_action(&obs, ActionMode::Stochastic, &mut self.rollout_rng)
                        .unit
                };
                let o = env.step(&unit.map(|a| a * limit))?;
                self.steps += 1;
                status = o.status;
                ret += o.reward.total;
                pending.push(Transition {
                    obs,
                    action: unit,
                    reward: o.reward.total,
                    next_obs: o.observation,
                    done: status.is_terminal(),
                });
                obs = o.observation;
                if let Err(e) = self.learn(&mut reports) {
                    if let Some(dir) = out {
                        save_checkpoint(&dir.join("halted.ckpt"), &self.sac, self.episode)?;
                    }
                    return Err(e);
                }
            }
            if status == EpisodeStatus::Aborted {
                summary.aborted += 1;
                log::warn!(
                    "episode {} aborted after {} steps; transitions dropped",
                    self.episode,
                    pending.len()
                );
            } else {
                for t in &pending {
                    self.buffer.push(t);
                }
            }
            if !status.is_done() {
                break 'outer;
            }
            let log = EpisodeLog {
                episode: self.episode,
                steps: self.steps,
                length: env.steps(),
                episode_return: ret,
                success: status == EpisodeStatus::Success,
                status,
                alpha: self.sac.alpha(),
                losses: mean_report(&reports),
            };
            if let Some(w) = metrics.as_mut() {
                serde_json::to_writer(&mut *w, &log)?;
                w.write_all(b"\n").map_err(|e| Error::io("metrics.jsonl", e))?;
            }
            self.episode += 1;
            let every = self.sac.config.checkpoint_every;
            if let (Some(dir), true) = (out, every > 0 && self.episode.is_multiple_of(every)) {
                let p = dir.join(format!("ckpt_{:06}.bin", self.episode));
                save_checkpoint(&p, &self.sac, self.episode)?;
                summary.checkpoints.push(p);
            }
            let stop = on_episode(&self.sac, &log)?;
            summary.episodes.push(log);
            if stop {
                break;
            }
        }
        if let Some(dir) = out {
            let p = dir.join("final.ckpt");
            save_checkpoint(&p, &self.sac, self.episode)?;
            summary.checkpoints.push(p);
        }
        if let Some(mut w) = metrics {
            w.flush().map_err(|e| Error::io("metrics.jsonl", e))?;
        }
        summary.total_steps = self.steps;
        Ok(summary)
    }
}
