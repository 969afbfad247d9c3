use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp, MlpGrads, Real, ScalarAdam};
use super::replay::ReplayBuffer;
use super::SacConfig;
use crate::env::{ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};

pub const ACTOR_LOG_STD_MIN: f64 = -20.0;
pub const ACTOR_LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySample {
    /// Action in (-1, 1) before scaling to the joint limit.
    pub unit: [f64; ACT_DIM],
    /// Log-density of `unit` (for the deterministic mode, at the mean).
    pub log_prob: f64,
}

impl PolicySample {
    pub fn scaled(&self, limit: f64) -> [f64; ACT_DIM] {
        self.unit.map(|a| a * limit)
    }
}

/// A minibatch in network precision.
#[derive(Debug, Clone)]
pub struct Batch<F: Real> {
    pub obs: Array2<F>,
    pub action: Array2<F>,
    pub reward: Array1<F>,
    pub next_obs: Array2<F>,
    pub done: Array1<F>,
}

impl<F: Real> Batch<F> {
    pub fn from_buffer(buffer: &ReplayBuffer, idx: &[usize]) -> Self {
        let (rows, stride) = buffer.gather(idx);
        let n = idx.len();
        let m = Array2::from_shape_vec((n, stride), rows)
            .expect("gathered rows")
            .mapv(|v| F::from_f64_lossy(v as f64));
        let o = OBS_DIM;
        let a = ACT_DIM;
        Self {
            obs: m.slice(s![.., 0..o]).to_owned(),
            action: m.slice(s![.., o..o + a]).to_owned(),
            reward: m.column(o + a).to_owned(),
            next_obs: m.slice(s![.., o + a + 1..2 * o + a + 1]).to_owned(),
            done: m.column(stride - 1).to_owned(),
        }
    }

    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Losses and temperature from one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub alpha_loss: f64,
    /// Temperature after the update.
    pub alpha: f64,
    /// Batch estimate of policy entropy, `-mean(logp)`.
    pub entropy: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.critic1,
            self.critic2,
            self.actor,
            self.alpha_loss,
            self.alpha,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Squashed-Gaussian head evaluated on a batch.
struct Head<F: Real> {
    action: Array2<F>,
    log_prob: Array1<F>,
    sigma: Array2<F>,
    /// 1 where the raw log-std lies inside the clamp range.
    inside: Array2<F>,
}

/// `log(1 - tanh(u)^2)` without cancellation.
fn log1m_tanh2<F: Real>(u: F) -> F {
    let two = F::from_f64_lossy(2.0);
    let x = -two * u;
    let softplus = x.max(F::zero()) + (-x.abs()).exp().ln_1p();
    two * (F::from_f64_lossy(std::f64::consts::LN_2) - u - softplus)
}

fn head<F: Real>(out: ArrayView2<F>, xi: ArrayView2<F>) -> Head<F> {
    let n = out.nrows();
    let lo = F::from_f64_lossy(ACTOR_LOG_STD_MIN);
    let hi = F::from_f64_lossy(ACTOR_LOG_STD_MAX);
    let half = F::from_f64_lossy(0.5);
    let c = F::from_f64_lossy(HALF_LOG_2PI);
    let mut action = Array2::zeros((n, ACT_DIM));
    let mut sigma = Array2::zeros((n, ACT_DIM));
    let mut inside = Array2::zeros((n, ACT_DIM));
    let mut log_prob = Array1::zeros(n);
    for b in 0..n {
        let mut lp = F::zero();
        for j in 0..ACT_DIM {
            let raw = out[[b, ACT_DIM + j]];
            let ls = raw.max(lo).min(hi);
            let sd = ls.exp();
            let x = xi[[b, j]];
            let u = out[[b, j]] + sd * x;
            action[[b, j]] = u.tanh();
            sigma[[b, j]] = sd;
            inside[[b, j]] = if raw >= lo && raw <= hi {
                F::one()
            } else {
                F::zero()
            };
            lp = lp - half * x * x - ls - c - log1m_tanh2(u);
        }
        log_prob[b] = lp;
    }
    Head {
        action,
        log_prob,
        sigma,
        inside,
    }
}

/// Log-density of the squashed Gaussian at `unit`, for given per-dimension
/// mean and (already clamped) log-std of the pre-squash Gaussian.
pub fn squashed_log_prob(mean: &[f64; ACT_DIM], log_std: &[f64; ACT_DIM], unit: &[f64; ACT_DIM]) -> f64 {
    (0..ACT_DIM)
        .map(|j| {
            let u = unit[j].atanh();
            let z = (u - mean[j]) / log_std[j].exp();
            -0.5 * z * z - log_std[j] - HALF_LOG_2PI - log1m_tanh2(u)
        })
        .sum()
}

/// Actor, twin critics with targets, and learned temperature.
#[derive(Debug, Clone)]
pub struct Sac<F: Real> {
    pub config: SacConfig,
    pub actor: Mlp<F>,
    pub q1: Mlp<F>,
    pub q2: Mlp<F>,
    pub q1_target: Mlp<F>,
    pub q2_target: Mlp<F>,
    pub log_alpha: f64,
    actor_opt: Adam<F>,
    q1_opt: Adam<F>,
    q2_opt: Adam<F>,
    alpha_opt: ScalarAdam,
    updates: u64,
}

impl<F: Real> Sac<F> {
    pub fn new(config: SacConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = |i: usize, o: usize| {
            let mut v = vec![i];
            v.extend(&config.hidden);
            v.push(o);
            v
        };
        let actor = Mlp::new(&sizes(OBS_DIM, 2 * ACT_DIM), &mut rng);
        let q1 = Mlp::new(&sizes(OBS_DIM + ACT_DIM, 1), &mut rng);
        let q2 = Mlp::new(&sizes(OBS_DIM + ACT_DIM, 1), &mut rng);
        Ok(Self::from_networks(config, actor, q1, q2))
    }

    pub fn from_networks(config: SacConfig, actor: Mlp<F>, q1: Mlp<F>, q2: Mlp<F>) -> Self {
        let lr = config.lr;
        Self {
            log_alpha: config.initial_alpha.ln(),
            actor_opt: Adam::new(&actor, lr),
            q1_opt: Adam::new(&q1, lr),
            q2_opt: Adam::new(&q2, lr),
            alpha_opt: ScalarAdam::new(lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            config,
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        obs: &[f64; OBS_DIM],
        mode: ActionMode,
        rng: &mut R,
    ) -> PolicySample {
        let x = Array2::from_shape_fn((1, OBS_DIM), |(_, j)| F::from_f64_lossy(obs[j]));
        let out = self.actor.forward(x.view());
        let xi = Array2::from_shape_fn((1, ACT_DIM), |_| match mode {
            ActionMode::Stochastic => F::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)),
            ActionMode::Deterministic => F::zero(),
        });
        let h = head(out.view(), xi.view());
        PolicySample {
            unit: std::array::from_fn(|j| h.action[[0, j]].to_f64_lossy()),
            log_prob: h.log_prob[0].to_f64_lossy(),
        }
    }

    fn noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<F> {
        Array2::from_shape_simple_fn((n, ACT_DIM), || {
            F::from_f64_lossy(rng.sample::<f64, _>(StandardNormal))
        })
    }

    /// Gradient of the temperature loss `-log_alpha mean(logp + target)` with
    /// respect to `log_alpha`.
    pub fn alpha_gradient(&self, mean_log_prob: f64) -> f64 {
        -(mean_log_prob + self.config.entropy_target)
    }

    /// Actor loss `mean(alpha logp - min(q1, q2))` for fixed noise `xi` and its
    /// gradient with respect to the actor parameters. Also returns `logp`.
    pub fn actor_loss_grad(
        &self,
        obs: ArrayView2<F>,
        xi: ArrayView2<F>,
        alpha: F,
    ) -> (F, MlpGrads<F>, Array1<F>) {
        let n = obs.nrows();
        let nf = F::from_usize(n).unwrap();
        let (out, cache) = self.actor.forward_cached(obs);
        let h = head(out.view(), xi);
        let z = concatenate![Axis(1), obs, h.action.view()];
        let (qa, ca) = self.q1.forward_cached(z.view());
        let (qb, cb) = self.q2.forward_cached(z.view());
        let mut sel_a = Array2::zeros((n, 1));
        let mut sel_b = Array2::zeros((n, 1));
        let mut loss = F::zero();
        for b in 0..n {
            let q = if qa[[b, 0]] <= qb[[b, 0]] {
                sel_a[[b, 0]] = F::one();
                qa[[b, 0]]
            } else {
                sel_b[[b, 0]] = F::one();
                qb[[b, 0]]
            };
            loss = loss + alpha * h.log_prob[b] - q;
        }
        loss = loss / nf;
        let (_, ga) = self.q1.backward(&ca, sel_a, false);
        let (_, gb) = self.q2.backward(&cb, sel_b, false);
        let dq = ga.slice(s![.., OBS_DIM..]).to_owned() + gb.slice(s![.., OBS_DIM..]);
        let two = F::from_f64_lossy(2.0);
        let mut g = Array2::zeros((n, 2 * ACT_DIM));
        for b in 0..n {
            for j in 0..ACT_DIM {
                let a = h.action[[b, j]];
                let dq_du = dq[[b, j]] * (F::one() - a * a);
                let sx = h.sigma[[b, j]] * xi[[b, j]];
                g[[b, j]] = (alpha * two * a - dq_du) / nf;
                g[[b, ACT_DIM + j]] =
                    h.inside[[b, j]] * (alpha * (-F::one() + two * a * sx) - dq_du * sx) / nf;
            }
        }
        let (grads, _) = self.actor.backward(&cache, g, true);
        (loss, grads.expect("parameter gradients"), h.log_prob)
    }

    fn critic_step(net: &mut Mlp<F>, opt: &mut Adam<F>, z: ArrayView2<F>, y: &Array1<F>) -> (f64, bool) {
        let n = z.nrows();
        let nf = F::from_usize(n).unwrap();
        let (q, cache) = net.forward_cached(z);
        let diff = &q.column(0) - y;
        let loss = diff.mapv(|d| d * d).sum() / nf;
        let g = diff
            .mapv(|d| F::from_f64_lossy(2.0) * d / nf)
            .insert_axis(Axis(1));
        let (grads, _) = net.backward(&cache, g, true);
        let grads = grads.expect("parameter gradients");
        let ok = loss.is_finite() && grads.is_finite();
        if ok {
            opt.step(net, &grads);
        }
        (loss.to_f64_lossy(), ok)
    }

    /// One gradient step on temperature, both critics and the actor, then the
    /// target update.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch<F>, rng: &mut R) -> Result<LossReport> {
        let n = batch.len();
        let alpha_f64 = self.alpha();
        let alpha = F::from_f64_lossy(alpha_f64);
        let gamma = F::from_f64_lossy(self.config.gamma);
        let xi = Self::noise(n, rng);
        let xi_next = Self::noise(n, rng);

        // temperature, from the current policy's log-probs
        let out = self.actor.forward(batch.obs.view());
        let logp = head(out.view(), xi.view()).log_prob;
        let mean_logp = logp.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n as f64;
        let alpha_loss = -self.log_alpha * (mean_logp + self.config.entropy_target);
        let ga = self.alpha_gradient(mean_logp);

        // critics
        let out_next = self.actor.forward(batch.next_obs.view());
        let hn = head(out_next.view(), xi_next.view());
        let zn = concatenate![Axis(1), batch.next_obs.view(), hn.action.view()];
        let qt1 = self.q1_target.forward(zn.view());
        let qt2 = self.q2_target.forward(zn.view());
        let y = Array1::from_shape_fn(n, |b| {
            let soft = qt1[[b, 0]].min(qt2[[b, 0]]) - alpha * hn.log_prob[b];
            batch.reward[b] + gamma * (F::one() - batch.done[b]) * soft
        });
        let z = concatenate![Axis(1), batch.obs.view(), batch.action.view()];
        let (c1, ok1) = Self::critic_step(&mut self.q1, &mut self.q1_opt, z.view(), &y);
        let (c2, ok2) = Self::critic_step(&mut self.q2, &mut self.q2_opt, z.view(), &y);

        // actor against the updated critics
        let (actor_loss, grads, _) = self.actor_loss_grad(batch.obs.view(), xi.view(), alpha);
        let report = LossReport {
            critic1: c1,
            critic2: c2,
            actor: actor_loss.to_f64_lossy(),
            alpha_loss,
            alpha: alpha_f64,
            entropy: -mean_logp,
        };
        if !(ok1 && ok2 && grads.is_finite() && report.is_finite() && ga.is_finite()) {
            return Err(Error::TrainingHalted(format!(
                "non-finite loss after {} updates: {report:?}",
                self.updates
            )));
        }
        self.actor_opt.step(&mut self.actor, &grads);
        self.alpha_opt.step(&mut self.log_alpha, ga);
        let tau = F::from_f64_lossy(self.config.tau);
        self.q1_target.polyak_from(&self.q1, tau);
        self.q2_target.polyak_from(&self.q2, tau);
        self.updates += 1;
        Ok(LossReport {
            alpha: self.alpha(),
            ..report
        })
    }

    /// Copy all networks into another precision. Optimiser state is reset.
    pub fn cast<G: Real>(&self) -> Sac<G> {
        let mut out = Sac::from_networks(
            self.config.clone(),
            self.actor.cast(),
            self.q1.cast(),
            self.q2.cast(),
        );
        out.q1_target = self.q1_target.cast();
        out.q2_target = self.q2_target.cast();
        out.log_alpha = self.log_alpha;
        out
    }
}
