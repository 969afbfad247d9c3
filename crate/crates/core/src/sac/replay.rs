use rand::Rng;

use crate::env::{ACT_DIM, OBS_DIM};

const STRIDE: usize = 2 * OBS_DIM + ACT_DIM + 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    /// Action in unit (pre-scaling) space.
    pub action: [f64; ACT_DIM],
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    /// Set only for true terminations, never for truncation.
    pub done: bool,
}

/// Ring buffer of transitions stored as f32 rows. Storage grows with use up
/// to the capacity.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<f32>,
    len: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: Vec::new(),
            len: 0,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) {
        let row = self.head * STRIDE;
        if row == self.data.len() {
            self.data.resize(row + STRIDE, 0.0);
        }
        let dst = &mut self.data[row..row + STRIDE];
        let done = if t.done { 1.0 } else { 0.0 };
        let vals = t
            .obs
            .iter()
            .chain(&t.action)
            .chain(std::iter::once(&t.reward))
            .chain(&t.next_obs)
            .chain(std::iter::once(&done));
        for (d, v) in dst.iter_mut().zip(vals) {
            *d = *v as f32;
        }
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Raw row `i` (0 = oldest slot in storage order, not insertion order).
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * STRIDE..(i + 1) * STRIDE]
    }

    pub fn get(&self, i: usize) -> Transition {
        let r = self.row(i);
        let f = |k: usize| r[k] as f64;
        Transition {
            obs: std::array::from_fn(f),
            action: std::array::from_fn(|k| f(OBS_DIM + k)),
            reward: f(OBS_DIM + ACT_DIM),
            next_obs: std::array::from_fn(|k| f(OBS_DIM + ACT_DIM + 1 + k)),
            done: r[STRIDE - 1] != 0.0,
        }
    }

    /// Uniform indices with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        assert!(self.len > 0, "sampling from an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.len)).collect()
    }

    pub(crate) fn gather(&self, idx: &[usize]) -> (Vec<f32>, usize) {
        let mut out = Vec::with_capacity(idx.len() * STRIDE);
        for &i in idx {
            out.extend_from_slice(self.row(i));
        }
        (out, STRIDE)
    }
}
