use std::fmt::Debug;

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;

/// Scalar type the networks run in.
pub trait Real:
    LinalgScalar + ScalarOperand + Float + FromPrimitive + Debug + Default + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite float")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Fully connected network with ReLU hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F: Real> {
    /// `in x out` per layer.
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

/// Layer inputs and pre-activations saved by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache<F: Real> {
    inputs: Vec<Array2<F>>,
    pre: Vec<Array2<F>>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<F: Real> {
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

impl<F: Real> MlpGrads<F> {
    pub fn zeros_like(net: &Mlp<F>) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl<F: Real> Mlp<F> {
    /// Uniform `+-1/sqrt(fan_in)` initialisation of weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs an input and an output size");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let mut draw = || F::from_f64_lossy(rng.random_range(-bound..bound));
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), &mut draw));
            biases.push(Array1::from_shape_simple_fn(w[1], &mut draw));
        }
        Self { weights, biases }
    }

    /// `[in, out]` of each layer.
    pub fn shapes(&self) -> Vec<[usize; 2]> {
        self.weights.iter().map(|w| [w.nrows(), w.ncols()]).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map(|w| w.ncols()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let n = self.weights.len();
        let mut h = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.dot(w) + b;
            if l + 1 < n {
                h.mapv_inplace(relu);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> (Array2<F>, MlpCache<F>) {
        let n = self.weights.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = h.dot(w) + b;
            inputs.push(h);
            h = if l + 1 < n { z.mapv(relu) } else { z.clone() };
            pre.push(z);
        }
        (h, MlpCache { inputs, pre })
    }

    /// Backpropagate `grad_out` (dL/d output). Parameter gradients are only
    /// formed when `want_params` is set; the input gradient is always
    /// returned.
    pub fn backward(
        &self,
        cache: &MlpCache<F>,
        grad_out: Array2<F>,
        want_params: bool,
    ) -> (Option<MlpGrads<F>>, Array2<F>) {
        let n = self.weights.len();
        let mut grads = want_params.then(|| MlpGrads::zeros_like(self));
        let mut g = grad_out;
        for l in (0..n).rev() {
            if l + 1 < n {
                ndarray::Zip::from(&mut g).and(&cache.pre[l]).for_each(|gv, &z| {
                    if z <= F::zero() {
                        *gv = F::zero();
                    }
                });
            }
            if let Some(gr) = grads.as_mut() {
                gr.weights[l] = cache.inputs[l].t().dot(&g);
                gr.biases[l] = g.sum_axis(Axis(0));
            }
            g = g.dot(&self.weights[l].t());
        }
        (grads, g)
    }

    /// `self <- (1 - tau) self + tau other`.
    pub fn polyak_from(&mut self, other: &Mlp<F>, tau: F) {
        let keep = F::one() - tau;
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            ndarray::Zip::from(a)
                .and(b)
                .for_each(|x, &y| *x = keep * *x + tau * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            ndarray::Zip::from(a)
                .and(b)
                .for_each(|x, &y| *x = keep * *x + tau * y);
        }
    }

    /// Squared parameter distance to `other`.
    pub fn distance_sq(&self, other: &Mlp<F>) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.flat_iter().zip(other.flat_iter()) {
            let d = (a - b).to_f64_lossy();
            s += d * d;
        }
        s
    }

    /// Parameters in layer order, each weight matrix row-major then its bias.
    pub fn flat_iter(&self) -> impl Iterator<Item = F> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().copied().chain(b.iter().copied()))
    }

    /// Overwrite parameters from a flat slice in [`Mlp::flat_iter`] order.
    pub fn load_flat(&mut self, data: &[F]) -> usize {
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = data[k];
                k += 1;
            }
            for v in b.iter_mut() {
                *v = data[k];
                k += 1;
            }
        }
        k
    }

    pub fn cast<G: Real>(&self) -> Mlp<G> {
        Mlp {
            weights: self
                .weights
                .iter()
                .map(|w| w.mapv(|v| G::from_f64_lossy(v.to_f64_lossy())))
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| b.mapv(|v| G::from_f64_lossy(v.to_f64_lossy())))
                .collect(),
        }
    }
}

#[inline]
fn relu<F: Real>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        F::zero()
    }
}

/// Adam optimiser state for one network.
#[derive(Debug, Clone)]
pub struct Adam<F: Real> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: MlpGrads<F>,
    v: MlpGrads<F>,
    t: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(net: &Mlp<F>, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: MlpGrads::zeros_like(net),
            v: MlpGrads::zeros_like(net),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp<F>, grads: &MlpGrads<F>) {
        self.t += 1;
        let b1 = F::from_f64_lossy(self.beta1);
        let b2 = F::from_f64_lossy(self.beta2);
        let c1 = F::from_f64_lossy(1.0 - self.beta1);
        let c2 = F::from_f64_lossy(1.0 - self.beta2);
        let t = self.t as i32;
        let step =
            F::from_f64_lossy(self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t)));
        let eps = F::from_f64_lossy(self.eps * (1.0 - self.beta2.powi(t)).sqrt());
        let update = |p: &mut F, g: F, m: &mut F, v: &mut F| {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            *p = *p - step * *m / (v.sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&grads.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&grads.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// Adam on a single scalar.
#[derive(Debug, Clone, Copy)]
pub struct ScalarAdam {
    pub lr: f64,
    m: f64,
    v: f64,
    t: u64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            m: 0.0,
            v: 0.0,
            t: 0,
        }
    }

    pub fn step(&mut self, p: &mut f64, g: f64) {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * g;
        self.v = 0.999 * self.v + 0.001 * g * g;
        let t = self.t as i32;
        let mh = self.m / (1.0 - 0.9f64.powi(t));
        let vh = self.v / (1.0 - 0.999f64.powi(t));
        *p -= self.lr * mh / (vh.sqrt() + 1e-8);
    }
}
