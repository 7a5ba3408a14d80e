use serde::{Deserialize, Serialize};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fully connected network with tanh hidden layers and a linear output.
/// Parameters live in one flat vector: per layer, row-major weights
/// (`out x in`) followed by biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    /// `acts[0]` is the input, `acts[k]` the output of layer `k`.
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input")
    }
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Scaled-uniform initialisation; the output layer starts small so the
    /// initial policy is close to uniform.
    pub fn new(sizes: Vec<usize>, rng: &mut ChaCha8Rng, output_scale: f64) -> Self {
        let mut params = Vec::with_capacity(Self::param_count(&sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt() * if l + 1 == layers { output_scale } else { 1.0 };
            for _ in 0..w[0] * w[1] {
                params.push(rng.gen_range(-bound..=bound));
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Mlp { sizes, params }
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn forward(&self, x: &[f64]) -> Cache {
        Self::forward_with(&self.sizes, &self.params, x)
    }

    pub fn forward_with(sizes: &[usize], params: &[f64], x: &[f64]) -> Cache {
        debug_assert_eq!(x.len(), sizes[0]);
        let layers = sizes.len() - 1;
        let mut acts = Vec::with_capacity(sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let mut out = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let z: f64 = bias[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if l + 1 < layers { z.tanh() } else { z });
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Cache { acts }
    }

    /// Adds `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            if l + 1 < layers {
                // through tanh: d/dz = (1 - a^2)
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &cache.acts[l];
            for o in 0..n_out {
                let row = off + o * n_in;
                for i in 0..n_in {
                    grad[row + i] += delta[o] * input[i];
                }
                grad[off + n_in * n_out + o] += delta[o];
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    for i in 0..n_in {
                        prev[i] += weights[o * n_in + i] * delta[o];
                    }
                }
                delta = prev;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
