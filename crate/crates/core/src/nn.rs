//! Minimal dense networks with hand-written backprop and Adam.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// Fully connected network with tanh hidden layers and a linear scalar output.
///
/// Parameters live in one flat vector: for each layer the `out × in` weight
/// matrix (row-major) followed by its `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// Xavier-uniform weights, zero biases, output layer scaled by `out_gain`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && *sizes.last().unwrap() == 1);
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        let n_layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == n_layers {
                bound *= out_gain;
            }
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::param_count(sizes)).then(|| Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Multiply-accumulate count of one forward pass.
    pub fn macs(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let mut off = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            layer(&self.params[off..], fan_in, fan_out, &cur, &mut next);
            off += fan_in * fan_out + fan_out;
            if l + 1 < n_layers {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    pub fn forward_traced(&self, x: &[f64], trace: &mut Trace) -> f64 {
        let n_layers = self.sizes.len() - 1;
        trace.acts.resize(n_layers + 1, Vec::new());
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (before, after) = trace.acts.split_at_mut(l + 1);
            let out = &mut after[0];
            layer(&self.params[off..], fan_in, fan_out, &before[l], out);
            off += fan_in * fan_out + fan_out;
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        trace.acts[n_layers][0]
    }

    /// Accumulates `d_out * ∂output/∂params` into `grad`.
    pub fn backward(&self, trace: &Trace, d_out: f64, grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut delta = vec![d_out];
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &trace.acts[l];
            let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for o in 0..fan_out {
                let d = delta[o];
                gb[o] += d;
                let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l > 0 {
                let w = &self.params[off..off + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let d = delta[o];
                    for (p, &wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *p += d * wi;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}

fn layer(params: &[f64], fan_in: usize, fan_out: usize, x: &[f64], out: &mut Vec<f64>) {
    let (w, rest) = params.split_at(fan_in * fan_out);
    out.clear();
    out.extend((0..fan_out).map(|o| {
        let row = &w[o * fan_in..(o + 1) * fan_in];
        rest[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

/// Adam over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Gradient-descent step: `params -= lr * m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scales `grad` in place so its L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn macs_of_default_actor() {
        let net = Mlp::zeros(&[30, 32, 16, 1]);
        assert_eq!(net.macs(), 1488);
    }

    #[test]
    fn traced_forward_matches_forward() {
        let net = Mlp::new(&[4, 5, 3, 1], 1.0, &mut seeding::rng(1));
        let x = [0.3, -0.2, 1.5, 0.7];
        let mut trace = Trace::default();
        assert_eq!(net.forward(&x), net.forward_traced(&x, &mut trace));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn backward_matches_finite_differences() {
        let mut net = Mlp::new(&[3, 4, 2, 1], 1.0, &mut seeding::rng(5));
        let x = [0.4, -1.1, 0.25];
        let mut trace = Trace::default();
        net.forward_traced(&x, &mut trace);
        let mut grad = vec![0.0; net.params().len()];
        net.backward(&trace, 1.0, &mut grad);
        let h = 1e-6;
        for i in 0..grad.len() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = net.forward(&x);
            net.params_mut()[i] = orig - h;
            let down = net.forward(&x);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
