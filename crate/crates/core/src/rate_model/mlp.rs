//! Small fully connected network with ReLU hidden layers and a scalar output,
//! trained by mini-batch backpropagation with Adam.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Feedforward network `inputs -> hidden.. -> 1`.
///
/// Parameters live in one flat vector. Each layer stores its weights
/// column-major (`w[j * out + k]` links input `j` to unit `k`), followed by
/// its biases, so the contribution of one input is a contiguous column. That
/// keeps forward and backward passes cheap for the sparse binary inputs used
/// here.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of every layer from one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `acts[l]` is the post-activation output of layer `l` (the last one is the scalar output).
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-initialized hidden layers; the output layer starts at zero when
    /// `zero_output` is set, so the network computes 0 until trained.
    pub fn new(inputs: usize, hidden: &[usize], zero_output: bool, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let total: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut params = Vec::with_capacity(total);
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            if l + 1 == layers && zero_output {
                params.extend(std::iter::repeat_n(0.0, n_in * n_out + n_out));
                continue;
            }
            let std = (2.0 / n_in.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            params.extend((0..n_in * n_out).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self { sizes, params }
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || *sizes.last().unwrap() != 1 {
            return Err(Error::Dimension("network must end in a single output".into()));
        }
        let total: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params.len() != total {
            return Err(Error::Dimension(format!(
                "expected {total} parameters, found {}",
                params.len()
            )));
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for w in self.sizes.windows(2) {
            off.push(off.last().unwrap() + w[0] * w[1] + w[1]);
        }
        off
    }

    /// Output for input `x`; zero inputs are skipped.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut trace = Trace::default();
        self.forward_traced(x, &mut trace)
    }

    pub fn forward_traced(&self, x: &[f64], trace: &mut Trace) -> f64 {
        assert_eq!(x.len(), self.sizes[0], "input length");
        let off = self.offsets();
        let layers = self.sizes.len() - 1;
        trace.acts.resize(layers, Vec::new());
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off[l]..off[l] + n_in * n_out];
            let b = &self.params[off[l] + n_in * n_out..off[l + 1]];
            let mut z = b.to_vec();
            {
                let input: &[f64] = if l == 0 { x } else { &trace.acts[l - 1] };
                for (j, &xj) in input.iter().enumerate() {
                    if xj != 0.0 {
                        let col = &w[j * n_out..(j + 1) * n_out];
                        for (zk, wk) in z.iter_mut().zip(col) {
                            *zk += wk * xj;
                        }
                    }
                }
            }
            if l + 1 < layers {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            trace.acts[l] = z;
        }
        trace.acts[layers - 1][0]
    }

    /// Adds `dout * d(output)/d(params)` to `grad` for the pass recorded in `trace`.
    pub fn accumulate_gradient(&self, x: &[f64], trace: &Trace, dout: f64, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len(), "gradient length");
        let off = self.offsets();
        let layers = self.sizes.len() - 1;
        let mut delta = vec![dout];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input: &[f64] = if l == 0 { x } else { &trace.acts[l - 1] };
            let (gw, gb) = grad[off[l]..off[l + 1]].split_at_mut(n_in * n_out);
            for (g, d) in gb.iter_mut().zip(&delta) {
                *g += d;
            }
            for (j, &xj) in input.iter().enumerate() {
                if xj != 0.0 {
                    for (g, d) in gw[j * n_out..(j + 1) * n_out].iter_mut().zip(&delta) {
                        *g += d * xj;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off[l]..off[l] + n_in * n_out];
            let prev = &trace.acts[l - 1];
            delta = (0..n_in)
                .map(|j| {
                    if prev[j] <= 0.0 {
                        return 0.0;
                    }
                    w[j * n_out..(j + 1) * n_out].iter().zip(&delta).map(|(a, b)| a * b).sum()
                })
                .collect();
        }
    }

    /// Inserts a new input at position `at` whose weights are zero, so
    /// existing outputs are unchanged.
    pub fn insert_input(&mut self, at: usize) {
        assert!(at <= self.sizes[0]);
        let n_out = self.sizes[1];
        let pos = at * n_out;
        self.params.splice(pos..pos, std::iter::repeat_n(0.0, n_out));
        self.sizes[0] += 1;
    }

    pub fn remove_input(&mut self, at: usize) {
        assert!(at < self.sizes[0]);
        let n_out = self.sizes[1];
        self.params.drain(at * n_out..(at + 1) * n_out);
        self.sizes[0] -= 1;
    }

    /// Root mean square of all parameters.
    pub fn param_rms(&self) -> f64 {
        (self.params.iter().map(|p| p * p).sum::<f64>() / self.params.len().max(1) as f64).sqrt()
    }
}

/// Adam moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.t = self.t.saturating_add(1);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
        }
    }

    /// Forgets the moment history (used after the parameter layout changes).
    pub fn reset(&mut self, len: usize) {
        self.m = vec![0.0; len];
        self.v = vec![0.0; len];
        self.t = 0;
    }
}
