//! Dense tanh MLPs whose weights live in a caller-owned flat parameter
//! vector, so optimizers, clipping and checkpoints see one contiguous slice.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Layer sizes plus the offset of this network inside the flat vector.
/// Weights are row-major `[out][in]`, followed by the bias, per layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Copy, Debug)]
struct LayerSlots {
    weights: usize,
    bias: usize,
    inputs: usize,
    outputs: usize,
}

/// Activations from one forward pass, kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, offset: usize) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Mlp { sizes, offset }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layers(&self) -> Vec<LayerSlots> {
        let mut at = self.offset;
        self.sizes
            .windows(2)
            .map(|w| {
                let slots = LayerSlots {
                    weights: at,
                    bias: at + w[0] * w[1],
                    inputs: w[0],
                    outputs: w[1],
                };
                at += w[0] * w[1] + w[1];
                slots
            })
            .collect()
    }

    /// Orthogonal weights scaled by `hidden_gain` on hidden layers and
    /// `output_gain` on the last layer; zero biases.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], hidden_gain: f64, output_gain: f64, rng: &mut R) {
        let layers = self.layers();
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            let gain = if i == last { output_gain } else { hidden_gain };
            let w = orthogonal(l.outputs, l.inputs, gain, rng);
            params[l.weights..l.weights + w.len()].copy_from_slice(&w);
            params[l.bias..l.bias + l.outputs].fill(0.0);
        }
    }

    pub fn forward(&self, params: &[f64], input: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(input.len(), self.input_dim());
        let layers = self.layers();
        let last = layers.len() - 1;
        cache.activations.resize(layers.len() + 1, Vec::new());
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        for (i, l) in layers.iter().enumerate() {
            let (done, rest) = cache.activations.split_at_mut(i + 1);
            let x = &done[i];
            let y = &mut rest[0];
            y.clear();
            y.extend_from_slice(&params[l.bias..l.bias + l.outputs]);
            for (o, acc) in y.iter_mut().enumerate() {
                let row = &params[l.weights + o * l.inputs..l.weights + (o + 1) * l.inputs];
                *acc += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
            if i != last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, grad_output: &[f64], grads: &mut [f64]) {
        let layers = self.layers();
        let mut delta = grad_output.to_vec();
        for (i, l) in layers.iter().enumerate().rev() {
            let x = &cache.activations[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut grads[l.weights + o * l.inputs..l.weights + (o + 1) * l.inputs];
                row.iter_mut().zip(x).for_each(|(g, v)| *g += d * v);
                grads[l.bias + o] += d;
            }
            if i == 0 {
                break;
            }
            // x is the tanh output of the previous layer
            let mut prev = vec![0.0; l.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &params[l.weights + o * l.inputs..l.weights + (o + 1) * l.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            prev.iter_mut().zip(x).for_each(|(p, a)| *p *= 1.0 - a * a);
            delta = prev;
        }
    }
}

/// A `rows x cols` row-major matrix with orthonormal rows (if `rows <= cols`)
/// or orthonormal columns, times `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n_vec, dim) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while basis.len() < n_vec {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        // modified Gram-Schmidt, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    out
}
