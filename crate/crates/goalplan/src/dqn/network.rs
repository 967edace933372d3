//! Dense feed-forward action-value network with hand-rolled backprop.
//!
//! Everything is `f64` and allocation is not a concern at these sizes, so the
//! implementation favors being easy to verify: gradients are checked against
//! central finite differences in the test suite.
//!
//! Shape mismatches are programmer error and panic via `assert!`.

use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed in terms of the post-activation value, which is
    /// enough for rectifier and identity units.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `y = act(W x + b)`. Bias-free layers keep `biases` empty.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `[out_dim x in_dim]`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Self {
        assert_eq!(weights.len(), in_dim * out_dim, "weight count mismatch");
        assert!(
            biases.is_empty() || biases.len() == out_dim,
            "bias count mismatch"
        );
        Self {
            in_dim,
            out_dim,
            weights,
            biases,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn has_bias(&self) -> bool {
        !self.biases.is_empty()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(input.len(), self.in_dim);
        out.clear();
        for j in 0..self.out_dim {
            let row = &self.weights[j * self.in_dim..(j + 1) * self.in_dim];
            let mut z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            if self.has_bias() {
                z += self.biases[j];
            }
            out.push(self.activation.apply(z));
        }
    }
}

/// Parameter gradients with the same shapes as the network they belong to.
#[derive(Debug, Clone)]
pub struct Gradients {
    d_weights: Vec<Vec<f64>>,
    d_biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(net: &QNetwork) -> Self {
        Self {
            d_weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            d_biases: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }

    /// Flattened view in the same order as [`QNetwork::params`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for (w, b) in self.d_weights.iter().zip(&self.d_biases) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        flat
    }
}

/// MLP approximation of the action-value function.
#[derive(Debug, Clone)]
pub struct QNetwork {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

impl QNetwork {
    /// Rectifier MLP with biased layers and an identity output layer.
    ///
    /// Weights start uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; biases
    /// start at zero.
    pub fn mlp(input_dim: usize, hidden: &[usize], n_outputs: usize, rng: &mut RngStream) -> Self {
        assert!(input_dim > 0 && n_outputs > 0);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut in_dim = input_dim;
        for (i, &out_dim) in hidden.iter().chain(std::iter::once(&n_outputs)).enumerate() {
            let activation = if i == hidden.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            let bound = 1.0 / (in_dim as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| (2.0 * rng.next_uniform() - 1.0) * bound)
                .collect();
            layers.push(DenseLayer::from_parts(
                in_dim,
                out_dim,
                weights,
                vec![0.0; out_dim],
                activation,
            ));
            in_dim = out_dim;
        }
        Self { input_dim, layers }
    }

    /// Zero-initialized bias-free linear map.
    ///
    /// Over one-hot inputs this is exactly a lookup table: output `a` for
    /// input `s` is the single weight `W[a][s]`, so gradient descent on the
    /// temporal-difference loss reduces to tabular Q-learning.
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        let layer = DenseLayer::from_parts(
            n_states,
            n_actions,
            vec![0.0; n_states * n_actions],
            Vec::new(),
            Activation::Identity,
        );
        Self {
            input_dim: n_states,
            layers: vec![layer],
        }
    }

    pub fn from_layers(input_dim: usize, layers: Vec<DenseLayer>) -> Self {
        assert!(!layers.is_empty());
        assert_eq!(layers[0].in_dim, input_dim, "first layer dim mismatch");
        for pair in layers.windows(2) {
            assert_eq!(pair[0].out_dim, pair[1].in_dim, "layer chain mismatch");
        }
        Self { input_dim, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Action values for one state. Deterministic in `(self, input)`.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(
            input.len(),
            self.input_dim,
            "input has {} entries, network expects {}",
            input.len(),
            self.input_dim
        );
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Forward pass that keeps every layer's post-activation output, for use
    /// by [`QNetwork::backward_into`].
    pub fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(input.len(), self.input_dim);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = if i == 0 { input } else { &acts[i - 1] };
            let mut out = Vec::new();
            layer.forward_into(x, &mut out);
            acts.push(out);
        }
        acts
    }

    /// Backpropagates `d_out` (gradient w.r.t. the network output) through
    /// the cached activations, accumulating parameter gradients into `grads`.
    pub fn backward_into(
        &self,
        input: &[f64],
        acts: &[Vec<f64>],
        d_out: &[f64],
        grads: &mut Gradients,
    ) {
        assert_eq!(acts.len(), self.layers.len());
        assert_eq!(d_out.len(), self.output_dim());
        let mut delta = d_out.to_vec();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let x: &[f64] = if idx == 0 { input } else { &acts[idx - 1] };
            let y = &acts[idx];
            // Gradient through the activation.
            let dz: Vec<f64> = delta
                .iter()
                .zip(y)
                .map(|(d, &out)| d * layer.activation.grad_from_output(out))
                .collect();
            let dw = &mut grads.d_weights[idx];
            for j in 0..layer.out_dim {
                let row = &mut dw[j * layer.in_dim..(j + 1) * layer.in_dim];
                for (slot, &xi) in row.iter_mut().zip(x) {
                    *slot += dz[j] * xi;
                }
            }
            if layer.has_bias() {
                for (slot, &d) in grads.d_biases[idx].iter_mut().zip(&dz) {
                    *slot += d;
                }
            }
            if idx > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for j in 0..layer.out_dim {
                    let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
                    for (slot, &w) in prev.iter_mut().zip(row) {
                        *slot += dz[j] * w;
                    }
                }
                delta = prev;
            }
        }
    }

    /// One plain gradient-descent step: `theta -= lr * grad`.
    pub fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (dw, db)) in self
            .layers
            .iter_mut()
            .zip(grads.d_weights.iter().zip(&grads.d_biases))
        {
            for (w, g) in layer.weights.iter_mut().zip(dw) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(db) {
                *b -= lr * g;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat parameter vector: per layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut pos = 0;
        for layer in &mut self.layers {
            let n = layer.weights.len();
            layer.weights.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
            let n = layer.biases.len();
            layer.biases.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
    }
}
