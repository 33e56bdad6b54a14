//! Minimal dense-network machinery: parameter storage, forward evaluation,
//! exact reverse-mode gradients, SGD updates, and a central finite-difference
//! estimator used as a test oracle.
//!
//! Everything is `f64`. Weights are row-major with shape `(out_dim, in_dim)`.
//! Shape mismatches are programmer errors and panic via `assert!`; only
//! configuration problems and non-finite updates surface as `Err`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative as a function of the pre-activation value.
    #[inline]
    fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `y = activation(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major, shape `(out_dim, in_dim)`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Layer {
        Layer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    /// Builds a layer from raw parameters (row-major weights).
    pub fn from_params(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Layer> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("layer dims must be >= 1".into()));
        }
        if weights.len() != in_dim * out_dim || biases.len() != out_dim {
            return Err(Error::Config(format!(
                "layer parameter sizes ({}, {}) do not match dims ({in_dim} x {out_dim})",
                weights.len(),
                biases.len()
            )));
        }
        Ok(Layer {
            in_dim,
            out_dim,
            weights,
            biases,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Row-major weight matrix, `out_dim * in_dim` entries.
    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    #[inline]
    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }
}

/// A feed-forward network: ReLU on hidden layers, identity on the output
/// layer. Q-values and message components must be sign-unrestricted, hence
/// the linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Recorded intermediates of one forward pass: the input plus each layer's
/// pre- and post-activation vectors.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Tape {
    /// Output of the recorded forward pass.
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("tape has at least one layer")
    }
}

/// Per-layer weight and bias gradients, shape-congruent with the source Mlp.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    d_weights: Vec<Vec<f64>>,
    d_biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Gradients {
        Gradients {
            d_weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            d_biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) {
        assert_eq!(self.d_weights.len(), other.d_weights.len(), "gradient layer count mismatch");
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            assert_eq!(a.len(), b.len(), "gradient weight shape mismatch");
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            assert_eq!(a.len(), b.len(), "gradient bias shape mismatch");
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn d_weights(&self, layer: usize) -> &[f64] {
        &self.d_weights[layer]
    }

    pub fn d_biases(&self, layer: usize) -> &[f64] {
        &self.d_biases[layer]
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights.iter().flatten().all(|v| v.is_finite())
            && self.d_biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest absolute entry; used by divergence diagnostics and tests.
    pub fn max_abs(&self) -> f64 {
        self.d_weights
            .iter()
            .flatten()
            .chain(self.d_biases.iter().flatten())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    /// Builds a network with the given hidden widths. Weights are drawn
    /// uniformly from `±1/sqrt(fan_in)`, biases start at zero. Deterministic
    /// for a fixed seed.
    pub fn init(in_dim: usize, hidden_dims: &[usize], out_dim: usize, seed: u64) -> Result<Mlp> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::init_with_rng(in_dim, hidden_dims, out_dim, &mut rng)
    }

    /// As [`Mlp::init`] but drawing from a caller-supplied generator, so a
    /// group of networks can share one seed stream.
    pub fn init_with_rng<R: Rng + ?Sized>(
        in_dim: usize,
        hidden_dims: &[usize],
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Mlp> {
        Mlp::init_with_output_activation(in_dim, hidden_dims, out_dim, Activation::Identity, rng)
    }

    /// Full-control constructor: hidden layers are always ReLU; the output
    /// layer's activation is the caller's choice.
    pub fn init_with_output_activation<R: Rng + ?Sized>(
        in_dim: usize,
        hidden_dims: &[usize],
        out_dim: usize,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Mlp> {
        let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
        dims.push(in_dim);
        dims.extend_from_slice(hidden_dims);
        dims.push(out_dim);
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!(
                "network dimensions must be >= 1, got {dims:?}"
            )));
        }

        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let activation = if k + 1 < n_layers {
                Activation::Relu
            } else {
                output_activation
            };
            let limit = 1.0 / (fan_in as f64).sqrt();
            let mut layer = Layer::zeros(fan_in, fan_out, activation);
            for w in layer.weights_mut() {
                *w = rng.random_range(-limit..limit);
            }
            layers.push(layer);
        }
        Ok(Mlp { layers })
    }

    /// Assembles a network from prebuilt layers, checking that adjacent
    /// dimensions chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Mlp> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config(format!(
                    "layer dims do not chain: {} out vs {} in",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Mlp { layers })
    }

    /// All-zero parameters; handy in tests and for degenerate fixtures.
    pub fn zeros(in_dim: usize, hidden_dims: &[usize], out_dim: usize) -> Mlp {
        let mut net = Mlp::init(in_dim, hidden_dims, out_dim, 0).expect("dims checked by caller");
        for layer in &mut net.layers {
            layer.weights.fill(0.0);
            layer.biases.fill(0.0);
        }
        net
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.layers.first().expect("mlp has at least one layer").in_dim
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("mlp has at least one layer").out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.biases.iter().all(|v| v.is_finite())
        })
    }

    /// Forward pass. Returns the output and a tape of all intermediates.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Tape) {
        assert_eq!(
            x.len(),
            self.input_dim(),
            "input len {} does not match network input dim {}",
            x.len(),
            self.input_dim()
        );

        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur: &[f64] = x;
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut sum = layer.biases[o];
                for (w, v) in row.iter().zip(cur) {
                    sum += w * v;
                }
                *zo = sum;
            }
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(a);
            cur = post.last().expect("just pushed");
        }
        let y = post.last().expect("at least one layer").clone();
        (
            y,
            Tape {
                input: x.to_vec(),
                pre,
                post,
            },
        )
    }

    /// Exact reverse-mode gradients of the recorded forward pass.
    ///
    /// `d_out` is dLoss/dy. Returns the parameter gradients and dLoss/dx,
    /// which lets callers chain through upstream networks.
    pub fn backward(&self, tape: &Tape, d_out: &[f64]) -> (Gradients, Vec<f64>) {
        assert_eq!(
            tape.pre.len(),
            self.layers.len(),
            "tape layer count {} does not match network layer count {}",
            tape.pre.len(),
            self.layers.len()
        );
        assert_eq!(
            tape.input.len(),
            self.input_dim(),
            "tape input len {} does not match network input dim {}",
            tape.input.len(),
            self.input_dim()
        );
        for (k, layer) in self.layers.iter().enumerate() {
            assert_eq!(
                tape.pre[k].len(),
                layer.out_dim,
                "tape layer {k} width does not match network"
            );
        }
        assert_eq!(
            d_out.len(),
            self.output_dim(),
            "d_out len {} does not match network output dim {}",
            d_out.len(),
            self.output_dim()
        );

        let mut grads = Gradients::zeros_like(self);
        let mut d_post = d_out.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let d_z: Vec<f64> = d_post
                .iter()
                .zip(&tape.pre[k])
                .map(|(&d, &z)| d * layer.activation.grad(z))
                .collect();
            let upstream: &[f64] = if k == 0 { &tape.input } else { &tape.post[k - 1] };

            let dw = &mut grads.d_weights[k];
            for (o, &dz) in d_z.iter().enumerate() {
                let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, &v) in row.iter_mut().zip(upstream) {
                    *g = dz * v;
                }
            }
            grads.d_biases[k].copy_from_slice(&d_z);

            let mut d_in = vec![0.0; layer.in_dim];
            for (o, &dz) in d_z.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (di, &w) in d_in.iter_mut().zip(row) {
                    *di += w * dz;
                }
            }
            d_post = d_in;
        }
        (grads, d_post)
    }

    /// One plain SGD step: `p <- p - lr * g` for every parameter.
    ///
    /// A non-finite gradient or resulting parameter aborts the session with a
    /// divergence error; parameters are left untouched in that case.
    pub fn sgd_apply(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        assert_eq!(
            grads.d_weights.len(),
            self.layers.len(),
            "gradient layer count {} does not match network layer count {}",
            grads.d_weights.len(),
            self.layers.len()
        );
        for (k, layer) in self.layers.iter().enumerate() {
            assert_eq!(grads.d_weights[k].len(), layer.weights.len(), "layer {k} weight shape mismatch");
            assert_eq!(grads.d_biases[k].len(), layer.biases.len(), "layer {k} bias shape mismatch");
        }
        if !grads.is_finite() {
            return Err(Error::Divergence(
                "non-finite gradient in SGD update".to_string(),
            ));
        }

        for (k, layer) in self.layers.iter_mut().enumerate() {
            for (w, &g) in layer.weights.iter_mut().zip(&grads.d_weights[k]) {
                *w -= lr * g;
            }
            for (b, &g) in layer.biases.iter_mut().zip(&grads.d_biases[k]) {
                *b -= lr * g;
            }
        }
        if !self.is_finite() {
            return Err(Error::Divergence(
                "non-finite parameter after SGD update".to_string(),
            ));
        }
        Ok(())
    }
}

/// Central finite-difference estimate of the gradients [`Mlp::backward`]
/// computes, for the linear functional `L(params) = d_out . forward(x)`.
///
/// Test oracle only: O(params) forward passes per call.
pub fn fd_gradient(net: &Mlp, x: &[f64], d_out: &[f64], h: f64) -> Gradients {
    assert!(h > 0.0, "finite-difference step must be positive");

    let loss = |net: &Mlp| -> f64 {
        let (y, _) = net.forward(x);
        y.iter().zip(d_out).map(|(a, b)| a * b).sum()
    };

    let mut grads = Gradients::zeros_like(net);
    for k in 0..net.layers.len() {
        for idx in 0..net.layers[k].weights.len() {
            let orig = net.layers[k].weights[idx];
            let mut plus = net.clone();
            plus.layers[k].weights[idx] = orig + h;
            let mut minus = net.clone();
            minus.layers[k].weights[idx] = orig - h;
            grads.d_weights[k][idx] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
        for idx in 0..net.layers[k].biases.len() {
            let orig = net.layers[k].biases[idx];
            let mut plus = net.clone();
            plus.layers[k].biases[idx] = orig + h;
            let mut minus = net.clone();
            minus.layers[k].biases[idx] = orig - h;
            grads.d_biases[k][idx] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
    }
    grads
}

/// Max relative error between two gradient sets, with an absolute floor so
/// near-zero entries compare sanely.
pub fn max_relative_error(a: &Gradients, b: &Gradients) -> f64 {
    let mut worst = 0.0_f64;
    let pairs = a
        .d_weights
        .iter()
        .flatten()
        .zip(b.d_weights.iter().flatten())
        .chain(a.d_biases.iter().flatten().zip(b.d_biases.iter().flatten()));
    for (&x, &y) in pairs {
        let scale = x.abs().max(y.abs()).max(1.0);
        worst = worst.max((x - y).abs() / scale);
    }
    worst
}
