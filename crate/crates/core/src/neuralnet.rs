//! Dense feedforward Q-network with hand-written backpropagation.
//!
//! Hidden layers use a configurable nonlinearity; the output layer is linear
//! with one head per decision. Training minimises `0.5 * (target - Q[a])^2`
//! for a single selected head `a`, so unselected heads receive no gradient.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn random(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-bound..=bound)).collect();
        Layer { inputs, outputs, weights, biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in self.weights.chunks_exact(self.inputs).enumerate() {
            out[o] = self.biases[o] + dot(row, x);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Per-layer intermediate values of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl QNetwork {
    /// `dims` lists layer widths from input to output, e.g. `[4, 64, 64, 3]`.
    pub fn new(dims: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        Self::check_dims(dims)?;
        let layers = dims.windows(2).map(|w| Layer::random(w[0], w[1], rng)).collect();
        Ok(QNetwork { layers, activation })
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        Self::check_dims(dims)?;
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(QNetwork { layers, activation })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("layers", "network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape { expected: pair[0].outputs, got: pair[1].inputs });
            }
        }
        for layer in &layers {
            if layer.weights.len() != layer.inputs * layer.outputs {
                return Err(Error::Shape { expected: layer.inputs * layer.outputs, got: layer.weights.len() });
            }
            if layer.biases.len() != layer.outputs {
                return Err(Error::Shape { expected: layer.outputs, got: layer.biases.len() });
            }
        }
        let net = QNetwork { layers, activation };
        if !net.is_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(net)
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::config("hidden", "layer dims must be non-empty and positive"));
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape { expected: self.num_params(), got: flat.len() });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let (w, b) = (l.weights.len(), l.biases.len());
            l.weights.copy_from_slice(&flat[at..at + w]);
            l.biases.copy_from_slice(&flat[at + w..at + w + b]);
            at += w + b;
        }
        Ok(())
    }

    /// One Q-value per decision head.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache)?;
        Ok(cache.post.pop().unwrap_or_default())
    }

    /// Forward pass keeping every layer's pre- and post-activation values.
    pub fn forward_cached(&self, input: &[f64], cache: &mut ForwardCache) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), got: input.len() });
        }
        let n = self.layers.len();
        cache.pre.resize_with(n, Vec::new);
        cache.post.resize_with(n, Vec::new);
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = std::mem::take(&mut cache.pre[idx]);
            z.resize(layer.outputs, 0.0);
            {
                let x = if idx == 0 { input } else { &cache.post[idx - 1] };
                layer.affine(x, &mut z);
            }
            let a = &mut cache.post[idx];
            a.clear();
            if idx + 1 == n {
                a.extend_from_slice(&z);
            } else {
                a.extend(z.iter().map(|&v| self.activation.apply(v)));
            }
            cache.pre[idx] = z;
        }
        Ok(())
    }

    /// Gradient of `0.5 * (target - Q(input)[action])^2`.
    pub fn backward(&self, input: &[f64], action: usize, target: f64) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        let mut scratch = BackpropScratch::default();
        self.accumulate_gradient(input, action, target, &mut grads, &mut scratch)?;
        Ok(grads)
    }

    /// Adds this sample's gradient into `grads` and returns its loss.
    pub fn accumulate_gradient(
        &self,
        input: &[f64],
        action: usize,
        target: f64,
        grads: &mut Gradients,
        scratch: &mut BackpropScratch,
    ) -> Result<f64> {
        if !target.is_finite() {
            return Err(Error::NonFinite("regression target"));
        }
        if action >= self.output_dim() {
            return Err(Error::Shape { expected: self.output_dim(), got: action });
        }
        self.forward_cached(input, &mut scratch.cache)?;
        let n = self.layers.len();
        let q = scratch.cache.post[n - 1][action];
        let err = q - target;

        // output layer: only the selected head carries error
        let last = &self.layers[n - 1];
        let prev = if n == 1 { input } else { &scratch.cache.post[n - 2] };
        {
            let g = &mut grads.layers[n - 1];
            let row = &mut g.weights[action * last.inputs..(action + 1) * last.inputs];
            for (gw, &x) in row.iter_mut().zip(prev) {
                *gw += err * x;
            }
            g.biases[action] += err;
        }
        if n == 1 {
            return Ok(0.5 * err * err);
        }
        let delta = &mut scratch.delta;
        delta.clear();
        let w_row = &last.weights[action * last.inputs..(action + 1) * last.inputs];
        delta.extend(w_row.iter().map(|w| w * err));

        for idx in (0..n - 1).rev() {
            let layer = &self.layers[idx];
            let z = &scratch.cache.pre[idx];
            let a = &scratch.cache.post[idx];
            for ((d, &zv), &av) in delta.iter_mut().zip(z).zip(a) {
                *d *= self.activation.derivative(zv, av);
            }
            let x = if idx == 0 { input } else { &scratch.cache.post[idx - 1] };
            let g = &mut grads.layers[idx];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                for (gw, &xv) in g.weights[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(x) {
                    *gw += d * xv;
                }
            }
            if idx > 0 {
                let next = &mut scratch.next_delta;
                next.clear();
                next.resize(layer.inputs, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (nd, &w) in next.iter_mut().zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs]) {
                        *nd += w * d;
                    }
                }
                std::mem::swap(delta, next);
            }
        }
        Ok(0.5 * err * err)
    }
}

/// Reusable buffers for [`QNetwork::accumulate_gradient`].
#[derive(Clone, Debug, Default)]
pub struct BackpropScratch {
    cache: ForwardCache,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradient with the same shapes as a network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &QNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.biases.len()] })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    fn matches(&self, net: &QNetwork) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len())
    }
}

/// Frozen copy of an online network used for bootstrap targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNetwork(QNetwork);

impl TargetNetwork {
    pub fn new(online: &QNetwork) -> Self {
        TargetNetwork(online.clone())
    }

    pub fn sync(&mut self, online: &QNetwork) {
        self.0.clone_from(online);
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.0.forward(input)
    }

    pub fn network(&self) -> &QNetwork {
        &self.0
    }
}

/// Moves network parameters against a gradient.
pub trait Optimizer {
    fn step(&mut self, net: &mut QNetwork, grads: &Gradients) -> Result<()>;
}

/// Plain gradient descent, `w <- w - lr * g`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, net: &mut QNetwork, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) {
            return Err(Error::Shape { expected: net.num_params(), got: grads.flat().len() });
        }
        for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
            for (w, d) in l.weights.iter_mut().zip(&g.weights) {
                *w -= self.lr * d;
            }
            for (b, d) in l.biases.iter_mut().zip(&g.biases) {
                *b -= self.lr * d;
            }
        }
        Ok(())
    }
}

/// Adaptive-moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Adam {
    pub fn new(lr: f64, num_params: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], steps: 0 }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, net: &mut QNetwork, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) || self.m.len() != net.num_params() {
            return Err(Error::Shape { expected: net.num_params(), got: self.m.len() });
        }
        self.steps = self.steps.saturating_add(1);
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let mut at = 0;
        for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
            for (p, &d) in l.weights.iter_mut().chain(l.biases.iter_mut()).zip(g.weights.iter().chain(&g.biases)) {
                let m = &mut self.m[at];
                let v = &mut self.v[at];
                *m = b1 * *m + (1.0 - b1) * d;
                *v = b2 * *v + (1.0 - b2) * d * d;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                at += 1;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn build(self, lr: f64, net: &QNetwork) -> Box<dyn Optimizer + Send> {
        match self {
            OptimizerKind::Sgd => Box::new(Sgd { lr }),
            OptimizerKind::Adam => Box::new(Adam::new(lr, net.num_params())),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}
