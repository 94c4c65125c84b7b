//! Fully connected networks with hand-written reverse mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{matmul, matmul_nt, matmul_tn};
use super::params::{ParamView, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => x.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => x.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the activation's output.
    pub fn backprop(self, output: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, y) in grad.iter_mut().zip(output) {
                    if *y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, y) in grad.iter_mut().zip(output) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Sigmoid => {
                for (g, y) in grad.iter_mut().zip(output) {
                    *g *= y * (1.0 - y);
                }
            }
        }
    }
}

/// `y = x Wᵀ + b` over a row-major batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    weight_shape: [usize; 2],
    bias_shape: [usize; 1],
    names: [String; 2],
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize, name: &str) -> Self {
        Self {
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            weight_shape: [outputs, inputs],
            bias_shape: [outputs],
            names: [format!("{name}.weight"), format!("{name}.bias")],
        }
    }

    /// Uniform in `±scale`; `scale = None` uses `1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        name: &str,
        scale: Option<f64>,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(inputs, outputs, name);
        let bound = scale.unwrap_or(1.0 / (inputs.max(1) as f64).sqrt());
        for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weight_shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight_shape[0]
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let (i, o) = (self.inputs(), self.outputs());
        let mut y = vec![0.0; batch * o];
        for row in y.chunks_exact_mut(o) {
            row.copy_from_slice(&self.bias);
        }
        matmul_nt(x, &self.weight, &mut y, batch, i, o, true);
        y
    }

    /// Accumulates parameter gradients into `grads` (when given) and returns `∂/∂x`.
    pub fn backward(
        &self,
        x: &[f64],
        grad_out: &[f64],
        batch: usize,
        grads: Option<&mut Linear>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (i, o) = (self.inputs(), self.outputs());
        if let Some(g) = grads {
            matmul_tn(grad_out, x, &mut g.weight, o, batch, i, true);
            for row in grad_out.chunks_exact(o) {
                for (b, v) in g.bias.iter_mut().zip(row) {
                    *b += v;
                }
            }
        }
        want_input.then(|| {
            let mut gx = vec![0.0; batch * i];
            matmul(grad_out, &self.weight, &mut gx, batch, o, i, false);
            gx
        })
    }

    pub(crate) fn views(&self) -> [ParamView<'_>; 2] {
        [
            ParamView {
                name: &self.names[0],
                shape: &self.weight_shape,
                data: &self.weight,
            },
            ParamView {
                name: &self.names[1],
                shape: &self.bias_shape,
                data: &self.bias,
            },
        ]
    }

    pub(crate) fn slots(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// ReLU hidden layers followed by a configurable output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    output: Activation,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    batch: usize,
    // acts[0] is the input; acts[l + 1] is the activated output of layer l.
    acts: Vec<Vec<f64>>,
}

impl MlpTape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape holds at least the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`. `final_scale` overrides the init range of the last layer.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output: Activation,
        final_scale: Option<f64>,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs an input and an output size");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let scale = if l + 1 == n { final_scale } else { None };
                Linear::init(sizes[l], sizes[l + 1], &format!("layer{l}"), scale, rng)
            })
            .collect();
        Self { layers, output }
    }

    pub fn from_layers(layers: Vec<Linear>, output: Activation) -> Self {
        assert!(!layers.is_empty());
        for w in layers.windows(2) {
            assert_eq!(w[0].outputs(), w[1].inputs(), "layer sizes do not chain");
        }
        Self { layers, output }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Linear::outputs).unwrap_or(0)
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    /// Layer widths `[in, h1, ..., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Linear::outputs))
            .collect()
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.layers.len() {
            self.output
        } else {
            Activation::Relu
        }
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), batch * self.input_dim());
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h, batch);
            self.activation(l).apply(&mut h);
        }
        h
    }

    pub fn forward_tape(&self, x: &[f64], batch: usize) -> MlpTape {
        debug_assert_eq!(x.len(), batch * self.input_dim());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut h = layer.forward(acts.last().unwrap(), batch);
            self.activation(l).apply(&mut h);
            acts.push(h);
        }
        MlpTape { batch, acts }
    }

    /// Reverse pass. Parameter gradients accumulate into `grads`; returns `∂/∂input`.
    pub fn backward(&self, tape: &MlpTape, grad_out: &[f64], mut grads: Option<&mut Mlp>) -> Vec<f64> {
        let batch = tape.batch;
        let mut g = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            self.activation(l).backprop(&tape.acts[l + 1], &mut g);
            let lg = grads.as_deref_mut().map(|m| &mut m.layers[l]);
            g = self.layers[l]
                .backward(&tape.acts[l], &g, batch, lg, true)
                .expect("input gradient requested");
        }
        g
    }
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<ParamView<'_>> {
        self.layers.iter().flat_map(Linear::views).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Linear::slots).collect()
    }
}
