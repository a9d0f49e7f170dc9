use alloc::vec;
use alloc::vec::Vec;

// Shadowed by std's inherent methods whenever std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully-connected network with tanh hidden layers.
///
/// Parameters live in one flat buffer: for every layer, the `out × in`
/// row-major weight matrix followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: Activation,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], output: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let mut rng = rng::stream(seed, 0);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(
                "layer_sizes",
                "need at least input and output layers, all positive",
            ));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            output,
            params: vec![0.0; param_count(sizes)],
        })
    }

    pub fn from_params(sizes: &[usize], output: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape {
                context: "mlp parameters",
                expected: net.params.len(),
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let offset = self.offset(l);
        let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + fi * fo];
        let b = &self.params[offset + fi * fo..offset + fi * fo + fo];
        (w, b)
    }

    fn offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.num_layers() {
            self.output
        } else {
            Activation::Tanh
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(input, 1)
    }

    /// Row-major batch of `batch` inputs → row-major batch of outputs.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check_inputs(inputs, batch)?;
        let mut x = inputs.to_vec();
        for l in 0..self.num_layers() {
            x = self.layer_forward(l, &x, batch);
        }
        Ok(x)
    }

    fn check_inputs(&self, inputs: &[f64], batch: usize) -> Result<()> {
        if inputs.len() != batch * self.input_dim() {
            return Err(Error::Shape {
                context: "mlp input",
                expected: batch * self.input_dim(),
                found: inputs.len(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, x: &[f64], batch: usize) -> Vec<f64> {
        let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
        let (w, b) = self.layer(l);
        let act = self.activation(l);
        let mut out = vec![0.0; batch * fo];
        for (row, y) in x.chunks_exact(fi).zip(out.chunks_exact_mut(fo)) {
            for (j, yj) in y.iter_mut().enumerate() {
                let wj = &w[j * fi..(j + 1) * fi];
                let z = b[j] + wj.iter().zip(row).map(|(a, c)| a * c).sum::<f64>();
                *yj = act.apply(z);
            }
        }
        out
    }

    /// Mean-squared-error loss `L = mean_b ‖f(x_b) − y_b‖²` and its exact
    /// gradient with respect to every parameter (same layout as
    /// [`Mlp::params`]).
    pub fn gradient(&self, inputs: &[f64], targets: &[f64], batch: usize) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(inputs, batch)?;
        if batch == 0 {
            return Err(Error::EmptyData);
        }
        let out_dim = self.output_dim();
        if targets.len() != batch * out_dim {
            return Err(Error::Shape {
                context: "mlp targets",
                expected: batch * out_dim,
                found: targets.len(),
            });
        }

        let layers = self.num_layers();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        acts.push(inputs.to_vec());
        for l in 0..layers {
            let next = self.layer_forward(l, &acts[l], batch);
            acts.push(next);
        }

        let scale = 2.0 / batch as f64;
        let out = &acts[layers];
        let mut loss = 0.0;
        let act = self.activation(layers - 1);
        let mut delta: Vec<f64> = out
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let r = y - t;
                loss += r * r;
                scale * r * act.derivative_from_output(*y)
            })
            .collect();
        loss /= batch as f64;

        let mut grads = vec![0.0; self.params.len()];
        for l in (0..layers).rev() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let offset = self.offset(l);
            let a_prev = &acts[l];
            {
                let (gw, gb) = grads[offset..offset + fi * fo + fo].split_at_mut(fi * fo);
                for (d, a) in delta.chunks_exact(fo).zip(a_prev.chunks_exact(fi)) {
                    for j in 0..fo {
                        let dj = d[j];
                        gb[j] += dj;
                        for (g, ai) in gw[j * fi..(j + 1) * fi].iter_mut().zip(a) {
                            *g += dj * ai;
                        }
                    }
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let prev_act = self.activation(l - 1);
                let mut next_delta = vec![0.0; batch * fi];
                for ((d, nd), a) in delta
                    .chunks_exact(fo)
                    .zip(next_delta.chunks_exact_mut(fi))
                    .zip(a_prev.chunks_exact(fi))
                {
                    for j in 0..fo {
                        let dj = d[j];
                        for (n, wji) in nd.iter_mut().zip(&w[j * fi..(j + 1) * fi]) {
                            *n += dj * wji;
                        }
                    }
                    for (n, ai) in nd.iter_mut().zip(a) {
                        *n *= prev_act.derivative_from_output(*ai);
                    }
                }
                delta = next_delta;
            }
        }
        Ok((loss, grads))
    }

    /// MSE over a full batch without gradients.
    pub fn loss(&self, inputs: &[f64], targets: &[f64], batch: usize) -> Result<f64> {
        let out = self.forward_batch(inputs, batch)?;
        if targets.len() != out.len() {
            return Err(Error::LengthMismatch(targets.len(), out.len()));
        }
        let sse: f64 = out.iter().zip(targets).map(|(y, t)| (y - t) * (y - t)).sum();
        Ok(sse / batch.max(1) as f64)
    }
}
