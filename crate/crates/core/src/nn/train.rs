use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{AdamConfig, AdamState, Mlp};
use crate::rng::{self, ChaCha8Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Halve the learning rate every this many epochs; 0 disables decay.
    pub lr_decay_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 64,
            lr: 1e-3,
            lr_decay_every: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        match self.lr_decay_every {
            0 => self.lr,
            every => {
                let halvings = (epoch / every).min(1000) as i32;
                self.lr * libm::pow(0.5, f64::from(halvings))
            }
        }
    }
}

/// Seeded per-epoch shuffle of sample indices, yielded in minibatches.
pub struct MinibatchOrder {
    order: Vec<usize>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl MinibatchOrder {
    pub fn new(samples: usize, batch_size: usize, seed: u64) -> Self {
        MinibatchOrder {
            order: (0..samples).collect(),
            batch_size: batch_size.max(1),
            rng: rng::stream(seed, 1),
        }
    }

    /// Reshuffles and returns this epoch's batches.
    pub fn epoch(&mut self) -> core::slice::Chunks<'_, usize> {
        self.order.shuffle(&mut self.rng);
        self.order.chunks(self.batch_size)
    }
}

/// A network plus its optimizer state; one call to [`Trainer::step`] is one
/// Adam update on one minibatch.
pub struct Trainer {
    pub net: Mlp,
    adam: AdamState,
    xbuf: Vec<f64>,
    ybuf: Vec<f64>,
}

impl Trainer {
    pub fn new(net: Mlp, lr: f64) -> Self {
        let adam = AdamState::new(
            net.params().len(),
            AdamConfig {
                lr,
                ..AdamConfig::default()
            },
        );
        Trainer {
            net,
            adam,
            xbuf: Vec::new(),
            ybuf: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.adam.set_lr(lr);
    }

    pub fn updates(&self) -> u64 {
        self.adam.steps()
    }

    pub fn step(&mut self, inputs: &[f64], targets: &[f64], batch: usize) -> Result<f64> {
        let (loss, grads) = self.net.gradient(inputs, targets, batch)?;
        self.adam.update(self.net.params_mut(), &grads)?;
        Ok(loss)
    }

    /// Gathers rows `idx` of `inputs`/`targets` and takes one step on them.
    pub fn step_indexed(&mut self, inputs: &[f64], targets: &[f64], idx: &[usize]) -> Result<f64> {
        let (di, dout) = (self.net.input_dim(), self.net.output_dim());
        self.xbuf.clear();
        self.ybuf.clear();
        for &i in idx {
            self.xbuf.extend_from_slice(&inputs[i * di..(i + 1) * di]);
            self.ybuf.extend_from_slice(&targets[i * dout..(i + 1) * dout]);
        }
        let (x, y) = (core::mem::take(&mut self.xbuf), core::mem::take(&mut self.ybuf));
        let loss = self.step(&x, &y, idx.len());
        self.xbuf = x;
        self.ybuf = y;
        loss
    }
}

/// Fits `net` to row-major `inputs → targets` by minibatch Adam on MSE.
pub fn train_regression(net: Mlp, inputs: &[f64], targets: &[f64], config: &TrainConfig) -> Result<Mlp> {
    config.check()?;
    let di = net.input_dim();
    let samples = inputs.len() / di;
    if samples == 0 {
        return Err(Error::EmptyData);
    }
    if inputs.len() != samples * di {
        return Err(Error::Shape {
            context: "training inputs",
            expected: samples * di,
            found: inputs.len(),
        });
    }
    if targets.len() != samples * net.output_dim() {
        return Err(Error::Shape {
            context: "training targets",
            expected: samples * net.output_dim(),
            found: targets.len(),
        });
    }
    if config.epochs == 0 {
        return Ok(net);
    }

    let mut trainer = Trainer::new(net, config.lr);
    let mut order = MinibatchOrder::new(samples, config.batch_size, config.seed);
    for epoch in 0..config.epochs {
        trainer.set_lr(config.lr_at_epoch(epoch));
        for idx in order.epoch() {
            trainer.step_indexed(inputs, targets, idx)?;
        }
    }
    Ok(trainer.net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use alloc::vec;

    fn line_data() -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..64).map(|i| -1.0 + 2.0 * i as f64 / 63.0).collect();
        let ys = xs.iter().map(|x| 2.0 * x).collect();
        (xs, ys)
    }

    #[test]
    fn fits_a_line() {
        let (xs, ys) = line_data();
        let net = Mlp::new(&[1, 32, 32, 1], Activation::Identity, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 8,
            lr: 1e-3,
            lr_decay_every: 0,
            seed: 1,
        };
        let trained = train_regression(net, &xs, &ys, &cfg).unwrap();
        let mse = trained.loss(&xs, &ys, 64).unwrap();
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (xs, ys) = line_data();
        let net = Mlp::new(&[1, 4, 1], Activation::Identity, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert_eq!(train_regression(net.clone(), &xs, &ys, &cfg).unwrap(), net);
    }

    #[test]
    fn constant_targets() {
        let (xs, _) = line_data();
        let ys = vec![0.42; xs.len()];
        let net = Mlp::new(&[1, 32, 32, 1], Activation::Identity, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 1000,
            batch_size: 16,
            lr: 1e-3,
            lr_decay_every: 0,
            seed: 0,
        };
        let trained = train_regression(net, &xs, &ys, &cfg).unwrap();
        for y in trained.forward_batch(&xs, xs.len()).unwrap() {
            assert!((y - 0.42).abs() < 1e-2, "{y}");
        }
    }

    #[test]
    fn empty_data_is_an_error() {
        let net = Mlp::new(&[1, 4, 1], Activation::Identity, 0).unwrap();
        assert_eq!(
            train_regression(net, &[], &[], &TrainConfig::default()),
            Err(Error::EmptyData)
        );
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys) = line_data();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 7,
            ..Default::default()
        };
        let a = train_regression(Mlp::new(&[1, 6, 1], Activation::Tanh, 3).unwrap(), &xs, &ys, &cfg);
        let b = train_regression(Mlp::new(&[1, 6, 1], Activation::Tanh, 3).unwrap(), &xs, &ys, &cfg);
        assert_eq!(a.unwrap().params(), b.unwrap().params());
    }

    #[test]
    fn lr_schedule_halves() {
        let cfg = TrainConfig {
            lr: 1.0,
            lr_decay_every: 50,
            ..Default::default()
        };
        assert_eq!(cfg.lr_at_epoch(0), 1.0);
        assert_eq!(cfg.lr_at_epoch(49), 1.0);
        assert_eq!(cfg.lr_at_epoch(50), 0.5);
        assert_eq!(cfg.lr_at_epoch(149), 0.25);
    }
}
