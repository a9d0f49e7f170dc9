//! The auditor's critic `Q(s, a)`, trained from the target dataset either on
//! bootstrapped one-step targets (TD) or on empirical discounted returns (MC).

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Trajectory};
use crate::nn::{Activation, MinibatchOrder, Mlp, TrainConfig, Trainer};
use crate::policy::ensure_valid;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CriticMode {
    /// Regress onto `r_t + γ·Q'(s_{t+1}, a_{t+1})` with a periodically synced
    /// target network `Q'`.
    Td,
    /// Regress onto the empirical discounted return. Needs complete
    /// trajectories.
    Mc,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CriticConfig {
    pub gamma: f64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_every: usize,
    /// Gradient updates between copies of the online weights into the target
    /// network.
    pub target_sync_period: usize,
    pub mode: CriticMode,
    pub seed: u64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            gamma: 0.99,
            hidden: vec![64, 64],
            epochs: 60,
            batch_size: 64,
            lr: 1e-3,
            lr_decay_every: 20,
            target_sync_period: 200,
            mode: CriticMode::Td,
            seed: 0,
        }
    }
}

impl CriticConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma", "must lie in [0, 1]"));
        }
        if self.target_sync_period == 0 {
            return Err(Error::invalid("target_sync_period", "must be at least 1"));
        }
        self.train_config().check()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_decay_every: self.lr_decay_every,
            seed: rng::derive_seed(self.seed, 1),
        }
    }
}

/// `Q(s, a)`: an MLP over `concat(state, action)` with a scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    net: Mlp,
    state_dim: usize,
    action_dim: usize,
}

impl Critic {
    pub fn from_net(net: Mlp, state_dim: usize, action_dim: usize) -> Result<Self> {
        if net.input_dim() != state_dim + action_dim {
            return Err(Error::Shape {
                context: "critic input",
                expected: state_dim + action_dim,
                found: net.input_dim(),
            });
        }
        if net.output_dim() != 1 {
            return Err(Error::Shape {
                context: "critic output",
                expected: 1,
                found: net.output_dim(),
            });
        }
        Ok(Critic {
            net,
            state_dim,
            action_dim,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn eval(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.eval_batch(state, action, 1)?[0])
    }

    pub fn eval_batch(&self, states: &[f64], actions: &[f64], count: usize) -> Result<Vec<f64>> {
        if states.len() != count * self.state_dim {
            return Err(Error::Shape {
                context: "critic states",
                expected: count * self.state_dim,
                found: states.len(),
            });
        }
        if actions.len() != count * self.action_dim {
            return Err(Error::Shape {
                context: "critic actions",
                expected: count * self.action_dim,
                found: actions.len(),
            });
        }
        let mut x = Vec::with_capacity(count * (self.state_dim + self.action_dim));
        for (s, a) in states
            .chunks_exact(self.state_dim.max(1))
            .zip(actions.chunks_exact(self.action_dim.max(1)))
        {
            x.extend_from_slice(s);
            x.extend_from_slice(a);
        }
        self.net.forward_batch(&x, count)
    }
}

/// Discounted returns `G_t = Σ_{j≥t} γ^{j−t} r_j` by the backward recursion
/// `G_t = r_t + γ·G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

pub fn mc_returns(trajectory: &Trajectory, gamma: f64) -> Vec<f64> {
    let rewards: Vec<f64> = trajectory.rewards().collect();
    discounted_returns(&rewards, gamma)
}

#[derive(Debug, Clone)]
pub struct CriticTraining {
    pub critic: Critic,
    /// Truncated final transitions left out of TD batches (no `a_{t+1}`).
    pub dropped_transitions: usize,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Row-major training tensors for the critic.
struct CriticSamples {
    inputs: Vec<f64>,
    next_inputs: Vec<f64>,
    rewards: Vec<f64>,
    bootstrap: Vec<bool>,
    count: usize,
    dropped: usize,
}

fn td_samples(dataset: &Dataset) -> CriticSamples {
    let mut s = CriticSamples {
        inputs: Vec::new(),
        next_inputs: Vec::new(),
        rewards: Vec::new(),
        bootstrap: Vec::new(),
        count: 0,
        dropped: 0,
    };
    let width = dataset.state_dim + dataset.action_dim;
    for traj in &dataset.trajectories {
        for (t, tr) in traj.transitions.iter().enumerate() {
            let next = traj.transitions.get(t + 1);
            if !tr.terminal && next.is_none() {
                s.dropped += 1;
                continue;
            }
            s.inputs.extend_from_slice(&tr.state);
            s.inputs.extend_from_slice(&tr.action);
            match next {
                Some(n) if !tr.terminal => {
                    s.next_inputs.extend_from_slice(&tr.next_state);
                    s.next_inputs.extend_from_slice(&n.action);
                    s.bootstrap.push(true);
                }
                _ => {
                    s.next_inputs.extend(core::iter::repeat_n(0.0, width));
                    s.bootstrap.push(false);
                }
            }
            s.rewards.push(tr.reward);
            s.count += 1;
        }
    }
    s
}

pub fn train_critic(dataset: &Dataset, config: &CriticConfig) -> Result<CriticTraining> {
    config.check()?;
    ensure_valid(dataset)?;
    let (ds, da) = (dataset.state_dim, dataset.action_dim);
    let mut sizes = vec![ds + da];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(1);
    let net = Mlp::new(&sizes, Activation::Identity, rng::derive_seed(config.seed, 0))?;

    let (net, dropped, epoch_losses) = match config.mode {
        CriticMode::Td => train_td(net, dataset, config)?,
        CriticMode::Mc => train_mc(net, dataset, config)?,
    };
    Ok(CriticTraining {
        critic: Critic::from_net(net, ds, da)?,
        dropped_transitions: dropped,
        epoch_losses,
    })
}

fn train_td(net: Mlp, dataset: &Dataset, config: &CriticConfig) -> Result<(Mlp, usize, Vec<f64>)> {
    let samples = td_samples(dataset);
    if samples.count == 0 {
        return Err(Error::EmptyData);
    }
    let width = net.input_dim();
    let train = config.train_config();
    let mut trainer = Trainer::new(net, train.lr);
    let mut target = trainer.net.clone();
    let mut order = MinibatchOrder::new(samples.count, train.batch_size, train.seed);
    let mut losses = Vec::with_capacity(train.epochs);
    let (mut xb, mut nb, mut yb) = (Vec::new(), Vec::new(), Vec::new());

    for epoch in 0..train.epochs {
        trainer.set_lr(train.lr_at_epoch(epoch));
        let (mut sum, mut batches) = (0.0, 0usize);
        for idx in order.epoch() {
            xb.clear();
            nb.clear();
            for &i in idx {
                xb.extend_from_slice(&samples.inputs[i * width..(i + 1) * width]);
                nb.extend_from_slice(&samples.next_inputs[i * width..(i + 1) * width]);
            }
            let next_q = target.forward_batch(&nb, idx.len())?;
            yb.clear();
            yb.extend(idx.iter().zip(&next_q).map(|(&i, q)| {
                if samples.bootstrap[i] {
                    samples.rewards[i] + config.gamma * q
                } else {
                    samples.rewards[i]
                }
            }));
            sum += trainer.step(&xb, &yb, idx.len())?;
            batches += 1;
            if trainer.updates() % config.target_sync_period as u64 == 0 {
                target = trainer.net.clone();
            }
        }
        losses.push(sum / batches.max(1) as f64);
    }
    Ok((trainer.net, samples.dropped, losses))
}

fn train_mc(net: Mlp, dataset: &Dataset, config: &CriticConfig) -> Result<(Mlp, usize, Vec<f64>)> {
    if let Some(t) = dataset.trajectories.iter().find(|t| !t.is_complete()) {
        return Err(Error::TruncatedTrajectory(t.id.0));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for traj in &dataset.trajectories {
        for (tr, g) in traj.transitions.iter().zip(mc_returns(traj, config.gamma)) {
            inputs.extend_from_slice(&tr.state);
            inputs.extend_from_slice(&tr.action);
            targets.push(g);
        }
    }
    if targets.is_empty() {
        return Err(Error::EmptyData);
    }
    let train = config.train_config();
    let mut trainer = Trainer::new(net, train.lr);
    let mut order = MinibatchOrder::new(targets.len(), train.batch_size, train.seed);
    let mut losses = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        trainer.set_lr(train.lr_at_epoch(epoch));
        let (mut sum, mut batches) = (0.0, 0usize);
        for idx in order.epoch() {
            sum += trainer.step_indexed(&inputs, &targets, idx)?;
            batches += 1;
        }
        losses.push(sum / batches.max(1) as f64);
    }
    Ok((trainer.net, 0, losses))
}
