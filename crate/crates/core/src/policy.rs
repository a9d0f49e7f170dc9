//! Black-box policies: the query interface the auditor sees, behavior-cloned
//! networks, shadow sets, and the two evasion wrappers (Gaussian action
//! distortion and the K-way ensemble defense).

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, MembershipMap, TrajectoryId};
use crate::nn::{train_regression, Activation, Mlp, TrainConfig};
use crate::rng;
use crate::{Error, Result};

/// State → action map with actions in `[-1, 1]^{d_a}`.
pub trait Policy: Send + Sync {
    fn action_dim(&self) -> usize;

    fn label(&self) -> &str;

    fn act(&self, state: &[f64]) -> Result<Vec<f64>>;

    /// Row-major batch of `count` states. Rows are queried in order.
    fn act_batch(&self, states: &[f64], count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        if states.len() % count != 0 {
            return Err(Error::Shape {
                context: "policy batch",
                expected: count * (states.len() / count).max(1),
                found: states.len(),
            });
        }
        let dim = states.len() / count;
        let mut out = Vec::with_capacity(count * self.action_dim());
        for s in states.chunks_exact(dim) {
            out.extend(self.act(s)?);
        }
        Ok(out)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn label(&self) -> &str {
        (**self).label()
    }
    fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        (**self).act(state)
    }
    fn act_batch(&self, states: &[f64], count: usize) -> Result<Vec<f64>> {
        (**self).act_batch(states, count)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn label(&self) -> &str {
        (**self).label()
    }
    fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        (**self).act(state)
    }
    fn act_batch(&self, states: &[f64], count: usize) -> Result<Vec<f64>> {
        (**self).act_batch(states, count)
    }
}

/// What the audit queries. Any [`Policy`] is a suspect that ignores the
/// source trajectory; only the defense side (which owns the suspect) may use
/// it, e.g. to route an exclude-source ensemble. The auditor never inspects
/// the id beyond passing it through.
pub trait SuspectView: Send + Sync {
    fn suspect_label(&self) -> &str;

    fn act_batch_for(&self, source: TrajectoryId, states: &[f64], count: usize) -> Result<Vec<f64>>;
}

impl<P: Policy + ?Sized> SuspectView for P {
    fn suspect_label(&self) -> &str {
        self.label()
    }

    fn act_batch_for(&self, _source: TrajectoryId, states: &[f64], count: usize) -> Result<Vec<f64>> {
        self.act_batch(states, count)
    }
}

/// Returns the same action for every state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy {
    pub action: Vec<f64>,
    pub label: String,
}

impl ConstantPolicy {
    pub fn new(action: Vec<f64>) -> Self {
        let label = format!("constant{action:?}");
        ConstantPolicy { action, label }
    }
}

impl Policy for ConstantPolicy {
    fn action_dim(&self) -> usize {
        self.action.len()
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn act(&self, _state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.action.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyNetConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for PolicyNetConfig {
    fn default() -> Self {
        PolicyNetConfig {
            hidden: vec![32, 32],
            // A constant rate leaves shadows at a stable minibatch-noise
            // spread rather than collapsing them onto one function.
            train: TrainConfig {
                epochs: 20,
                batch_size: 32,
                lr: 1e-3,
                lr_decay_every: 0,
                seed: 0,
            },
        }
    }
}

/// A behavior-cloned network policy. Deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct BcPolicy {
    pub net: Mlp,
    pub label: String,
}

impl BcPolicy {
    pub fn new(net: Mlp, label: impl Into<String>) -> Result<Self> {
        if net.output_activation() != Activation::Tanh {
            return Err(Error::invalid("policy net", "output activation must be tanh"));
        }
        Ok(BcPolicy {
            net,
            label: label.into(),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }
}

impl Policy for BcPolicy {
    fn action_dim(&self) -> usize {
        self.net.output_dim()
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(state)
    }
    fn act_batch(&self, states: &[f64], count: usize) -> Result<Vec<f64>> {
        self.net.forward_batch(states, count)
    }
}

pub(crate) fn ensure_valid(dataset: &Dataset) -> Result<()> {
    dataset.validate().map_err(|v| {
        let more = if v.len() > 1 {
            format!(" (+{} more)", v.len() - 1)
        } else {
            String::new()
        };
        Error::InvalidDataset(format!("{}{more}", v[0]))
    })
}

/// Behavior cloning: MSE regression of recorded actions on recorded states.
pub fn train_bc(dataset: &Dataset, config: &PolicyNetConfig, seed: u64) -> Result<BcPolicy> {
    ensure_valid(dataset)?;
    let mut sizes = vec![dataset.state_dim];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(dataset.action_dim);
    let net = Mlp::new(&sizes, Activation::Tanh, rng::derive_seed(seed, 0))?;

    let n = dataset.num_transitions();
    let mut inputs = Vec::with_capacity(n * dataset.state_dim);
    let mut targets = Vec::with_capacity(n * dataset.action_dim);
    for tr in dataset.transitions() {
        inputs.extend_from_slice(&tr.state);
        targets.extend_from_slice(&tr.action);
    }
    let train = TrainConfig {
        seed: rng::derive_seed(seed, 1),
        ..config.train.clone()
    };
    let net = train_regression(net, &inputs, &targets, &train)?;
    BcPolicy::new(net, format!("bc:{}:seed{seed}", dataset.name))
}

/// `k` BC policies that differ only in their seeds `base_seed..base_seed+k`.
pub fn train_shadows(
    dataset: &Dataset,
    k: usize,
    config: &PolicyNetConfig,
    base_seed: u64,
) -> Result<Vec<BcPolicy>> {
    check_shadow_count(k)?;
    (0..k as u64)
        .map(|i| train_bc(dataset, config, base_seed + i))
        .collect()
}

pub fn check_shadow_count(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid("shadows", "need at least 2 shadow models"));
    }
    Ok(())
}

/// Adds clipped Gaussian noise `N(0, σ²)` to every action of `inner`. Query
/// `i` (counted across the wrapper's lifetime) draws from stream `i` of
/// `seed`, so results reproduce whenever queries arrive in the same order.
#[derive(Debug)]
pub struct GaussianDistortion<P> {
    inner: P,
    sigma: f64,
    seed: u64,
    queries: AtomicU64,
    label: String,
}

pub fn gaussian_distort<P: Policy>(inner: P, sigma: f64, seed: u64) -> Result<GaussianDistortion<P>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", "must be finite and nonnegative"));
    }
    let label = format!("{}+gauss{sigma}", inner.label());
    Ok(GaussianDistortion {
        inner,
        sigma,
        seed,
        queries: AtomicU64::new(0),
        label,
    })
}

impl<P> GaussianDistortion<P> {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn distort(&self, action: &mut [f64]) {
        let query = self.queries.fetch_add(1, Ordering::Relaxed);
        if self.sigma > 0.0 {
            let mut rng = rng::stream(self.seed, query);
            let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
            for a in action.iter_mut() {
                *a += normal.sample(&mut rng);
            }
        }
        for a in action.iter_mut() {
            *a = a.clamp(-1.0, 1.0);
        }
    }
}

impl<P: Policy> Policy for GaussianDistortion<P> {
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.inner.act(state)?;
        self.distort(&mut a);
        Ok(a)
    }
    fn act_batch(&self, states: &[f64], count: usize) -> Result<Vec<f64>> {
        let mut out = self.inner.act_batch(states, count)?;
        let da = self.inner.action_dim();
        if da > 0 {
            for row in out.chunks_exact_mut(da) {
                self.distort(row);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EnsembleMode {
    /// Average only sub-policies whose subset excludes the queried trajectory.
    ExcludeSource,
    MeanAll,
}

/// Ensemble defense: sub-policy `i` was trained on split subset `i`; the
/// output is the arithmetic mean of the selected sub-policies' actions.
pub struct EnsemblePolicy {
    members: Vec<Box<dyn Policy>>,
    membership: MembershipMap,
    mode: EnsembleMode,
    label: String,
}

pub fn ensemble_defended(
    members: Vec<Box<dyn Policy>>,
    membership: MembershipMap,
    mode: EnsembleMode,
) -> Result<EnsemblePolicy> {
    if members.len() < 2 {
        return Err(Error::invalid("sub_policies", "need at least 2 sub-policies"));
    }
    let da = members[0].action_dim();
    if members.iter().any(|m| m.action_dim() != da) {
        return Err(Error::invalid("sub_policies", "action dimensions differ"));
    }
    let label = match mode {
        EnsembleMode::ExcludeSource => format!("ensemble{}:exclude-source", members.len()),
        EnsembleMode::MeanAll => format!("ensemble{}:mean-all", members.len()),
    };
    Ok(EnsemblePolicy {
        members,
        membership,
        mode,
        label,
    })
}

impl EnsemblePolicy {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mode(&self) -> EnsembleMode {
        self.mode
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn selected(&self, source: Option<TrajectoryId>) -> Vec<usize> {
        let excluded = match (self.mode, source) {
            (EnsembleMode::ExcludeSource, Some(id)) => self.membership.subset_of(id),
            _ => None,
        };
        let chosen: Vec<usize> = (0..self.members.len())
            .filter(|i| Some(*i) != excluded)
            .collect();
        if chosen.is_empty() {
            (0..self.members.len()).collect()
        } else {
            chosen
        }
    }

    pub fn act_for(&self, state: &[f64], source: Option<TrajectoryId>) -> Result<Vec<f64>> {
        self.act_batch_routed(state, 1, source)
    }

    pub fn act_batch_routed(
        &self,
        states: &[f64],
        count: usize,
        source: Option<TrajectoryId>,
    ) -> Result<Vec<f64>> {
        let chosen = self.selected(source);
        let mut sum: Vec<f64> = Vec::new();
        for &i in &chosen {
            let out = self.members[i].act_batch(states, count)?;
            if sum.is_empty() {
                sum = out;
            } else {
                for (s, o) in sum.iter_mut().zip(out) {
                    *s += o;
                }
            }
        }
        let k = chosen.len() as f64;
        sum.iter_mut().for_each(|s| *s /= k);
        Ok(sum)
    }
}

impl SuspectView for EnsemblePolicy {
    fn suspect_label(&self) -> &str {
        &self.label
    }

    fn act_batch_for(&self, source: TrajectoryId, states: &[f64], count: usize) -> Result<Vec<f64>> {
        self.act_batch_routed(states, count, Some(source))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testing::toy_dataset;
    use crate::env::{benchmark_controllers, generate_dataset, LinearControlEnv};
    use rand::Rng;

    fn constant(v: f64) -> Box<dyn Policy> {
        Box::new(ConstantPolicy::new(vec![v]))
    }

    fn probe_grid() -> Vec<f64> {
        let mut s = Vec::new();
        for i in 0..11 {
            for j in 0..11 {
                s.push(-1.0 + 0.2 * i as f64);
                s.push(-1.0 + 0.2 * j as f64);
            }
        }
        s
    }

    fn small_config() -> PolicyNetConfig {
        PolicyNetConfig {
            hidden: vec![16, 16],
            train: TrainConfig {
                epochs: 5,
                ..PolicyNetConfig::default().train
            },
        }
    }

    #[test]
    fn bc_fits_controller_data() {
        let env = LinearControlEnv::default();
        let d = generate_dataset("c1", &env, &benchmark_controllers()[1], 100, 4).unwrap();
        let p = train_bc(&d, &PolicyNetConfig::default(), 0).unwrap();
        let n = d.num_transitions() as f64;
        let mse = d
            .transitions()
            .map(|t| {
                let a = p.act(&t.state).unwrap()[0];
                (a - t.action[0]).powi(2)
            })
            .sum::<f64>()
            / n;
        assert!(mse < 0.05, "bc mse {mse}");
    }

    #[test]
    fn bc_seeds() {
        let d = toy_dataset(4, 10, 1);
        let cfg = small_config();
        let grid = probe_grid();
        let a = train_bc(&d, &cfg, 0).unwrap().act_batch(&grid, 121).unwrap();
        let b = train_bc(&d, &cfg, 0).unwrap().act_batch(&grid, 121).unwrap();
        let c = train_bc(&d, &cfg, 1).unwrap().act_batch(&grid, 121).unwrap();
        assert_eq!(a, b);
        let gap = a.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap > 0.0);
    }

    #[test]
    fn bc_rejects_invalid_dataset() {
        let mut d = toy_dataset(2, 3, 1);
        d.trajectories[0].transitions[1].action.push(0.0);
        assert!(matches!(
            train_bc(&d, &small_config(), 0),
            Err(Error::InvalidDataset(_))
        ));
    }

    #[test]
    fn shadow_counts() {
        let d = toy_dataset(3, 4, 1);
        let cfg = PolicyNetConfig {
            hidden: vec![4],
            train: TrainConfig {
                epochs: 1,
                ..Default::default()
            },
        };
        assert!(train_shadows(&d, 1, &cfg, 0).is_err());
        for k in [9, 15, 21] {
            let shadows = train_shadows(&d, k, &cfg, 100).unwrap();
            assert_eq!(shadows.len(), k);
            let mut labels: Vec<&str> = shadows.iter().map(|s| s.label()).collect();
            labels.sort_unstable();
            labels.dedup();
            assert_eq!(labels.len(), k);
        }
    }

    #[test]
    fn distortion_zero_sigma_is_identity() {
        let d = toy_dataset(2, 5, 1);
        let inner = train_bc(&d, &small_config(), 3).unwrap();
        let grid = probe_grid();
        let expect = inner.act_batch(&grid, 121).unwrap();
        let wrapped = gaussian_distort(inner, 0.0, 9).unwrap();
        assert_eq!(wrapped.act_batch(&grid, 121).unwrap(), expect);
    }

    #[test]
    fn distortion_stays_in_bounds() {
        let wrapped = gaussian_distort(ConstantPolicy::new(vec![0.95, -0.95]), 0.5, 1).unwrap();
        for _ in 0..2000 {
            let a = wrapped.act(&[0.0]).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn distortion_noise_has_requested_spread() {
        for sigma in [0.01, 0.1] {
            let wrapped = gaussian_distort(ConstantPolicy::new(vec![0.0]), sigma, 17).unwrap();
            let n = 10_000;
            let xs: Vec<f64> = (0..n).map(|_| wrapped.act(&[0.0]).unwrap()[0]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            assert!((sd - sigma).abs() <= 0.15 * sigma, "sd {sd} vs {sigma}");
        }
    }

    #[test]
    fn distortion_reproducible_in_query_order() {
        let a = gaussian_distort(ConstantPolicy::new(vec![0.1]), 0.1, 5).unwrap();
        let b = gaussian_distort(ConstantPolicy::new(vec![0.1]), 0.1, 5).unwrap();
        let states = [0.0; 6];
        assert_eq!(a.act_batch(&states, 6).unwrap(), b.act_batch(&states, 6).unwrap());
        assert_eq!(a.act(&[0.0]).unwrap(), b.act(&[0.0]).unwrap());
    }

    #[test]
    fn ensemble_of_equal_constants() {
        let mut membership = MembershipMap::default();
        membership.insert(TrajectoryId(0), 1);
        let e = ensemble_defended(
            (0..4).map(|_| constant(0.3)).collect(),
            membership,
            EnsembleMode::ExcludeSource,
        )
        .unwrap();
        let a = e.act_for(&[0.0, 0.0], Some(TrajectoryId(0))).unwrap()[0];
        assert!((a - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ensemble_mean_all() {
        let e = ensemble_defended(
            vec![constant(0.2), constant(0.4)],
            MembershipMap::default(),
            EnsembleMode::MeanAll,
        )
        .unwrap();
        assert!((e.act_for(&[0.0, 0.0], None).unwrap()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ensemble_exclude_source_drops_the_owner() {
        let mut membership = MembershipMap::default();
        for t in 0..10u32 {
            membership.insert(TrajectoryId(t), (t / 2) as usize);
        }
        // Sub-policy i returns i; a query from subset 2 averages {0,1,3,4}.
        let members = (0..5).map(|i| constant(i as f64 * 0.1)).collect();
        let e = ensemble_defended(members, membership, EnsembleMode::ExcludeSource).unwrap();
        let a = e
            .act_batch_for(TrajectoryId(4), &[0.0, 0.0], 1)
            .unwrap()[0];
        assert!((a - 0.2).abs() < 1e-15, "{a}");
        let b = e.act_batch_for(TrajectoryId(0), &[0.0, 0.0], 1).unwrap()[0];
        assert!((b - 0.25).abs() < 1e-15, "{b}");
    }

    #[test]
    fn ensemble_needs_members() {
        assert!(ensemble_defended(Vec::new(), MembershipMap::default(), EnsembleMode::MeanAll).is_err());
    }

    #[test]
    fn outputs_respect_bounds_on_random_probes() {
        let d = toy_dataset(3, 6, 2);
        let bc = train_bc(&d, &small_config(), 8).unwrap();
        let distorted = gaussian_distort(bc.clone(), 0.1, 2).unwrap();
        let mut rng = rng::stream(99, 0);
        let count = 100_000;
        let states: Vec<f64> = (0..2 * count).map(|_| rng.random_range(-10.0..10.0)).collect();
        for p in [&bc as &dyn Policy, &distorted] {
            let out = p.act_batch(&states, count).unwrap();
            assert_eq!(out.len(), 2 * count);
            assert!(out.iter().all(|a| a.is_finite() && (-1.0..=1.0).contains(a)));
        }
    }
}
