//! Run configuration: a flat TOML file where every key is optional.
//!
//! Precedence is built-in defaults, then the file, then command-line
//! overrides. Unknown keys are rejected by name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajaudit_core::audit::{AuditConfig, NormalityFailure, Tail, Tester};
use trajaudit_core::critic::{CriticConfig, CriticMode};
use trajaudit_core::env::{GainController, LinearControlEnv};
use trajaudit_core::nn::TrainConfig;
use trajaudit_core::policy::{EnsembleMode, PolicyNetConfig};
use trajaudit_core::rng::derive_seed;
use trajaudit_core::stats::{AdLevel, DistanceMetric, GrubbsSample};

use crate::error::{read_artifact, Error, Result};

/// How the bench grid is expanded from its axis lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridLayout {
    /// Every metric × tester at the base point, then each remaining axis
    /// varied alone.
    Axes,
    /// The full cartesian product of all axis lists.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub out: PathBuf,

    pub n_traj: usize,
    pub dt: f64,
    pub horizon: usize,
    pub c_pos: f64,
    pub c_act: f64,
    pub episodic: bool,
    pub exploration_sigma: f64,
    /// `(k_pos, k_vel)` per benchmark dataset.
    pub controllers: Vec<[f64; 2]>,

    pub policy_hidden: Vec<usize>,
    pub policy_epochs: usize,
    pub policy_batch_size: usize,
    pub policy_lr: f64,
    pub policy_lr_decay_every: usize,
    /// Shadow policies trained per dataset (the audit uses the first
    /// `shadows`).
    pub shadows_trained: usize,

    pub critic_hidden: Vec<usize>,
    pub critic_epochs: usize,
    pub critic_batch_size: usize,
    pub critic_lr: f64,
    pub critic_lr_decay_every: usize,
    pub gamma: f64,
    pub target_sync_period: usize,
    pub critic_mode: CriticMode,

    pub metric: DistanceMetric,
    pub tester: Tester,
    pub alpha: f64,
    pub shadows: usize,
    pub fraction: f64,
    pub audited: usize,
    pub ad_level: AdLevel,
    pub ad_failure: NormalityFailure,
    pub grubbs_sample: GrubbsSample,
    pub tail: Tail,
    /// Dataset-level piracy threshold on the member fraction.
    pub tau: f64,

    /// Dataset audited by `audit` (and restricting `train-*` when set).
    pub target: String,
    /// `holdout` (the target's held-out model), a dataset name (that
    /// dataset's held-out model) or a path to a policy file.
    pub suspect: String,
    pub distort_sigma: f64,
    /// Sub-policies of an ensemble-defended suspect; 0 disables the defense.
    pub ensemble_k: usize,
    pub ensemble_mode: EnsembleMode,

    pub bench_grid: GridLayout,
    pub bench_metrics: Vec<DistanceMetric>,
    pub bench_testers: Vec<Tester>,
    pub bench_alphas: Vec<f64>,
    pub bench_fractions: Vec<f64>,
    pub bench_shadows: Vec<usize>,
    pub bench_sigmas: Vec<f64>,
    pub bench_ensemble_k: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = LinearControlEnv::default();
        let policy = PolicyNetConfig::default();
        let critic = CriticConfig::default();
        let audit = AuditConfig::default();
        RunConfig {
            seed: 0,
            out: PathBuf::from("trajaudit-out"),
            n_traj: 100,
            dt: env.dt,
            horizon: env.horizon,
            c_pos: env.c_pos,
            c_act: env.c_act,
            episodic: env.episodic,
            exploration_sigma: 0.05,
            controllers: vec![[0.5, 0.5], [1.0, 0.5], [1.5, 0.5], [1.0, 1.0], [2.0, 0.2]],
            policy_hidden: policy.hidden,
            policy_epochs: policy.train.epochs,
            policy_batch_size: policy.train.batch_size,
            policy_lr: policy.train.lr,
            policy_lr_decay_every: policy.train.lr_decay_every,
            shadows_trained: 21,
            critic_hidden: critic.hidden,
            critic_epochs: critic.epochs,
            critic_batch_size: critic.batch_size,
            critic_lr: critic.lr,
            critic_lr_decay_every: critic.lr_decay_every,
            gamma: critic.gamma,
            target_sync_period: critic.target_sync_period,
            critic_mode: critic.mode,
            metric: audit.metric,
            tester: audit.tester,
            alpha: audit.alpha,
            shadows: audit.shadows,
            fraction: audit.fraction,
            audited: audit.audited,
            ad_level: audit.ad_level,
            ad_failure: audit.on_normality_failure,
            grubbs_sample: audit.grubbs_sample,
            tail: audit.tail,
            tau: 0.5,
            target: dataset_name(0),
            suspect: "holdout".into(),
            distort_sigma: 0.0,
            ensemble_k: 0,
            ensemble_mode: EnsembleMode::ExcludeSource,
            bench_grid: GridLayout::Axes,
            bench_metrics: DistanceMetric::ALL.to_vec(),
            bench_testers: Tester::ALL.to_vec(),
            bench_alphas: vec![0.01, 0.001, 0.0001],
            bench_fractions: vec![1.0, 0.5, 0.25],
            bench_shadows: vec![15, 9, 21],
            bench_sigmas: vec![0.01, 0.1],
            bench_ensemble_k: vec![5],
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub metric: Option<DistanceMetric>,
    pub tester: Option<Tester>,
    pub alpha: Option<f64>,
    pub shadows: Option<usize>,
    pub fraction: Option<f64>,
    pub distort_sigma: Option<f64>,
    pub ensemble_k: Option<usize>,
    pub target: Option<String>,
    pub suspect: Option<String>,
}

pub fn dataset_name(index: usize) -> String {
    format!("ctrl{index}")
}

fn bad(key: &str, why: &str) -> Error {
    Error::Config(format!("{key}: {why}"))
}

/// Loads `path` (if any) over the defaults, applies `overrides` and checks
/// every value.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => parse_config_str(&read_artifact("config", p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    cfg.check()?;
    Ok(cfg)
}

/// Parses a config file's text over the defaults. Does not range-check.
pub fn parse_config_str(text: &str) -> std::result::Result<RunConfig, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
    let known = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
    if let Some(key) = table.keys().find(|k| !known.contains_key(*k)) {
        return Err(format!("unknown key: {key}"));
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| e.message().to_string())
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.metric {
            self.metric = v;
        }
        if let Some(v) = o.tester {
            self.tester = v;
        }
        if let Some(v) = o.alpha {
            self.alpha = v;
        }
        if let Some(v) = o.shadows {
            self.shadows = v;
        }
        if let Some(v) = o.fraction {
            self.fraction = v;
        }
        if let Some(v) = o.distort_sigma {
            self.distort_sigma = v;
        }
        if let Some(v) = o.ensemble_k {
            self.ensemble_k = v;
        }
        if let Some(v) = &o.target {
            self.target = v.clone();
        }
        if let Some(v) = &o.suspect {
            self.suspect = v.clone();
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(bad("n_traj", "must be at least 1"));
        }
        self.env().check()?;
        if !(self.exploration_sigma >= 0.0 && self.exploration_sigma.is_finite()) {
            return Err(bad("exploration_sigma", "must be finite and nonnegative"));
        }
        if self.controllers.is_empty() {
            return Err(bad("controllers", "need at least one controller"));
        }
        if self.controllers.iter().flatten().any(|g| !g.is_finite()) {
            return Err(bad("controllers", "gains must be finite"));
        }
        if self.policy_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(bad("hidden", "layer widths must be positive"));
        }
        self.policy_config().train.check()?;
        self.critic_config(0).check()?;
        if self.shadows_trained < 2 {
            return Err(bad("shadows_trained", "must be at least 2"));
        }
        self.audit_config(0).check()?;
        if self.shadows > self.shadows_trained {
            return Err(bad("shadows", "exceeds shadows_trained"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(bad("tau", "must lie in (0, 1]"));
        }
        if !(self.distort_sigma >= 0.0 && self.distort_sigma.is_finite()) {
            return Err(bad("distort_sigma", "must be finite and nonnegative"));
        }
        if self.ensemble_k == 1 {
            return Err(bad("ensemble_k", "must be 0 (off) or at least 2"));
        }
        self.dataset_index(&self.target)?;

        let lists = [
            ("bench_metrics", self.bench_metrics.is_empty()),
            ("bench_testers", self.bench_testers.is_empty()),
            ("bench_alphas", self.bench_alphas.is_empty()),
            ("bench_fractions", self.bench_fractions.is_empty()),
            ("bench_shadows", self.bench_shadows.is_empty()),
        ];
        if let Some((key, _)) = lists.iter().find(|(_, empty)| *empty) {
            return Err(bad(key, "must not be empty"));
        }
        for &alpha in &self.bench_alphas {
            AuditConfig { alpha, ..self.audit_config(0) }.check()?;
        }
        for &fraction in &self.bench_fractions {
            AuditConfig { fraction, ..self.audit_config(0) }.check()?;
        }
        for &k in &self.bench_shadows {
            if k > self.shadows_trained {
                return Err(bad("bench_shadows", "entry exceeds shadows_trained"));
            }
            AuditConfig { shadows: k, ..self.audit_config(0) }.check()?;
        }
        if self.bench_sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(bad("bench_sigmas", "entries must be positive"));
        }
        if self.bench_ensemble_k.iter().any(|&k| k < 2 || k > self.n_traj) {
            return Err(bad("bench_ensemble_k", "entries must lie in [2, n_traj]"));
        }
        if self.ensemble_k > self.n_traj {
            return Err(bad("ensemble_k", "exceeds n_traj"));
        }
        Ok(())
    }

    pub fn num_datasets(&self) -> usize {
        self.controllers.len()
    }

    pub fn dataset_index(&self, name: &str) -> Result<usize> {
        (0..self.num_datasets())
            .find(|&i| dataset_name(i) == name)
            .ok_or_else(|| bad("target", &format!("unknown dataset `{name}`")))
    }

    pub fn env(&self) -> LinearControlEnv {
        LinearControlEnv {
            dt: self.dt,
            horizon: self.horizon,
            c_pos: self.c_pos,
            c_act: self.c_act,
            episodic: self.episodic,
        }
    }

    pub fn controller(&self, index: usize) -> GainController {
        let [k_pos, k_vel] = self.controllers[index];
        GainController::new(k_pos, k_vel, self.exploration_sigma)
    }

    pub fn policy_config(&self) -> PolicyNetConfig {
        PolicyNetConfig {
            hidden: self.policy_hidden.clone(),
            train: TrainConfig {
                epochs: self.policy_epochs,
                batch_size: self.policy_batch_size,
                lr: self.policy_lr,
                lr_decay_every: self.policy_lr_decay_every,
                seed: 0,
            },
        }
    }

    pub fn critic_config(&self, dataset: usize) -> CriticConfig {
        CriticConfig {
            gamma: self.gamma,
            hidden: self.critic_hidden.clone(),
            epochs: self.critic_epochs,
            batch_size: self.critic_batch_size,
            lr: self.critic_lr,
            lr_decay_every: self.critic_lr_decay_every,
            target_sync_period: self.target_sync_period,
            mode: self.critic_mode,
            seed: self.seeds().critic(dataset),
        }
    }

    /// Audit settings for `dataset`; only the trajectory-sample seed depends
    /// on it.
    pub fn audit_config(&self, dataset: usize) -> AuditConfig {
        AuditConfig {
            metric: self.metric,
            tester: self.tester,
            alpha: self.alpha,
            shadows: self.shadows,
            fraction: self.fraction,
            audited: self.audited,
            ad_level: self.ad_level,
            on_normality_failure: self.ad_failure,
            grubbs_sample: self.grubbs_sample,
            tail: self.tail,
            seed: self.seeds().audit(dataset),
        }
    }

    pub fn seeds(&self) -> Seeds {
        Seeds(self.seed)
    }
}

/// Per-purpose seeds derived from the master seed.
#[derive(Debug, Clone, Copy)]
pub struct Seeds(pub u64);

impl Seeds {
    pub fn dataset(self, i: usize) -> u64 {
        derive_seed(self.0, 100 + i as u64)
    }
    /// Shadow `j` of dataset `i` trains with `shadow_base(i) + j`.
    pub fn shadow_base(self, i: usize) -> u64 {
        derive_seed(self.0, 200 + i as u64)
    }
    /// The held-out positive continues the shadow sequence: it is the model
    /// a `shadows_trained + 1`-th shadow would have been.
    pub fn holdout(self, i: usize, shadows_trained: usize) -> u64 {
        self.shadow_base(i).wrapping_add(shadows_trained as u64)
    }
    pub fn critic(self, i: usize) -> u64 {
        derive_seed(self.0, 400 + i as u64)
    }
    pub fn audit(self, i: usize) -> u64 {
        derive_seed(self.0, 500 + i as u64)
    }
    pub fn distortion(self, target: usize, suspect: usize) -> u64 {
        derive_seed(derive_seed(self.0, 600 + target as u64), suspect as u64)
    }
    pub fn ensemble_split(self, i: usize) -> u64 {
        derive_seed(self.0, 700 + i as u64)
    }
    /// Sub-policy `p` of dataset `i` trains with `ensemble_member(i) + p`.
    pub fn ensemble_member(self, i: usize) -> u64 {
        derive_seed(self.0, 800 + i as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = parse_config(None, &Overrides::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.audit_config(0).shadows, 15);
        assert_eq!(cfg.alpha, 0.01);
    }

    #[test]
    fn file_then_override() {
        let cfg = parse_config_str("alpha = 0.001\nshadows = 9\n").unwrap();
        assert_eq!((cfg.alpha, cfg.shadows), (0.001, 9));
        let mut cfg = cfg;
        cfg.apply(&Overrides {
            alpha: Some(0.0001),
            ..Default::default()
        });
        assert_eq!((cfg.alpha, cfg.shadows), (0.0001, 9));
    }

    #[test]
    fn unknown_key_named() {
        assert_eq!(parse_config_str("alhpa = 0.1").unwrap_err(), "unknown key: alhpa");
    }

    #[test]
    fn enum_values_parse() {
        let cfg = parse_config_str(
            "metric = \"cosine\"\ntester = \"three-sigma\"\nad_level = \"2.5%\"\ncritic_mode = \"mc\"\nbench_grid = \"product\"",
        )
        .unwrap();
        assert_eq!(cfg.metric, DistanceMetric::Cosine);
        assert_eq!(cfg.tester, Tester::ThreeSigma);
        assert_eq!(cfg.ad_level, AdLevel::Pct2_5);
        assert_eq!(cfg.critic_mode, CriticMode::Mc);
        assert!(parse_config_str("metric = \"manhattan\"").is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        for text in [
            "alpha = 1.5",
            "fraction = 0.0",
            "shadows = 1",
            "shadows = 30",
            "tau = 0.0",
            "ensemble_k = 1",
            "gamma = 1.5",
            "dt = 0.0",
            "target = \"ctrl9\"",
            "bench_alphas = []",
        ] {
            let cfg = parse_config_str(text).unwrap();
            assert!(cfg.check().is_err(), "{text}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(parse_config_str(&cfg.to_toml()).unwrap(), cfg);
    }
}
