//! TPR/TNR benchmark over every (target dataset, suspect) pair.
//!
//! Each dataset contributes one positive suspect (its held-out model) and is
//! a negative for every other target. Fingerprints are collected once per
//! (target, suspect variant) and reused by every cell of the grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trajaudit_core::audit::{select_trajectories, AuditConfig, Tester};
use trajaudit_core::data::Dataset;
use trajaudit_core::fingerprint::Fingerprint;
use trajaudit_core::policy::{gaussian_distort, BcPolicy, EnsemblePolicy};
use trajaudit_core::stats::DistanceMetric;

use crate::config::{dataset_name, GridLayout, RunConfig};
use crate::engine::{audit_cached, shadow_fingerprints, suspect_fingerprints, Unrouted};
use crate::error::{write_artifact, Error, Result};
use crate::formats::{load_critic, load_dataset, load_policy, StoredCritic};
use crate::pipeline::{
    make_dataset, train_dataset_critic, train_dataset_holdout, train_dataset_shadows, train_ensemble,
    Layout,
};
use crate::report::{Generator, SeedRecord};

pub const SCHEMA: &str = "trajaudit/bench/1";

/// How the suspect model is presented to the auditor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Variant {
    Plain,
    /// Gaussian noise added to every action.
    Distorted { sigma: f64 },
    /// `k`-member ensemble defense trained on the suspect's dataset.
    Ensemble { k: usize },
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::Plain => "plain".into(),
            Variant::Distorted { sigma } => format!("gauss{sigma}"),
            Variant::Ensemble { k } => format!("ensemble{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Which axis this cell varies (`base`, `metric-tester`, `alpha`, ...),
    /// or `product` for a full grid.
    pub task: String,
    pub metric: DistanceMetric,
    pub tester: Tester,
    pub alpha: f64,
    pub shadows: usize,
    pub fraction: f64,
    pub variant: Variant,
}

impl Cell {
    fn same_point(&self, other: &Cell) -> bool {
        self.metric == other.metric
            && self.tester == other.tester
            && self.alpha == other.alpha
            && self.shadows == other.shadows
            && self.fraction == other.fraction
            && self.variant == other.variant
    }

    fn audit_config(&self, base: AuditConfig) -> AuditConfig {
        AuditConfig {
            metric: self.metric,
            tester: self.tester,
            alpha: self.alpha,
            shadows: self.shadows,
            fraction: self.fraction,
            ..base
        }
    }
}

/// Expands the configured axes into cells. The first cell is always the
/// base point of the configuration.
pub fn grid(cfg: &RunConfig) -> Vec<Cell> {
    let base = Cell {
        task: "base".into(),
        metric: cfg.metric,
        tester: cfg.tester,
        alpha: cfg.alpha,
        shadows: cfg.shadows,
        fraction: cfg.fraction,
        variant: Variant::Plain,
    };
    let variants: Vec<Variant> = std::iter::once(Variant::Plain)
        .chain(cfg.bench_sigmas.iter().map(|&sigma| Variant::Distorted { sigma }))
        .chain(cfg.bench_ensemble_k.iter().map(|&k| Variant::Ensemble { k }))
        .collect();
    let mut cells = vec![base.clone()];
    let mut push = |c: Cell| {
        if !cells.iter().any(|x| x.same_point(&c)) {
            cells.push(c);
        }
    };
    match cfg.bench_grid {
        GridLayout::Axes => {
            for &metric in &cfg.bench_metrics {
                for &tester in &cfg.bench_testers {
                    push(Cell { task: "metric-tester".into(), metric, tester, ..base.clone() });
                }
            }
            for &alpha in &cfg.bench_alphas {
                push(Cell { task: "alpha".into(), alpha, ..base.clone() });
            }
            for &shadows in &cfg.bench_shadows {
                push(Cell { task: "shadows".into(), shadows, ..base.clone() });
            }
            for &fraction in &cfg.bench_fractions {
                push(Cell { task: "fraction".into(), fraction, ..base.clone() });
            }
            for &variant in &variants[1..] {
                let task = match variant {
                    Variant::Ensemble { .. } => "ensemble",
                    _ => "distortion",
                };
                push(Cell { task: task.into(), variant, ..base.clone() });
            }
        }
        GridLayout::Product => {
            for &metric in &cfg.bench_metrics {
                for &tester in &cfg.bench_testers {
                    for &alpha in &cfg.bench_alphas {
                        for &shadows in &cfg.bench_shadows {
                            for &fraction in &cfg.bench_fractions {
                                for &variant in &variants {
                                    push(Cell {
                                        task: "product".into(),
                                        metric,
                                        tester,
                                        alpha,
                                        shadows,
                                        fraction,
                                        variant,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Everything the bench needs per dataset.
pub struct Artifacts {
    pub datasets: Vec<Dataset>,
    pub shadows: Vec<Vec<BcPolicy>>,
    pub holdouts: Vec<BcPolicy>,
    pub critics: Vec<StoredCritic>,
}

impl Artifacts {
    /// Trains every artifact in memory.
    pub fn train(cfg: &RunConfig) -> Result<Self> {
        let per_dataset = (0..cfg.num_datasets())
            .into_par_iter()
            .map(|i| {
                let data = make_dataset(cfg, i)?;
                let shadows = train_dataset_shadows(cfg, i, &data)?;
                let holdout = train_dataset_holdout(cfg, i, &data)?;
                let critic = train_dataset_critic(cfg, i, &data)?;
                Ok((data, shadows, holdout, critic))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(per_dataset))
    }

    /// Loads artifacts written by `gen-data`, `train-shadows` and
    /// `train-critic`.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let layout = Layout::new(&cfg.out);
        let k = cfg.bench_shadows.iter().copied().chain([cfg.shadows]).max().unwrap_or(cfg.shadows);
        let per_dataset = (0..cfg.num_datasets())
            .map(|i| {
                let name = dataset_name(i);
                let data = load_dataset(&layout.dataset(&name))?;
                let shadows = (0..k)
                    .map(|j| load_policy(&layout.shadow(&name, j)).map(|p| p.bc().clone()))
                    .collect::<Result<Vec<_>>>()?;
                let holdout = load_policy(&layout.holdout(&name))?.bc().clone();
                let critic = load_critic(&layout.critic(&name))?;
                Ok((data, shadows, holdout, critic))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(per_dataset))
    }

    fn from_parts(parts: Vec<(Dataset, Vec<BcPolicy>, BcPolicy, StoredCritic)>) -> Self {
        let mut a = Artifacts {
            datasets: Vec::new(),
            shadows: Vec::new(),
            holdouts: Vec::new(),
            critics: Vec::new(),
        };
        for (d, s, h, c) in parts {
            a.datasets.push(d);
            a.shadows.push(s);
            a.holdouts.push(h);
            a.critics.push(c);
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub target: String,
    pub suspect: String,
    pub positive: bool,
    pub member_fraction: f64,
    pub members: usize,
    pub non_members: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    /// Mean member fraction over positive pairs.
    pub tpr: f64,
    pub tpr_std: f64,
    /// Mean non-member fraction over negative pairs; absent with one dataset.
    pub tnr: Option<f64>,
    pub tnr_std: Option<f64>,
    pub pairs: Vec<PairResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub generator: Generator,
    pub config: RunConfig,
    pub seeds: Vec<SeedRecord>,
    pub cells: Vec<CellResult>,
}

impl BenchReport {
    pub fn cell(&self, pred: impl Fn(&Cell) -> bool) -> Option<&CellResult> {
        self.cells.iter().find(|c| pred(&c.cell))
    }

    pub fn base(&self) -> &CellResult {
        &self.cells[0]
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per cell.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(
            "task\tmetric\ttester\talpha\tshadows\tfraction\tvariant\ttpr\ttpr_std\ttnr\ttnr_std\tpositives\tnegatives\n",
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
        for r in &self.cells {
            let c = &r.cell;
            let pos = r.pairs.iter().filter(|p| p.positive).count();
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}",
                c.task,
                c.metric,
                c.tester,
                c.alpha,
                c.shadows,
                c.fraction,
                c.variant.name(),
                r.tpr,
                r.tpr_std,
                opt(r.tnr),
                opt(r.tnr_std),
                pos,
                r.pairs.len() - pos,
            );
        }
        s
    }
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// Fingerprints of every suspect variant on one target's audited
/// trajectories.
struct TargetCache {
    shadows: Vec<Vec<Fingerprint>>,
    /// Keyed by (variant index, suspect dataset).
    suspects: BTreeMap<(usize, usize), Vec<Fingerprint>>,
}

pub fn run_grid(cfg: &RunConfig, art: &Artifacts) -> Result<BenchReport> {
    let n = cfg.num_datasets();
    if art.datasets.len() != n {
        return Err(Error::Config(format!(
            "bench needs {n} datasets, artifacts hold {}",
            art.datasets.len()
        )));
    }
    let cells = grid(cfg);
    let mut variants: Vec<Variant> = Vec::new();
    for c in &cells {
        if !variants.contains(&c.variant) {
            variants.push(c.variant);
        }
    }
    let max_shadows = cells.iter().map(|c| c.shadows).max().unwrap_or(cfg.shadows);
    for (i, s) in art.shadows.iter().enumerate() {
        if s.len() < max_shadows {
            return Err(Error::Config(format!(
                "{} has {} shadows, the grid needs {max_shadows}",
                dataset_name(i),
                s.len()
            )));
        }
    }

    let mut ensembles: BTreeMap<(usize, usize), EnsemblePolicy> = BTreeMap::new();
    for v in &variants {
        if let Variant::Ensemble { k } = *v {
            for s in 0..n {
                ensembles.insert((k, s), train_ensemble(cfg, s, &art.datasets[s], k)?);
            }
        }
    }

    let mut caches = Vec::with_capacity(n);
    for t in 0..n {
        let data = &art.datasets[t];
        let critic = &art.critics[t].critic;
        let acfg = cfg.audit_config(t);
        let idx = select_trajectories(data, acfg.audited, acfg.seed);
        let shadows = shadow_fingerprints(data, &art.shadows[t][..max_shadows], critic, &idx)?;
        let mut suspects = BTreeMap::new();
        for (vi, v) in variants.iter().enumerate() {
            for s in 0..n {
                let holdout = &art.holdouts[s];
                let fps = match *v {
                    Variant::Plain => suspect_fingerprints(data, holdout, critic, &idx)?,
                    Variant::Distorted { sigma } => {
                        let d = gaussian_distort(holdout, sigma, cfg.seeds().distortion(t, s))?;
                        suspect_fingerprints(data, &d, critic, &idx)?
                    }
                    Variant::Ensemble { k } => {
                        let ens = &ensembles[&(k, s)];
                        if s == t {
                            suspect_fingerprints(data, ens, critic, &idx)?
                        } else {
                            suspect_fingerprints(data, &Unrouted(ens), critic, &idx)?
                        }
                    }
                };
                suspects.insert((vi, s), fps);
            }
        }
        caches.push(TargetCache { shadows, suspects });
    }

    let mut results = Vec::with_capacity(cells.len());
    for cell in cells {
        let vi = variants.iter().position(|v| *v == cell.variant).expect("variant listed");
        let mut pairs = Vec::with_capacity(n * n);
        for (t, cache) in caches.iter().enumerate() {
            let acfg = cell.audit_config(cfg.audit_config(t));
            for s in 0..n {
                let report = audit_cached(
                    &dataset_name(t),
                    &dataset_name(s),
                    &cache.shadows,
                    &cache.suspects[&(vi, s)],
                    &acfg,
                )?;
                pairs.push(PairResult {
                    target: dataset_name(t),
                    suspect: dataset_name(s),
                    positive: s == t,
                    member_fraction: report.member_fraction,
                    members: report.members,
                    non_members: report.non_members,
                    skipped: report.skipped,
                });
            }
        }
        let pos: Vec<f64> = pairs.iter().filter(|p| p.positive).map(|p| p.member_fraction).collect();
        let neg: Vec<f64> = pairs
            .iter()
            .filter(|p| !p.positive)
            .map(|p| 1.0 - p.member_fraction)
            .collect();
        let (tpr, tpr_std) = mean_std(&pos).expect("one positive per target");
        let tn = mean_std(&neg);
        results.push(CellResult {
            cell,
            tpr,
            tpr_std,
            tnr: tn.map(|x| x.0),
            tnr_std: tn.map(|x| x.1),
            pairs,
        });
    }

    Ok(BenchReport {
        schema: SCHEMA.into(),
        generator: Generator::default(),
        config: cfg.clone(),
        seeds: (0..n).map(|i| SeedRecord::for_dataset(cfg, i)).collect(),
        cells: results,
    })
}

/// Writes `bench.tsv` and `bench.json` under `out/bench`.
pub fn write_bench(cfg: &RunConfig, report: &BenchReport) -> Result<(PathBuf, PathBuf)> {
    let dir = Layout::new(&cfg.out).bench_dir();
    let tsv = dir.join("bench.tsv");
    let json = dir.join("bench.json");
    write_artifact(&tsv, &report.to_tsv())?;
    write_artifact(&json, &report.to_json()?)?;
    Ok((tsv, json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_grid_starts_at_base_and_has_no_duplicates() {
        let cfg = RunConfig::default();
        let cells = grid(&cfg);
        assert_eq!(cells[0].task, "base");
        assert_eq!(cells[0].variant, Variant::Plain);
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                assert!(!a.same_point(b));
            }
        }
        // Metrics x testers, 2 more alphas, 2 more shadow counts,
        // 2 more fractions, 2 sigmas, 1 ensemble.
        let metrics = cfg.bench_metrics.len() * cfg.bench_testers.len();
        assert_eq!(cells.len(), metrics + 2 + 2 + 2 + 2 + 1);
    }

    #[test]
    fn product_grid_size() {
        let cfg = RunConfig {
            bench_grid: GridLayout::Product,
            bench_metrics: vec![DistanceMetric::Wasserstein],
            bench_alphas: vec![0.01, 0.001],
            bench_shadows: vec![15],
            bench_fractions: vec![1.0],
            bench_sigmas: vec![0.01],
            bench_ensemble_k: vec![],
            ..Default::default()
        };
        assert_eq!(grid(&cfg).len(), 2 * 2 * 2);
    }

    #[test]
    fn one_positive_one_negative() {
        let cfg = RunConfig {
            n_traj: 12,
            horizon: 10,
            controllers: vec![[0.5, 0.5], [2.0, 0.2]],
            policy_epochs: 3,
            critic_epochs: 3,
            critic_hidden: vec![8],
            shadows_trained: 5,
            shadows: 4,
            audited: 6,
            bench_metrics: vec![DistanceMetric::Wasserstein],
            bench_testers: vec![Tester::Grubbs],
            bench_alphas: vec![0.01],
            bench_shadows: vec![4],
            bench_fractions: vec![1.0],
            bench_sigmas: vec![0.1],
            bench_ensemble_k: vec![2],
            ..Default::default()
        };
        cfg.check().unwrap();
        let art = Artifacts::train(&cfg).unwrap();
        let report = run_grid(&cfg, &art).unwrap();
        assert_eq!(report.cells.len(), 3);
        for r in &report.cells {
            assert_eq!(r.pairs.len(), 4);
            assert!((0.0..=1.0).contains(&r.tpr));
            let tnr = r.tnr.unwrap();
            assert!((0.0..=1.0).contains(&tnr));
        }
        assert_eq!(report.to_tsv().lines().count(), 4);
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 0.0]).unwrap();
        assert_eq!(m, 0.5);
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.3]).unwrap().1, 0.0);
        assert!(mean_std(&[]).is_none());
    }
}
