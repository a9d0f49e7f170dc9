//! Artifact layout on disk and the steps that produce and consume it.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use trajaudit_core::audit::select_trajectories;
use trajaudit_core::critic::train_critic;
use trajaudit_core::data::{normalize_actions, split_dataset, Dataset};
use trajaudit_core::env::generate_dataset;
use trajaudit_core::policy::{
    ensemble_defended, gaussian_distort, train_bc, BcPolicy, EnsemblePolicy, Policy, SuspectView,
};

use crate::config::{dataset_name, RunConfig};
use crate::engine::{audit_cached, shadow_fingerprints, suspect_fingerprints, Unrouted};
use crate::error::{write_artifact, Error, Result};
use crate::formats::{
    load_critic, load_dataset, load_policy, save_critic, save_dataset, save_policy, StoredCritic,
    StoredPolicy,
};
use crate::report::{AuditDocument, SeedRecord, SuspectInfo};

/// Where each artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset(&self, name: &str) -> PathBuf {
        self.root.join("data").join(format!("{name}.data"))
    }

    pub fn shadow(&self, name: &str, j: usize) -> PathBuf {
        self.root.join("shadows").join(name).join(format!("shadow{j:02}.policy"))
    }

    /// One more model trained like the shadows, never used as one.
    pub fn holdout(&self, name: &str) -> PathBuf {
        self.root.join("shadows").join(name).join("holdout.policy")
    }

    pub fn critic(&self, name: &str) -> PathBuf {
        self.root.join("critics").join(format!("{name}.critic"))
    }

    pub fn audit_report(&self, target: &str, suspect: &str) -> PathBuf {
        let slug: String = suspect
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        self.root.join("reports").join(format!("audit-{target}-{slug}.json"))
    }

    pub fn fingerprints(&self, target: &str) -> PathBuf {
        self.root.join("reports").join(format!("fingerprints-{target}.tsv"))
    }

    pub fn bench_dir(&self) -> PathBuf {
        self.root.join("bench")
    }
}

// ---- training steps, shared by the CLI and the in-memory bench ----

pub fn make_dataset(cfg: &RunConfig, i: usize) -> Result<Dataset> {
    let raw = generate_dataset(
        dataset_name(i),
        &cfg.env(),
        &cfg.controller(i),
        cfg.n_traj,
        cfg.seeds().dataset(i),
    )?;
    Ok(normalize_actions(&raw)?.0)
}

/// The `shadows_trained` shadow policies of dataset `i`, trained in
/// parallel.
pub fn train_dataset_shadows(cfg: &RunConfig, i: usize, data: &Dataset) -> Result<Vec<BcPolicy>> {
    let base = cfg.seeds().shadow_base(i);
    let pcfg = cfg.policy_config();
    (0..cfg.shadows_trained as u64)
        .into_par_iter()
        .map(|j| train_bc(data, &pcfg, base.wrapping_add(j)))
        .collect::<trajaudit_core::Result<Vec<_>>>()
        .map_err(Error::from)
}

pub fn train_dataset_holdout(cfg: &RunConfig, i: usize, data: &Dataset) -> Result<BcPolicy> {
    Ok(train_bc(data, &cfg.policy_config(), cfg.seeds().holdout(i, cfg.shadows_trained))?)
}

pub fn train_dataset_critic(cfg: &RunConfig, i: usize, data: &Dataset) -> Result<StoredCritic> {
    let config = cfg.critic_config(i);
    let out = train_critic(data, &config)?;
    Ok(StoredCritic {
        critic: out.critic,
        config,
        dropped_transitions: out.dropped_transitions,
    })
}

/// Ensemble defense for dataset `i`: `k` sub-policies, one per split subset.
pub fn train_ensemble(cfg: &RunConfig, i: usize, data: &Dataset, k: usize) -> Result<EnsemblePolicy> {
    let split = split_dataset(data, k, cfg.seeds().ensemble_split(i))?;
    let base = cfg.seeds().ensemble_member(i);
    let pcfg = cfg.policy_config();
    let members = split
        .subsets
        .par_iter()
        .enumerate()
        .map(|(p, subset)| {
            train_bc(subset, &pcfg, base.wrapping_add(p as u64)).map(|b| Box::new(b) as Box<dyn Policy>)
        })
        .collect::<trajaudit_core::Result<Vec<_>>>()?;
    Ok(ensemble_defended(members, split.membership, cfg.ensemble_mode)?)
}

// ---- subcommands ----

pub fn gen_data(cfg: &RunConfig, datasets: &[usize]) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(&cfg.out);
    datasets
        .iter()
        .map(|&i| {
            let path = layout.dataset(&dataset_name(i));
            save_dataset(&path, &make_dataset(cfg, i)?)?;
            Ok(path)
        })
        .collect()
}

pub fn train_shadows_cmd(cfg: &RunConfig, datasets: &[usize]) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(&cfg.out);
    let mut written = Vec::new();
    for &i in datasets {
        let name = dataset_name(i);
        let data = load_dataset(&layout.dataset(&name))?;
        for (j, p) in train_dataset_shadows(cfg, i, &data)?.into_iter().enumerate() {
            let path = layout.shadow(&name, j);
            save_policy(&path, &StoredPolicy::Bc(p))?;
            written.push(path);
        }
        let path = layout.holdout(&name);
        save_policy(&path, &StoredPolicy::Bc(train_dataset_holdout(cfg, i, &data)?))?;
        written.push(path);
    }
    Ok(written)
}

pub fn train_critic_cmd(cfg: &RunConfig, datasets: &[usize]) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(&cfg.out);
    datasets
        .iter()
        .map(|&i| {
            let name = dataset_name(i);
            let data = load_dataset(&layout.dataset(&name))?;
            let path = layout.critic(&name);
            save_critic(&path, &train_dataset_critic(cfg, i, &data)?)?;
            Ok(path)
        })
        .collect()
}

fn load_shadows(layout: &Layout, name: &str, k: usize) -> Result<Vec<BcPolicy>> {
    (0..k)
        .map(|j| load_policy(&layout.shadow(name, j)).map(|p| p.bc().clone()))
        .collect()
}

/// Where a suspect's model comes from.
enum SuspectSource {
    Dataset(usize),
    File(PathBuf),
}

fn resolve_suspect(cfg: &RunConfig, target: usize) -> Result<SuspectSource> {
    if cfg.suspect == "holdout" {
        return Ok(SuspectSource::Dataset(target));
    }
    if let Ok(i) = cfg.dataset_index(&cfg.suspect) {
        return Ok(SuspectSource::Dataset(i));
    }
    Ok(SuspectSource::File(PathBuf::from(&cfg.suspect)))
}

/// Audits the configured suspect against the target dataset and writes the
/// report. Returns the report path and document.
pub fn audit_cmd(cfg: &RunConfig) -> Result<(PathBuf, AuditDocument)> {
    let layout = Layout::new(&cfg.out);
    let t = cfg.dataset_index(&cfg.target)?;
    let target = dataset_name(t);
    let data = load_dataset(&layout.dataset(&target))?;
    let critic = load_critic(&layout.critic(&target))?;
    let shadows = load_shadows(&layout, &target, cfg.shadows)?;
    let audit_cfg = cfg.audit_config(t);
    let indices = select_trajectories(&data, audit_cfg.audited, audit_cfg.seed);

    let source = resolve_suspect(cfg, t)?;
    let source_index = match source {
        SuspectSource::Dataset(i) => Some(i),
        SuspectSource::File(_) => None,
    };
    let shadow_fps = shadow_fingerprints(&data, &shadows, &critic.critic, &indices)?;

    let suspect_fps;
    let label;
    let mut distortion_seed = None;
    let mut ensemble_seeds = None;
    if cfg.ensemble_k > 0 {
        let Some(s) = source_index else {
            return Err(Error::Config(
                "ensemble_k needs the suspect to name a dataset (or `holdout`)".into(),
            ));
        };
        let sname = dataset_name(s);
        let sdata = load_dataset(&layout.dataset(&sname))?;
        let ens = train_ensemble(cfg, s, &sdata, cfg.ensemble_k)?;
        ensemble_seeds = Some(SeedRecord::for_dataset(cfg, s));
        label = format!("{sname}/{}", ens.label());
        suspect_fps = if s == t {
            suspect_fingerprints(&data, &ens, &critic.critic, &indices)?
        } else {
            suspect_fingerprints(&data, &Unrouted(&ens), &critic.critic, &indices)?
        };
    } else {
        let stored = match &source {
            SuspectSource::Dataset(s) => load_policy(&layout.holdout(&dataset_name(*s)))?,
            SuspectSource::File(p) => load_policy(p)?,
        };
        if cfg.distort_sigma > 0.0 {
            let seed = cfg.seeds().distortion(t, source_index.unwrap_or(usize::MAX));
            let d = gaussian_distort(&stored, cfg.distort_sigma, seed)?;
            distortion_seed = Some(seed);
            label = d.suspect_label().to_string();
            suspect_fps = suspect_fingerprints(&data, &d, &critic.critic, &indices)?;
        } else {
            label = stored.suspect_label().to_string();
            suspect_fps = suspect_fingerprints(&data, &stored, &critic.critic, &indices)?;
        }
    }

    let report = audit_cached(&target, &label, &shadow_fps, &suspect_fps, &audit_cfg)?;
    let doc = AuditDocument::new(
        cfg,
        SuspectInfo {
            source: cfg.suspect.clone(),
            label: label.clone(),
            distort_sigma: cfg.distort_sigma,
            distortion_seed,
            ensemble_k: cfg.ensemble_k,
            ensemble_seeds,
        },
        t,
        &data,
        critic.dropped_transitions,
        report,
    )?;
    let mut slug = match &source {
        SuspectSource::Dataset(s) => format!("holdout-{}", dataset_name(*s)),
        SuspectSource::File(p) => p
            .file_stem()
            .map_or_else(|| "suspect".into(), |s| s.to_string_lossy().into_owned()),
    };
    if cfg.distort_sigma > 0.0 {
        slug.push_str(&format!("-gauss{}", cfg.distort_sigma));
    }
    if cfg.ensemble_k > 0 {
        slug.push_str(&format!("-ensemble{}", cfg.ensemble_k));
    }
    let path = layout.audit_report(&target, &slug);
    write_artifact(&path, &doc.to_json()?)?;
    Ok((path, doc))
}
