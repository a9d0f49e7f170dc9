//! JSON audit report written by the `audit` command.
//!
//! The document holds no wall-clock or host data, so a repeated run with the
//! same configuration produces identical bytes.

use serde::{Deserialize, Serialize};
use trajaudit_core::audit::{dataset_verdict, AuditReport, NormalityCheck};
use trajaudit_core::data::Dataset;

use crate::config::{dataset_name, RunConfig};
use crate::error::Result;

pub const SCHEMA: &str = "trajaudit/audit-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub name: String,
    pub version: String,
}

impl Default for Generator {
    fn default() -> Self {
        Generator {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Every seed derived for one dataset, echoed so a report can be checked
/// without re-deriving them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub dataset: String,
    pub data: u64,
    pub shadow_base: u64,
    pub holdout: u64,
    pub critic: u64,
    pub audit: u64,
    pub ensemble_split: u64,
    pub ensemble_member: u64,
}

impl SeedRecord {
    pub fn for_dataset(cfg: &RunConfig, i: usize) -> Self {
        let s = cfg.seeds();
        SeedRecord {
            dataset: dataset_name(i),
            data: s.dataset(i),
            shadow_base: s.shadow_base(i),
            holdout: s.holdout(i, cfg.shadows_trained),
            critic: s.critic(i),
            audit: s.audit(i),
            ensemble_split: s.ensemble_split(i),
            ensemble_member: s.ensemble_member(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspectInfo {
    /// The `suspect` value as configured.
    pub source: String,
    pub label: String,
    pub distort_sigma: f64,
    pub distortion_seed: Option<u64>,
    pub ensemble_k: usize,
    pub ensemble_seeds: Option<SeedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub dataset: String,
    pub trajectories: usize,
    pub transitions: usize,
    /// Transitions the critic's TD targets could not use.
    pub critic_dropped_transitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetVerdict {
    pub tau: f64,
    pub member_fraction: f64,
    pub pirated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub audited: usize,
    pub members: usize,
    pub non_members: usize,
    pub skipped: usize,
    pub normality_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDocument {
    pub schema: String,
    pub generator: Generator,
    pub config: RunConfig,
    pub seeds: SeedRecord,
    pub target: TargetInfo,
    pub suspect: SuspectInfo,
    pub dataset_verdict: DatasetVerdict,
    pub summary: Summary,
    pub report: AuditReport,
}

impl AuditDocument {
    pub fn new(
        config: &RunConfig,
        suspect: SuspectInfo,
        target_index: usize,
        dataset: &Dataset,
        critic_dropped_transitions: usize,
        report: AuditReport,
    ) -> Result<Self> {
        let pirated = dataset_verdict(&report, config.tau)?;
        let normality_failures = report
            .verdicts
            .iter()
            .filter(|v| matches!(v.normality, NormalityCheck::Failed { .. }))
            .count();
        Ok(AuditDocument {
            schema: SCHEMA.into(),
            generator: Generator::default(),
            config: config.clone(),
            seeds: SeedRecord::for_dataset(config, target_index),
            target: TargetInfo {
                dataset: dataset.name.clone(),
                trajectories: dataset.trajectories.len(),
                transitions: dataset.num_transitions(),
                critic_dropped_transitions,
            },
            suspect,
            dataset_verdict: DatasetVerdict {
                tau: config.tau,
                member_fraction: report.member_fraction,
                pirated,
            },
            summary: Summary {
                audited: report.audited(),
                members: report.members,
                non_members: report.non_members,
                skipped: report.skipped,
                normality_failures,
            },
            report,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
