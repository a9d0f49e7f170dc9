//! Fingerprint collection and cached audits.
//!
//! Fingerprints are collected once at full trajectory length. Any audit
//! setting (metric, tester, alpha, shadow count, fraction) is then applied
//! to prefixes of the cached sequences.

use rayon::prelude::*;
use trajaudit_core::audit::{audit_trajectory, AuditConfig, AuditReport};
use trajaudit_core::critic::Critic;
use trajaudit_core::data::{Dataset, TrajectoryId};
use trajaudit_core::fingerprint::{collect_fingerprint, prefix_len, Fingerprint};
use trajaudit_core::policy::{EnsemblePolicy, Policy, SuspectView};

use crate::error::{Error, Result};

/// Full-length fingerprints of every shadow on every audited trajectory.
/// Trajectories are processed in parallel; shadows are deterministic, so the
/// result does not depend on scheduling.
pub fn shadow_fingerprints<P: Policy>(
    dataset: &Dataset,
    shadows: &[P],
    critic: &Critic,
    indices: &[usize],
) -> Result<Vec<Vec<Fingerprint>>> {
    indices
        .par_iter()
        .map(|&i| {
            let traj = &dataset.trajectories[i];
            shadows
                .iter()
                .map(|p| collect_fingerprint(p, critic, traj, 1.0))
                .collect::<trajaudit_core::Result<Vec<_>>>()
        })
        .collect::<trajaudit_core::Result<Vec<_>>>()
        .map_err(Error::from)
}

/// Full-length suspect fingerprints, queried sequentially in trajectory
/// order so that stochastic suspects reproduce.
pub fn suspect_fingerprints<S: SuspectView + ?Sized>(
    dataset: &Dataset,
    suspect: &S,
    critic: &Critic,
    indices: &[usize],
) -> Result<Vec<Fingerprint>> {
    indices
        .iter()
        .map(|&i| collect_fingerprint(suspect, critic, &dataset.trajectories[i], 1.0))
        .collect::<trajaudit_core::Result<Vec<_>>>()
        .map_err(Error::from)
}

fn truncate(fp: &Fingerprint, fraction: f64) -> Fingerprint {
    fp.prefix(prefix_len(fp.len(), fraction))
}

/// Runs the per-trajectory audit on cached fingerprints, using the first
/// `config.shadows` shadows and the `config.fraction` prefix.
pub fn audit_cached(
    dataset: &str,
    suspect: &str,
    shadow_fps: &[Vec<Fingerprint>],
    suspect_fps: &[Fingerprint],
    config: &AuditConfig,
) -> Result<AuditReport> {
    config.check()?;
    if shadow_fps.len() != suspect_fps.len() {
        return Err(trajaudit_core::Error::LengthMismatch(shadow_fps.len(), suspect_fps.len()).into());
    }
    let verdicts = shadow_fps
        .par_iter()
        .zip(suspect_fps.par_iter())
        .map(|(shadows, suspect)| {
            if shadows.len() < config.shadows {
                return Err(trajaudit_core::Error::TooFewSamples {
                    needed: config.shadows,
                    got: shadows.len(),
                });
            }
            let shadows: Vec<Fingerprint> = shadows[..config.shadows]
                .iter()
                .map(|fp| truncate(fp, config.fraction))
                .collect();
            audit_trajectory(&shadows, &truncate(suspect, config.fraction), config)
        })
        .collect::<trajaudit_core::Result<Vec<_>>>()?;
    Ok(AuditReport::assemble(dataset, suspect, config.clone(), verdicts))
}

/// An ensemble queried on trajectories it was not trained on: no
/// sub-policy is excluded.
pub struct Unrouted<'a>(pub &'a EnsemblePolicy);

impl SuspectView for Unrouted<'_> {
    fn suspect_label(&self) -> &str {
        self.0.label()
    }

    fn act_batch_for(
        &self,
        _source: TrajectoryId,
        states: &[f64],
        count: usize,
    ) -> trajaudit_core::Result<Vec<f64>> {
        self.0.act_batch_routed(states, count, None)
    }
}
