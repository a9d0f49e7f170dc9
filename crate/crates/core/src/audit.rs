//! Per-trajectory audit decisions and their aggregation into a report.
//!
//! For one trajectory with shadow fingerprints `Q¹…Qᵏ` and suspect
//! fingerprint `Qˢ`:
//!
//! 1. `Q̄` is the elementwise mean of the shadow fingerprints only;
//! 2. `dᵢ = d(Qⁱ, Q̄)` and `dₛ = d(Qˢ, Q̄)` under the configured metric;
//! 3. the shadow distances `{dᵢ}` are checked for normality
//!    (Anderson-Darling);
//! 4. the outlier test decides whether `dₛ` is an outlier. An outlier means
//!    the suspect was *not* trained on the trajectory.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;

use crate::critic::Critic;
use crate::data::{Dataset, TrajectoryId};
use crate::fingerprint::{check_fraction, collect_fingerprint, mean_fingerprint, Fingerprint};
use crate::policy::{check_shadow_count, Policy, SuspectView};
use crate::rng;
use crate::stats::{
    anderson_darling_normal, distance, grubbs_decide, three_sigma_decide, AdLevel, DistanceMetric,
    GrubbsSample, TestOutcome,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Tester {
    Grubbs,
    ThreeSigma,
}

impl Tester {
    pub const ALL: [Tester; 2] = [Tester::Grubbs, Tester::ThreeSigma];

    pub fn name(self) -> &'static str {
        match self {
            Tester::Grubbs => "grubbs",
            Tester::ThreeSigma => "three-sigma",
        }
    }
}

impl fmt::Display for Tester {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tester {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "grubbs" => Ok(Tester::Grubbs),
            "three-sigma" | "3sigma" | "3-sigma" => Ok(Tester::ThreeSigma),
            _ => Err(Error::invalid("tester", "expected grubbs or three-sigma")),
        }
    }
}

/// What to do with a trajectory whose shadow distances fail the normality
/// pre-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum NormalityFailure {
    #[default]
    Warn,
    SkipTrajectory,
}

impl FromStr for NormalityFailure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warn" => Ok(NormalityFailure::Warn),
            "skip-trajectory" | "skip" => Ok(NormalityFailure::SkipTrajectory),
            _ => Err(Error::invalid("ad_failure", "expected warn or skip-trajectory")),
        }
    }
}

/// Which deviations of the suspect distance count as evidence against
/// membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Tail {
    /// Only a suspect farther from `Q̄` than the shadows on average can be a
    /// non-member; a closer one is always a member.
    #[default]
    Upper,
    /// Flag deviations in either direction, as the bare test statistic does.
    TwoSided,
}

impl FromStr for Tail {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Tail::Upper),
            "two-sided" => Ok(Tail::TwoSided),
            _ => Err(Error::invalid("tail", "expected upper or two-sided")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuditConfig {
    pub metric: DistanceMetric,
    pub tester: Tester,
    pub alpha: f64,
    /// Number of shadow models used (the first `shadows` of those supplied).
    pub shadows: usize,
    /// Audited prefix of each trajectory, in `(0, 1]`.
    pub fraction: f64,
    /// Number of trajectories sampled for auditing.
    pub audited: usize,
    pub ad_level: AdLevel,
    pub on_normality_failure: NormalityFailure,
    pub grubbs_sample: GrubbsSample,
    pub tail: Tail,
    /// Seed of the audited-trajectory sample.
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            metric: DistanceMetric::Wasserstein,
            tester: Tester::Grubbs,
            alpha: 0.01,
            shadows: 15,
            fraction: 1.0,
            audited: 50,
            ad_level: AdLevel::Pct5,
            on_normality_failure: NormalityFailure::Warn,
            grubbs_sample: GrubbsSample::WithSuspect,
            tail: Tail::Upper,
            seed: 0,
        }
    }
}

impl AuditConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        check_shadow_count(self.shadows)?;
        if self.tester == Tester::Grubbs
            && self.grubbs_sample == GrubbsSample::ShadowsOnly
            && self.shadows < 3
        {
            return Err(Error::invalid("shadows", "shadows-only Grubbs needs at least 3"));
        }
        check_fraction(self.fraction)?;
        if self.audited == 0 {
            return Err(Error::invalid("audited", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "result", rename_all = "kebab-case"))]
pub enum NormalityCheck {
    Passed { adjusted: f64 },
    Failed { adjusted: f64 },
    /// Fewer than five shadows, or all shadow distances identical.
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Verdict {
    /// The suspect's distance is consistent with the shadows: trained on it.
    Member,
    NonMember,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryVerdict {
    pub trajectory: TrajectoryId,
    pub shadow_distances: Vec<f64>,
    pub suspect_distance: f64,
    pub outcome: TestOutcome,
    pub normality: NormalityCheck,
    pub verdict: Verdict,
}

pub fn audit_trajectory(
    shadow_fps: &[Fingerprint],
    suspect_fp: &Fingerprint,
    config: &AuditConfig,
) -> Result<TrajectoryVerdict> {
    check_shadow_count(shadow_fps.len())?;
    let center = mean_fingerprint(shadow_fps)?;
    if suspect_fp.trajectory != shadow_fps[0].trajectory {
        return Err(Error::MixedTrajectories(
            shadow_fps[0].trajectory.0,
            suspect_fp.trajectory.0,
        ));
    }
    let shadow_distances = shadow_fps
        .iter()
        .map(|fp| distance(config.metric, &fp.values, &center))
        .collect::<Result<Vec<f64>>>()?;
    let suspect_distance = distance(config.metric, &suspect_fp.values, &center)?;

    let normality = match anderson_darling_normal(&shadow_distances) {
        Ok(ad) if ad.passes(config.ad_level) => NormalityCheck::Passed {
            adjusted: ad.adjusted,
        },
        Ok(ad) => NormalityCheck::Failed {
            adjusted: ad.adjusted,
        },
        Err(Error::TooFewSamples { .. } | Error::ZeroVariance) => NormalityCheck::NotApplicable,
        Err(e) => return Err(e),
    };

    let mut outcome = match config.tester {
        Tester::Grubbs => grubbs_decide(
            &shadow_distances,
            suspect_distance,
            config.alpha,
            config.grubbs_sample,
        )?,
        Tester::ThreeSigma => three_sigma_decide(&shadow_distances, suspect_distance)?,
    };

    if config.tail == Tail::Upper && suspect_distance <= outcome.mean {
        outcome.is_outlier = false;
    }

    let skip = matches!(normality, NormalityCheck::Failed { .. })
        && config.on_normality_failure == NormalityFailure::SkipTrajectory;
    let verdict = if skip {
        Verdict::Skipped
    } else if outcome.is_outlier {
        Verdict::NonMember
    } else {
        Verdict::Member
    };
    Ok(TrajectoryVerdict {
        trajectory: suspect_fp.trajectory,
        shadow_distances,
        suspect_distance,
        outcome,
        normality,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuditReport {
    pub dataset: String,
    pub suspect: String,
    pub config: AuditConfig,
    pub members: usize,
    pub non_members: usize,
    pub skipped: usize,
    /// `members / (members + non_members)`; 0 when nothing was decided.
    pub member_fraction: f64,
    /// Verdicts in trajectory-id order.
    pub verdicts: Vec<TrajectoryVerdict>,
}

impl AuditReport {
    pub fn assemble(
        dataset: impl Into<String>,
        suspect: impl Into<String>,
        config: AuditConfig,
        mut verdicts: Vec<TrajectoryVerdict>,
    ) -> Self {
        verdicts.sort_by_key(|v| v.trajectory);
        let count = |want: Verdict| verdicts.iter().filter(|v| v.verdict == want).count();
        let members = count(Verdict::Member);
        let non_members = count(Verdict::NonMember);
        let skipped = count(Verdict::Skipped);
        let decided = members + non_members;
        let member_fraction = if decided == 0 {
            0.0
        } else {
            members as f64 / decided as f64
        };
        AuditReport {
            dataset: dataset.into(),
            suspect: suspect.into(),
            config,
            members,
            non_members,
            skipped,
            member_fraction,
            verdicts,
        }
    }

    pub fn audited(&self) -> usize {
        self.verdicts.len()
    }
}

/// Indices of the audited trajectories: a seeded uniform sample without
/// replacement of size `min(count, m)`, sorted.
pub fn select_trajectories(dataset: &Dataset, count: usize, seed: u64) -> Vec<usize> {
    let m = dataset.trajectories.len();
    let mut idx: Vec<usize> = (0..m).collect();
    if count < m {
        idx.shuffle(&mut rng::stream(seed, 2));
        idx.truncate(count);
        idx.sort_unstable();
    }
    idx
}

/// Runs the full audit of `suspect` against `dataset`, using the first
/// `config.shadows` shadow policies.
pub fn audit_model<P, S>(
    dataset: &Dataset,
    shadows: &[P],
    critic: &Critic,
    suspect: &S,
    config: &AuditConfig,
) -> Result<AuditReport>
where
    P: Policy,
    S: SuspectView + ?Sized,
{
    config.check()?;
    if shadows.len() < config.shadows {
        return Err(Error::TooFewSamples {
            needed: config.shadows,
            got: shadows.len(),
        });
    }
    let shadows = &shadows[..config.shadows];
    let mut verdicts = Vec::new();
    for idx in select_trajectories(dataset, config.audited, config.seed) {
        let traj = &dataset.trajectories[idx];
        let shadow_fps = shadows
            .iter()
            .map(|p| collect_fingerprint(p, critic, traj, config.fraction))
            .collect::<Result<Vec<_>>>()?;
        let suspect_fp = collect_fingerprint(suspect, critic, traj, config.fraction)?;
        verdicts.push(audit_trajectory(&shadow_fps, &suspect_fp, config)?);
    }
    Ok(AuditReport::assemble(
        dataset.name.clone(),
        suspect.suspect_label(),
        config.clone(),
        verdicts,
    ))
}

/// Dataset-level decision: pirated iff the member fraction reaches `tau`.
pub fn dataset_verdict(report: &AuditReport, tau: f64) -> Result<bool> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("tau", "must lie in (0, 1]"));
    }
    Ok(report.member_fraction >= tau)
}
