//! Transitions, trajectories and datasets, plus the transforms the pipeline
//! applies to them (validation, seeded K-way splits, action normalization).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;

use crate::rng;
use crate::{Error, Result};

/// Dense trajectory identifier, assigned `0..m` at generation and preserved
/// across splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct TrajectoryId(pub u32);

impl fmt::Display for TrajectoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Set only on the final step of a trajectory that genuinely ended.
    /// Horizon-truncated trajectories are `false` everywhere.
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: TrajectoryId,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.transitions.iter().map(|t| t.reward)
    }

    /// True when the last transition is terminal (the trajectory ended).
    pub fn is_complete(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flat_map(|t| t.transitions.iter())
    }

    pub fn trajectory(&self, id: TrajectoryId) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    /// Returns `Ok(())` iff every invariant holds, otherwise all violations.
    pub fn validate(&self) -> core::result::Result<(), Vec<Violation>> {
        validate_dataset(self)
    }
}

/// A single invariant violation. `trajectory` is the position in
/// `Dataset::trajectories`, `step` the position inside that trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub trajectory: Option<usize>,
    pub step: Option<usize>,
    pub message: String,
}

impl Violation {
    fn dataset(message: impl Into<String>) -> Self {
        Violation {
            trajectory: None,
            step: None,
            message: message.into(),
        }
    }

    fn at(trajectory: usize, step: Option<usize>, message: impl Into<String>) -> Self {
        Violation {
            trajectory: Some(trajectory),
            step,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.trajectory, self.step) {
            (Some(t), Some(s)) => write!(f, "trajectory {t} step {s}: {}", self.message),
            (Some(t), None) => write!(f, "trajectory {t}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

pub fn validate_dataset(dataset: &Dataset) -> core::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let (ds, da) = (dataset.state_dim, dataset.action_dim);

    if dataset.trajectories.is_empty() {
        out.push(Violation::dataset("m=0"));
    }
    if ds == 0 {
        out.push(Violation::dataset("d_s=0"));
    }
    if da == 0 {
        out.push(Violation::dataset("d_a=0"));
    }
    if dataset.action_low.len() != da || dataset.action_high.len() != da {
        out.push(Violation::dataset(format!(
            "action bounds have lengths {}/{}, expected {da}",
            dataset.action_low.len(),
            dataset.action_high.len()
        )));
    } else {
        for (i, (lo, hi)) in dataset
            .action_low
            .iter()
            .zip(&dataset.action_high)
            .enumerate()
        {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                out.push(Violation::dataset(format!(
                    "action bound {i}: low {lo} must be < high {hi}"
                )));
            }
        }
    }

    for (ti, traj) in dataset.trajectories.iter().enumerate() {
        if traj.transitions.is_empty() {
            out.push(Violation::at(ti, None, "empty trajectory"));
            continue;
        }
        let last = traj.transitions.len() - 1;
        for (si, tr) in traj.transitions.iter().enumerate() {
            let mut dim = |what: &str, len: usize, expected: usize| {
                if len != expected {
                    out.push(Violation::at(
                        ti,
                        Some(si),
                        format!("{what} length {len}, expected {expected}"),
                    ));
                }
            };
            dim("state", tr.state.len(), ds);
            dim("action", tr.action.len(), da);
            dim("next_state", tr.next_state.len(), ds);

            let finite = tr
                .state
                .iter()
                .chain(&tr.action)
                .chain(&tr.next_state)
                .all(|v| v.is_finite())
                && tr.reward.is_finite();
            if !finite {
                out.push(Violation::at(ti, Some(si), "non-finite value"));
            }
            if tr.terminal && si != last {
                out.push(Violation::at(ti, Some(si), "terminal before last step"));
            }
            if si < last && tr.next_state != traj.transitions[si + 1].state {
                out.push(Violation::at(
                    ti,
                    Some(si),
                    "next_state differs from the following state",
                ));
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Trajectory id → index of the split subset that contains it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MembershipMap {
    subsets: BTreeMap<TrajectoryId, usize>,
}

impl MembershipMap {
    pub fn subset_of(&self, id: TrajectoryId) -> Option<usize> {
        self.subsets.get(&id).copied()
    }

    pub fn insert(&mut self, id: TrajectoryId, subset: usize) {
        self.subsets.insert(id, subset);
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TrajectoryId, usize)> + '_ {
        self.subsets.iter().map(|(k, v)| (*k, *v))
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub subsets: Vec<Dataset>,
    pub membership: MembershipMap,
}

/// Partitions the trajectories into `k` subsets whose sizes differ by at most
/// one, using a seeded uniform shuffle. Subsets keep the original trajectory
/// order and ids.
pub fn split_dataset(dataset: &Dataset, k: usize, seed: u64) -> Result<Split> {
    let m = dataset.trajectories.len();
    if k == 0 || k > m {
        return Err(Error::InvalidSplit { k, m });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::stream(seed, 0));

    let mut assignment = alloc::vec![0usize; m];
    let (base, extra) = (m / k, m % k);
    let mut cursor = 0;
    for subset in 0..k {
        let size = base + usize::from(subset < extra);
        for &idx in &order[cursor..cursor + size] {
            assignment[idx] = subset;
        }
        cursor += size;
    }

    let mut membership = MembershipMap::default();
    let mut subsets: Vec<Dataset> = (0..k)
        .map(|i| Dataset {
            name: format!("{}/part{i}", dataset.name),
            trajectories: Vec::new(),
            ..empty_like(dataset)
        })
        .collect();
    for (idx, traj) in dataset.trajectories.iter().enumerate() {
        let subset = assignment[idx];
        membership.insert(traj.id, subset);
        subsets[subset].trajectories.push(traj.clone());
    }
    if k == 1 {
        subsets[0].name = dataset.name.clone();
    }
    Ok(Split {
        subsets,
        membership,
    })
}

fn empty_like(dataset: &Dataset) -> Dataset {
    Dataset {
        name: dataset.name.clone(),
        state_dim: dataset.state_dim,
        action_dim: dataset.action_dim,
        action_low: dataset.action_low.clone(),
        action_high: dataset.action_high.clone(),
        trajectories: Vec::new(),
    }
}

/// Per-dimension affine map between an action box and `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionScaling {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionScaling {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::LengthMismatch(low.len(), high.len()));
        }
        if let Some(i) = low.iter().zip(&high).position(|(l, h)| l.is_nan() || h.is_nan() || l >= h) {
            return Err(Error::DegenerateActionRange(i));
        }
        Ok(ActionScaling { low, high })
    }

    fn is_unit(&self, i: usize) -> bool {
        self.low[i] == -1.0 && self.high[i] == 1.0
    }

    pub fn normalize(&self, action: &mut [f64]) {
        for (i, a) in action.iter_mut().enumerate() {
            if !self.is_unit(i) {
                *a = 2.0 * (*a - self.low[i]) / (self.high[i] - self.low[i]) - 1.0;
            }
        }
    }

    pub fn denormalize(&self, action: &mut [f64]) {
        for (i, a) in action.iter_mut().enumerate() {
            if !self.is_unit(i) {
                *a = self.low[i] + (*a + 1.0) * 0.5 * (self.high[i] - self.low[i]);
            }
        }
    }
}

/// Maps every action into `[-1, 1]` per dimension via
/// `a ↦ 2(a − low)/(high − low) − 1` and returns the mapping used.
/// Dimensions already bounded by exactly `(-1, 1)` are left bit-identical,
/// which makes the transform idempotent.
pub fn normalize_actions(dataset: &Dataset) -> Result<(Dataset, ActionScaling)> {
    let scaling = ActionScaling::new(dataset.action_low.clone(), dataset.action_high.clone())?;
    let mut out = dataset.clone();
    for tr in out.trajectories.iter_mut().flat_map(|t| t.transitions.iter_mut()) {
        scaling.normalize(&mut tr.action);
    }
    out.action_low = alloc::vec![-1.0; dataset.action_dim];
    out.action_high = alloc::vec![1.0; dataset.action_dim];
    Ok((out, scaling))
}


#[cfg(test)]
mod tests {
    use super::testing::toy_dataset;
    use alloc::string::ToString;
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn well_formed_dataset_validates() {
        assert_eq!(toy_dataset(3, 5, 1).validate(), Ok(()));
    }

    #[test]
    fn empty_dataset_reports_m_zero() {
        let mut d = toy_dataset(1, 3, 1);
        d.trajectories.clear();
        let errs = d.validate().unwrap_err();
        assert!(errs.iter().any(|v| v.message == "m=0"));
    }

    #[test]
    fn short_action_names_the_step() {
        let mut d = toy_dataset(3, 4, 2);
        d.trajectories[1].transitions[2].action.pop();
        let errs = d.validate().unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].trajectory, Some(1));
        assert_eq!(errs[0].step, Some(2));
        assert!(errs[0].to_string().contains("action length 1, expected 2"));
    }

    #[test]
    fn early_terminal_and_gap_are_violations() {
        let mut d = toy_dataset(1, 4, 1);
        d.trajectories[0].transitions[1].terminal = true;
        d.trajectories[0].transitions[2].state[0] += 1.0;
        let errs = d.validate().unwrap_err();
        assert!(errs.iter().any(|v| v.message.contains("terminal")));
        assert!(errs.iter().any(|v| v.message.contains("next_state")));
    }

    #[test]
    fn split_into_one_is_identity() {
        let d = toy_dataset(7, 3, 1);
        let split = split_dataset(&d, 1, 42).unwrap();
        assert_eq!(split.subsets.len(), 1);
        assert_eq!(split.subsets[0], d);
    }

    #[test]
    fn balanced_split() {
        let d = toy_dataset(10, 2, 1);
        let split = split_dataset(&d, 5, 3).unwrap();
        assert!(split.subsets.iter().all(|s| s.trajectories.len() == 2));
        assert_eq!(split.membership.len(), 10);
    }

    #[test]
    fn split_precondition() {
        let d = toy_dataset(3, 2, 1);
        assert_eq!(
            split_dataset(&d, 5, 0).unwrap_err(),
            Error::InvalidSplit { k: 5, m: 3 }
        );
        assert!(split_dataset(&d, 0, 0).is_err());
    }

    #[test]
    fn normalize_identity_on_unit_bounds() {
        let d = toy_dataset(2, 3, 1);
        let (n, _) = normalize_actions(&d).unwrap();
        assert_eq!(n, d);
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let mut d = toy_dataset(1, 3, 1);
        d.action_low = vec![0.0];
        d.action_high = vec![2.0];
        for (i, tr) in d.trajectories[0].transitions.iter_mut().enumerate() {
            tr.action = vec![i as f64];
        }
        let (n, scaling) = normalize_actions(&d).unwrap();
        let acts: Vec<f64> = n.transitions().map(|t| t.action[0]).collect();
        assert_eq!(acts, vec![-1.0, 0.0, 1.0]);
        assert_eq!((n.action_low[0], n.action_high[0]), (-1.0, 1.0));
        let mut a = vec![0.0];
        scaling.denormalize(&mut a);
        assert_eq!(a, vec![1.0]);
    }

    #[test]
    fn degenerate_range_rejected() {
        let mut d = toy_dataset(1, 2, 2);
        d.action_low = vec![-1.0, 0.5];
        d.action_high = vec![1.0, 0.5];
        assert_eq!(
            normalize_actions(&d).unwrap_err(),
            Error::DegenerateActionRange(1)
        );
    }

    proptest! {
        #[test]
        fn split_is_a_partition(m in 1usize..40, k_frac in 0.0f64..1.0, seed: u64) {
            let d = toy_dataset(m, 2, 1);
            let k = 1 + ((m - 1) as f64 * k_frac) as usize;
            let split = split_dataset(&d, k, seed).unwrap();
            let mut ids: Vec<u32> = split
                .subsets
                .iter()
                .flat_map(|s| s.trajectories.iter().map(|t| t.id.0))
                .collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..m as u32).collect::<Vec<_>>());
            let sizes: Vec<usize> = split.subsets.iter().map(|s| s.trajectories.len()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            for (i, s) in split.subsets.iter().enumerate() {
                for t in &s.trajectories {
                    prop_assert_eq!(split.membership.subset_of(t.id), Some(i));
                }
            }
        }

        #[test]
        fn normalize_is_idempotent(lo in -5.0f64..0.0, width in 0.1f64..10.0) {
            let mut d = toy_dataset(2, 4, 1);
            d.action_low = vec![lo];
            d.action_high = vec![lo + width];
            let (once, _) = normalize_actions(&d).unwrap();
            let (twice, _) = normalize_actions(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
