//! Cumulative-reward fingerprints: critic values of a policy's actions along a
//! trajectory's recorded states.

use alloc::string::String;
use alloc::vec::Vec;

use crate::critic::Critic;
use crate::data::{Trajectory, TrajectoryId};
use crate::policy::SuspectView;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fingerprint {
    pub trajectory: TrajectoryId,
    pub policy: String,
    pub values: Vec<f64>,
}

impl Fingerprint {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The first `len` values.
    pub fn prefix(&self, len: usize) -> Fingerprint {
        Fingerprint {
            trajectory: self.trajectory,
            policy: self.policy.clone(),
            values: self.values[..len.min(self.values.len())].to_vec(),
        }
    }
}

/// `ceil(fraction · n)`, at least 1 and at most `n`.
pub fn prefix_len(n: usize, fraction: f64) -> usize {
    let raw = libm::ceil(fraction * n as f64 - 1e-9);
    (raw as usize).clamp(1, n.max(1))
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("fraction", "must lie in (0, 1]"))
    }
}

/// Queries `policy` on the first `ceil(fraction·n)` recorded states of
/// `trajectory` and scores each `(s_t, π(s_t))` with the critic.
pub fn collect_fingerprint<P: SuspectView + ?Sized>(
    policy: &P,
    critic: &Critic,
    trajectory: &Trajectory,
    fraction: f64,
) -> Result<Fingerprint> {
    check_fraction(fraction)?;
    if trajectory.is_empty() {
        return Err(Error::EmptyData);
    }
    let len = prefix_len(trajectory.len(), fraction);
    let mut states = Vec::with_capacity(len * critic.state_dim());
    for tr in &trajectory.transitions[..len] {
        states.extend_from_slice(&tr.state);
    }
    let actions = policy.act_batch_for(trajectory.id, &states, len)?;
    let values = critic.eval_batch(&states, &actions, len)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(Fingerprint {
        trajectory: trajectory.id,
        policy: policy.suspect_label().into(),
        values,
    })
}

/// Elementwise mean over fingerprints of one trajectory.
pub fn mean_fingerprint(fingerprints: &[Fingerprint]) -> Result<Vec<f64>> {
    let first = fingerprints.first().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let mut sum = alloc::vec![0.0; first.len()];
    for fp in fingerprints {
        if fp.len() != first.len() {
            return Err(Error::LengthMismatch(first.len(), fp.len()));
        }
        if fp.trajectory != first.trajectory {
            return Err(Error::MixedTrajectories(first.trajectory.0, fp.trajectory.0));
        }
        for (s, v) in sum.iter_mut().zip(&fp.values) {
            *s += v;
        }
    }
    let k = fingerprints.len() as f64;
    sum.iter_mut().for_each(|s| *s /= k);
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::{train_critic, CriticConfig};
    use crate::env::{benchmark_controllers, generate_dataset, GainController, LinearControlEnv};
    use crate::nn::{Activation, Mlp};
    use crate::policy::ConstantPolicy;
    use alloc::vec;

    fn fp(values: Vec<f64>) -> Fingerprint {
        Fingerprint {
            trajectory: TrajectoryId(0),
            policy: "p".into(),
            values,
        }
    }

    fn tiny_critic() -> Critic {
        Critic::from_net(Mlp::new(&[3, 4, 1], Activation::Identity, 1).unwrap(), 2, 1).unwrap()
    }

    #[test]
    fn prefix_lengths() {
        assert_eq!(prefix_len(40, 1.0), 40);
        assert_eq!(prefix_len(40, 0.5), 20);
        assert_eq!(prefix_len(40, 0.25), 10);
        assert_eq!(prefix_len(30, 0.1), 3);
        assert_eq!(prefix_len(3, 0.01), 1);
    }

    #[test]
    fn fraction_controls_length() {
        let env = LinearControlEnv::default();
        let d = generate_dataset("d", &env, &benchmark_controllers()[0], 1, 0).unwrap();
        let p = ConstantPolicy::new(vec![0.0]);
        let c = tiny_critic();
        let t = &d.trajectories[0];
        assert_eq!(collect_fingerprint(&p, &c, t, 1.0).unwrap().len(), 40);
        assert_eq!(collect_fingerprint(&p, &c, t, 0.5).unwrap().len(), 20);
        assert!(collect_fingerprint(&p, &c, t, 0.0).is_err());
        assert!(collect_fingerprint(&p, &c, t, 1.5).is_err());
    }

    #[test]
    fn generating_controller_reproduces_dataset_values() {
        let env = LinearControlEnv::default();
        let noisy = benchmark_controllers()[1].clone();
        let noiseless = GainController {
            exploration_sigma: 0.0,
            ..noisy.clone()
        };
        let d = generate_dataset("d", &env, &noisy, 30, 6).unwrap();
        let critic = train_critic(
            &d,
            &CriticConfig {
                epochs: 10,
                ..Default::default()
            },
        )
        .unwrap()
        .critic;
        for traj in &d.trajectories {
            let f = collect_fingerprint(&noiseless, &critic, traj, 1.0).unwrap();
            for (v, tr) in f.values.iter().zip(&traj.transitions) {
                let q = critic.eval(&tr.state, &tr.action).unwrap();
                assert!((v - q).abs() < 0.3);
            }
        }
    }

    #[test]
    fn mean_of_one_is_itself() {
        assert_eq!(mean_fingerprint(&[fp(vec![1.5, -2.0])]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn elementwise_mean() {
        let m = mean_fingerprint(&[fp(vec![0.0, 2.0]), fp(vec![2.0, 4.0])]).unwrap();
        assert_eq!(m, vec![1.0, 3.0]);
    }

    #[test]
    fn mean_rejects_mismatches() {
        let a = fp(vec![0.0; 5]);
        let b = fp(vec![0.0; 6]);
        assert_eq!(mean_fingerprint(&[a.clone(), b]), Err(Error::LengthMismatch(5, 6)));
        let mut c = a.clone();
        c.trajectory = TrajectoryId(3);
        assert!(mean_fingerprint(&[a, c]).is_err());
        assert!(mean_fingerprint(&[]).is_err());
    }
}
