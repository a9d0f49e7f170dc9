//! A deterministic double-integrator point-control environment and scripted
//! linear-gain controllers used to synthesize benchmark datasets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Trajectory, TrajectoryId, Transition};
use crate::policy::Policy;
use crate::rng;
use crate::{Error, Result};

pub const STATE_DIM: usize = 2;
pub const ACTION_DIM: usize = 1;

/// State is `(position, velocity)`; the single action is an acceleration in
/// `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearControlEnv {
    pub dt: f64,
    pub horizon: usize,
    pub c_pos: f64,
    pub c_act: f64,
    /// When set, the horizon is a genuine episode end and the last transition
    /// is marked terminal. Otherwise trajectories are truncated.
    pub episodic: bool,
}

impl Default for LinearControlEnv {
    fn default() -> Self {
        LinearControlEnv {
            dt: 0.1,
            horizon: 40,
            c_pos: 1.0,
            c_act: 0.01,
            episodic: false,
        }
    }
}

impl LinearControlEnv {
    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if self.horizon < 2 {
            return Err(Error::invalid("horizon", "must be at least 2"));
        }
        if !(self.c_pos >= 0.0 && self.c_act >= 0.0) {
            return Err(Error::invalid("reward coefficients", "must be nonnegative"));
        }
        Ok(())
    }

    /// One Euler step. Reward is charged on the pre-step position.
    pub fn step(&self, state: [f64; 2], action: f64) -> Result<([f64; 2], f64)> {
        if !(state[0].is_finite() && state[1].is_finite() && action.is_finite()) {
            return Err(Error::NonFinite);
        }
        if action.abs() > 1.0 {
            return Err(Error::invalid("action", "must lie in [-1, 1]"));
        }
        let [pos, vel] = state;
        let next = [pos + self.dt * vel, vel + self.dt * action];
        let reward = -self.c_pos * pos * pos - self.c_act * action * action;
        Ok((next, reward))
    }
}

/// `a = clip(-k_pos·pos - k_vel·vel + ε, -1, 1)` with `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GainController {
    pub k_pos: f64,
    pub k_vel: f64,
    pub exploration_sigma: f64,
}

impl GainController {
    pub fn new(k_pos: f64, k_vel: f64, exploration_sigma: f64) -> Self {
        GainController {
            k_pos,
            k_vel,
            exploration_sigma,
        }
    }

    /// Noise-free gain law, clipped.
    pub fn mean_action(&self, state: [f64; 2]) -> f64 {
        (-self.k_pos * state[0] - self.k_vel * state[1]).clamp(-1.0, 1.0)
    }

    pub fn action<R: Rng + ?Sized>(&self, state: [f64; 2], rng: &mut R) -> f64 {
        let raw = -self.k_pos * state[0] - self.k_vel * state[1];
        let noise = if self.exploration_sigma > 0.0 {
            Normal::new(0.0, self.exploration_sigma)
                .map(|n| n.sample(rng))
                .unwrap_or(0.0)
        } else {
            0.0
        };
        (raw + noise).clamp(-1.0, 1.0)
    }
}

/// The noise-free gain law viewed as a black-box policy.
impl Policy for GainController {
    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn label(&self) -> &str {
        "gain-controller"
    }

    fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != STATE_DIM {
            return Err(Error::Shape {
                context: "controller state",
                expected: STATE_DIM,
                found: state.len(),
            });
        }
        Ok(vec![self.mean_action([state[0], state[1]])])
    }
}

/// The five benchmark controllers, one per synthetic dataset.
pub fn benchmark_controllers() -> [GainController; 5] {
    const SIGMA: f64 = 0.05;
    [
        GainController::new(0.5, 0.5, SIGMA),
        GainController::new(1.0, 0.5, SIGMA),
        GainController::new(1.5, 0.5, SIGMA),
        GainController::new(1.0, 1.0, SIGMA),
        GainController::new(2.0, 0.2, SIGMA),
    ]
}

/// Rolls out `n_traj` trajectories of length `env.horizon`. Trajectory `i`
/// draws its initial state (uniform on `[-1, 1]²`) and exploration noise
/// from its own stream of `seed`, so generation order does not matter.
pub fn generate_dataset(
    name: impl Into<String>,
    env: &LinearControlEnv,
    controller: &GainController,
    n_traj: usize,
    seed: u64,
) -> Result<Dataset> {
    env.check()?;
    if n_traj == 0 {
        return Err(Error::invalid("n_traj", "must be at least 1"));
    }
    if controller.exploration_sigma.is_nan() || controller.exploration_sigma < 0.0 {
        return Err(Error::invalid("exploration_sigma", "must be nonnegative"));
    }
    let trajectories = (0..n_traj)
        .map(|i| rollout(env, controller, i, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: name.into(),
        state_dim: STATE_DIM,
        action_dim: ACTION_DIM,
        action_low: vec![-1.0],
        action_high: vec![1.0],
        trajectories,
    })
}

fn rollout(
    env: &LinearControlEnv,
    controller: &GainController,
    index: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = rng::stream(seed, index as u64);
    let mut state = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
    let mut transitions = Vec::with_capacity(env.horizon);
    for t in 0..env.horizon {
        let action = controller.action(state, &mut rng);
        let (next, reward) = env.step(state, action)?;
        transitions.push(Transition {
            state: state.to_vec(),
            action: vec![action],
            reward,
            next_state: next.to_vec(),
            terminal: env.episodic && t + 1 == env.horizon,
        });
        state = next;
    }
    Ok(Trajectory {
        id: TrajectoryId(index as u32),
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let env = LinearControlEnv::default();
        assert_eq!(env.step([0.0, 0.0], 0.0).unwrap(), ([0.0, 0.0], 0.0));
    }

    #[test]
    fn step_formula() {
        let env = LinearControlEnv::default();
        let (next, r) = env.step([1.0, 0.0], 0.0).unwrap();
        assert_eq!(next, [1.0, 0.0]);
        assert_eq!(r, -1.0);
        let (next, _) = env.step([0.0, 1.0], 1.0).unwrap();
        assert!(close(next[0], 0.1) && close(next[1], 1.1));
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let env = LinearControlEnv::default();
        assert_eq!(env.step([f64::NAN, 0.0], 0.0), Err(Error::NonFinite));
        assert!(env.step([0.0, 0.0], 1.5).is_err());
    }

    #[test]
    fn controller_clipping() {
        let mut rng = rng::stream(0, 0);
        assert_eq!(GainController::new(1.0, 0.0, 0.0).action([1.0, 0.0], &mut rng), -1.0);
        assert_eq!(GainController::new(0.0, 0.0, 0.0).action([0.3, -0.7], &mut rng), 0.0);
        assert_eq!(GainController::new(3.0, 0.0, 0.0).action([1.0, 0.0], &mut rng), -1.0);
    }

    #[test]
    fn generation_shape_and_determinism() {
        let env = LinearControlEnv::default();
        let c = &benchmark_controllers()[1];
        let a = generate_dataset("a", &env, c, 3, 11).unwrap();
        assert_eq!(a.trajectories.len(), 3);
        assert!(a.trajectories.iter().all(|t| t.len() == env.horizon));
        assert_eq!(a.validate(), Ok(()));
        let b = generate_dataset("a", &env, c, 3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let env = LinearControlEnv::default();
        let c = &benchmark_controllers()[0];
        let a = generate_dataset("a", &env, c, 3, 0).unwrap();
        let b = generate_dataset("a", &env, c, 3, 1).unwrap();
        assert!(a.transitions().zip(b.transitions()).any(|(x, y)| x != y));
    }

    #[test]
    fn generated_values_respect_bounds() {
        let env = LinearControlEnv::default();
        for (i, c) in benchmark_controllers().iter().enumerate() {
            let d = generate_dataset("d", &env, c, 20, i as u64).unwrap();
            for tr in d.transitions() {
                assert!(tr.action[0].abs() <= 1.0);
                assert!(tr.reward <= 0.0);
                assert!(!tr.terminal);
            }
        }
    }

    #[test]
    fn episodic_marks_last_step() {
        let env = LinearControlEnv {
            episodic: true,
            ..Default::default()
        };
        let d = generate_dataset("e", &env, &benchmark_controllers()[0], 2, 0).unwrap();
        assert!(d.trajectories.iter().all(|t| t.is_complete()));
        assert_eq!(d.validate(), Ok(()));
    }

    #[test]
    fn controllers_act_differently_on_shared_states() {
        // Gains separated by >= 0.4 in k_pos give measurably different
        // mean actions on the same states.
        let env = LinearControlEnv::default();
        let ctrls = benchmark_controllers();
        let probe = generate_dataset("p", &env, &ctrls[0], 20, 5).unwrap();
        let mean_gap = |a: &GainController, b: &GainController| {
            let n = probe.num_transitions() as f64;
            probe
                .transitions()
                .map(|t| {
                    let s = [t.state[0], t.state[1]];
                    (a.mean_action(s) - b.mean_action(s)).abs()
                })
                .sum::<f64>()
                / n
        };
        assert!(mean_gap(&ctrls[0], &ctrls[1]) > 0.05);
        assert!(mean_gap(&ctrls[1], &ctrls[2]) > 0.05);
        assert!(mean_gap(&ctrls[2], &ctrls[4]) > 0.05);
    }
}
