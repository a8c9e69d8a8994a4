use super::{Env, Trajectory};
use crate::discriminator::{reward_from_d, MlpDiscriminator};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::policy::{LinearPolicy, ObservationNormalizer};

/// Label prefix for evaluation / recording episode streams.
pub const EVAL_STREAM: u64 = 0xE7A1;

/// Which signal is summed into `disc_return`.
#[derive(Debug, Clone, Copy)]
pub enum RewardSource<'a> {
    Environment,
    Discriminator(&'a MlpDiscriminator),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    /// Empty unless the rollout was asked to record.
    pub trajectory: Trajectory,
    pub steps: usize,
    /// Return under the requested reward source (equals `env_return` for
    /// [`RewardSource::Environment`]).
    pub disc_return: f64,
    pub env_return: f64,
}

/// Resets `env` from `rng` and runs `policy` to the horizon.
///
/// The normalizer is only read. Env rewards are always summed into
/// `env_return`, kept apart from `disc_return`.
pub fn rollout(
    env: &mut Env,
    policy: &LinearPolicy,
    normalizer: &ObservationNormalizer,
    source: RewardSource<'_>,
    rng: &mut Rng,
    record: bool,
) -> Result<RolloutOutcome> {
    let spec = *env.spec();
    if policy.state_dim() != spec.state_dim {
        return Err(Error::dims(
            "rollout policy state dim",
            spec.state_dim,
            policy.state_dim(),
        ));
    }
    if policy.action_dim() != spec.action_dim {
        return Err(Error::dims(
            "rollout policy action dim",
            spec.action_dim,
            policy.action_dim(),
        ));
    }
    if normalizer.dim() != spec.state_dim {
        return Err(Error::dims(
            "rollout normalizer",
            spec.state_dim,
            normalizer.dim(),
        ));
    }
    let mut disc_scratch = match source {
        RewardSource::Discriminator(d) => {
            if d.state_dim() != spec.state_dim || d.action_dim() != spec.action_dim {
                return Err(Error::dims(
                    "rollout discriminator input",
                    spec.state_dim + spec.action_dim,
                    d.input_dim(),
                ));
            }
            Some(d.scratch())
        }
        RewardSource::Environment => None,
    };
    let frozen = normalizer.snapshot();
    let theta = policy.theta();
    let mut z = vec![0.0; spec.state_dim];
    let mut raw_action = vec![0.0; spec.action_dim];
    let mut traj = Trajectory::default();
    if record {
        traj.states.reserve(spec.horizon);
        traj.actions.reserve(spec.horizon);
        traj.env_rewards.reserve(spec.horizon);
    }
    let mut state = env.reset(rng);
    let (mut disc_return, mut env_return, mut steps) = (0.0, 0.0, 0);
    loop {
        frozen.normalize_into(&state, &mut z);
        theta.matvec_into(&z, &mut raw_action);
        let action = env.clip_action(&raw_action);
        let out = env.step(&action)?;
        env_return += out.reward;
        if let (RewardSource::Discriminator(d), Some(scratch)) = (source, disc_scratch.as_mut()) {
            disc_return += reward_from_d(d.forward_with(&state, &action, scratch));
        }
        steps += 1;
        let next = out.state;
        if record {
            traj.states.push(std::mem::replace(&mut state, next));
            traj.actions.push(action);
            traj.env_rewards.push(out.reward);
        } else {
            state = next;
        }
        if out.done {
            break;
        }
    }
    if matches!(source, RewardSource::Environment) {
        disc_return = env_return;
    }
    Ok(RolloutOutcome {
        trajectory: traj,
        steps,
        disc_return,
        env_return,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalSummary {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            returns,
        }
    }
}

/// Environment-reward evaluation over `episodes` seeded episodes; episode `k`
/// draws its initial state from stream `(seed, [EVAL_STREAM, k])`.
pub fn evaluate(
    policy: &LinearPolicy,
    normalizer: &ObservationNormalizer,
    env: &Env,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    let mut env = env.clone();
    let returns = (0..episodes as u64)
        .map(|k| {
            let mut rng = Rng::new(seed, &[EVAL_STREAM, k]);
            rollout(
                &mut env,
                policy,
                normalizer,
                RewardSource::Environment,
                &mut rng,
                false,
            )
            .map(|o| o.env_return)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_returns(returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;

    #[test]
    fn zero_policy_lqr_matches_simulation() {
        let mut env = Env::new(EnvKind::Lqr2d);
        let policy = LinearPolicy::zeros(1, 2);
        let norm = ObservationNormalizer::new(2);
        let mut rng = Rng::new(9, &[]);
        let out = rollout(
            &mut env,
            &policy,
            &norm,
            RewardSource::Environment,
            &mut rng,
            true,
        )
        .unwrap();
        // Oracle: drift x ← x + 0.1 v for 100 steps from the same reset draw.
        let mut r2 = Rng::new(9, &[]);
        let (mut x, v) = (r2.uniform(-1.0, 1.0), r2.uniform(-1.0, 1.0));
        let mut expected = 0.0;
        for _ in 0..100 {
            expected -= x * x + v * v;
            x += 0.1 * v;
        }
        assert!((out.env_return - expected).abs() < 1e-9 * expected.abs());
        assert_eq!(out.disc_return, out.env_return);
        assert_eq!(out.trajectory.len(), 100);
        assert_eq!(out.steps, 100);
    }

    #[test]
    fn zero_policy_from_unit_position_closed_form() {
        // From s₀ = (1, 0) the zero policy never moves: return = −100 exactly.
        let mut env = Env::new(EnvKind::Lqr2d);
        let policy = LinearPolicy::zeros(1, 2);
        let norm = ObservationNormalizer::new(2);
        let mut total = 0.0;
        env.set_internal_state(&[1.0, 0.0]).unwrap();
        while !env.is_done() {
            let obs = env.observation();
            total += env.step(&policy.act(&norm, &obs).unwrap()).unwrap().reward;
        }
        assert_eq!(total, -100.0);
    }

    #[test]
    fn deterministic_and_rewards_nonpositive() {
        for kind in EnvKind::ALL {
            let spec = kind.spec();
            let mut theta_rng = Rng::new(1, &[]);
            let policy =
                LinearPolicy::new(theta_rng.gaussian_matrix(spec.action_dim, spec.state_dim))
                    .unwrap();
            let norm = ObservationNormalizer::new(spec.state_dim);
            let run = || {
                let mut env = Env::new(kind);
                rollout(
                    &mut env,
                    &policy,
                    &norm,
                    RewardSource::Environment,
                    &mut Rng::new(4, &[2]),
                    true,
                )
                .unwrap()
            };
            let a = run();
            assert_eq!(a, run());
            assert_eq!(a.trajectory.len(), spec.horizon);
            assert!(a.trajectory.env_rewards.iter().all(|r| *r <= 0.0));
        }
    }

    #[test]
    fn max_steps_caps_horizon() {
        let mut env = Env::new(EnvKind::Pendulum).with_max_steps(50);
        let out = rollout(
            &mut env,
            &LinearPolicy::zeros(1, 3),
            &ObservationNormalizer::new(3),
            RewardSource::Environment,
            &mut Rng::new(0, &[]),
            false,
        )
        .unwrap();
        assert_eq!(out.steps, 50);
        assert!(out.trajectory.is_empty());
    }

    #[test]
    fn discriminator_source_sums_rewards() {
        let mut rng = Rng::new(3, &[]);
        let disc = MlpDiscriminator::with_hidden(2, 1, 8, &mut rng).unwrap();
        let policy = LinearPolicy::new(rng.gaussian_matrix(1, 2)).unwrap();
        let norm = ObservationNormalizer::new(2);
        let mut env = Env::new(EnvKind::Lqr2d);
        let out = rollout(
            &mut env,
            &policy,
            &norm,
            RewardSource::Discriminator(&disc),
            &mut Rng::new(1, &[]),
            true,
        )
        .unwrap();
        let expected: f64 = out
            .trajectory
            .states
            .iter()
            .zip(&out.trajectory.actions)
            .map(|(s, a)| disc.reward(s, a).unwrap())
            .sum();
        assert!((out.disc_return - expected).abs() < 1e-12 * expected.abs().max(1.0));
        assert!(
            (out.env_return - out.trajectory.env_return()).abs() < 1e-12 * out.env_return.abs()
        );
    }

    #[test]
    fn rollout_rejects_mismatched_policy() {
        let mut env = Env::new(EnvKind::Lqr2d);
        let err = rollout(
            &mut env,
            &LinearPolicy::zeros(1, 3),
            &ObservationNormalizer::new(3),
            RewardSource::Environment,
            &mut Rng::new(0, &[]),
            false,
        );
        assert!(err.is_err());
    }

    #[test]
    fn evaluate_single_episode_has_zero_std() {
        let env = Env::new(EnvKind::Lqr2d);
        let s = evaluate(
            &LinearPolicy::zeros(1, 2),
            &ObservationNormalizer::new(2),
            &env,
            1,
            3,
        )
        .unwrap();
        assert_eq!(s.std, 0.0);
        let again = evaluate(
            &LinearPolicy::zeros(1, 2),
            &ObservationNormalizer::new(2),
            &env,
            1,
            3,
        )
        .unwrap();
        assert_eq!(s, again);
        assert!(evaluate(
            &LinearPolicy::zeros(1, 2),
            &ObservationNormalizer::new(2),
            &env,
            0,
            3
        )
        .is_err());
    }
}
