//! Outer training loops: plain ARS on environment reward (expert production)
//! and adversarial imitation, where every policy update is driven only by
//! discriminator rewards.

use std::io::{self, Write};
use std::time::Instant;

use crate::ars::{
    ars_update, evaluate_directions, reward_std, sample_directions, ArsConfig, Executor,
    RolloutContext,
};
use crate::demo_io::TrajectorySet;
use crate::discriminator::{disc_train, DiscTrainConfig, MlpDiscriminator};
use crate::envs::{evaluate, Env, RewardSource};
use crate::error::{Error, Result};
use crate::numerics::{AdamState, Rng};
use crate::policy::{LinearPolicy, ObservationNormalizer};

pub use crate::envs::EvalSummary;

pub const DISC_INIT_STREAM: u64 = 0xD15C;
pub const DISC_BATCH_STREAM: u64 = 0xBA7C;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub ars: ArsConfig,
    pub max_iterations: usize,
    /// Episode length cap; the environment horizon applies when smaller.
    pub rollout_max_steps: usize,
    pub disc_lr: f64,
    pub disc_iters: usize,
    /// `None` uses the (capped) episode length.
    pub disc_batch: Option<usize>,
    /// Iterations between environment-reward evaluations.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
    /// Fill `wall_ms` in metrics. Off by default so metrics files are reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            ars: ArsConfig::default(),
            max_iterations: 100_000,
            rollout_max_steps: 1000,
            disc_lr: 0.00025,
            disc_iters: 3,
            disc_batch: None,
            eval_every: 10,
            eval_episodes: 10,
            eval_seed: 1_000_003,
            seed: 0,
            early_stop: None,
            record_wall_time: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.ars.validate()?;
        let positive = [
            ("max_iterations", self.max_iterations),
            ("rollout_max_steps", self.rollout_max_steps),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
        }
        if !(self.disc_lr > 0.0) {
            return Err(Error::InvalidArgument("disc_lr must be > 0".into()));
        }
        if self.disc_batch == Some(0) {
            return Err(Error::InvalidArgument("disc_batch must be >= 1".into()));
        }
        if let Some(stop) = &self.early_stop {
            if !(stop.fraction > 0.0) {
                return Err(Error::InvalidArgument("target fraction must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Stop once an evaluation reaches `fraction` of `reference_return`
/// (in the sense of [`return_ratio`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub reference_return: f64,
    pub fraction: f64,
}

/// How much of `reference` an `achieved` return attains.
///
/// For positive references this is `achieved / reference`. For the cost-only
/// environments here returns are negative, and the ratio is the cost ratio
/// `reference / achieved`: 1 when the costs match, below 1 when `achieved`
/// is worse.
pub fn return_ratio(achieved: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        achieved / reference
    } else if reference < 0.0 {
        if achieved >= 0.0 {
            f64::INFINITY
        } else {
            reference / achieved
        }
    } else if achieved >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub mean_disc_return: f64,
    pub sigma_r: f64,
    pub disc_loss: Option<f64>,
    pub eval: Option<(f64, f64)>,
    pub wall_ms: Option<u64>,
}

pub const METRICS_HEADER: &str =
    "iteration,mean_disc_return,sigma_r,disc_loss,eval_env_return_mean,eval_env_return_std,wall_ms";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.mean_disc_return,
            self.sigma_r,
            opt(self.disc_loss),
            opt(self.eval.map(|e| e.0)),
            opt(self.eval.map(|e| e.1)),
            opt(self.wall_ms),
        )
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    Ok(())
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

/// Plain ARS on environment reward.
#[derive(Debug)]
pub struct ExpertTrainer {
    env: Env,
    config: ArsConfig,
    seed: u64,
    policy: LinearPolicy,
    normalizer: ObservationNormalizer,
    iteration: u64,
    executor: Executor,
}

impl ExpertTrainer {
    pub fn new(env: Env, config: ArsConfig, seed: u64, executor: Executor) -> Result<Self> {
        config.validate()?;
        let spec = *env.spec();
        Ok(Self {
            env,
            config,
            seed,
            policy: LinearPolicy::zeros(spec.action_dim, spec.state_dim),
            normalizer: ObservationNormalizer::new(spec.state_dim),
            iteration: 0,
            executor,
        })
    }

    pub fn policy(&self) -> &LinearPolicy {
        &self.policy
    }

    pub fn normalizer(&self) -> &ObservationNormalizer {
        &self.normalizer
    }

    /// Sample directions, roll out, update θ, then fold visited states into the normalizer.
    pub fn step(&mut self) -> Result<MetricsRow> {
        let spec = *self.env.spec();
        let deltas = sample_directions(
            self.seed,
            self.iteration,
            self.config.n_directions,
            spec.action_dim,
            spec.state_dim,
        )?;
        let ctx = RolloutContext {
            env: &self.env,
            normalizer: &self.normalizer,
            source: RewardSource::Environment,
            seed: self.seed,
            iteration: self.iteration,
        };
        let eval = evaluate_directions(&self.policy, deltas, self.config.nu, ctx, &self.executor)?;
        let theta = ars_update(self.policy.theta(), &eval.results, self.config.alpha)?;
        self.policy = LinearPolicy::new(theta)?;
        self.normalizer.observe_all(eval.visited_states())?;
        self.iteration += 1;
        Ok(MetricsRow {
            iteration: self.iteration,
            mean_disc_return: eval.mean_return(),
            sigma_r: reward_std(&eval.results),
            disc_loss: None,
            eval: None,
            wall_ms: None,
        })
    }

    pub fn into_parts(self) -> (LinearPolicy, ObservationNormalizer) {
        (self.policy, self.normalizer)
    }
}

pub fn train_expert(
    env: &Env,
    config: &ArsConfig,
    iterations: usize,
    seed: u64,
    executor: &Executor,
) -> Result<(LinearPolicy, ObservationNormalizer)> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    let mut trainer = ExpertTrainer::new(env.clone(), config.clone(), seed, executor.clone())?;
    for _ in 0..iterations {
        trainer.step()?;
    }
    Ok(trainer.into_parts())
}

/// Everything the imitation loop mutates.
#[derive(Debug, Clone)]
pub struct AilsrsState {
    pub policy: LinearPolicy,
    pub normalizer: ObservationNormalizer,
    pub disc: MlpDiscriminator,
    pub adam: AdamState,
}

impl AilsrsState {
    /// Zero (or supplied) policy and a freshly initialized discriminator.
    pub fn new(
        env: &Env,
        seed: u64,
        init: Option<(LinearPolicy, ObservationNormalizer)>,
    ) -> Result<Self> {
        let spec = *env.spec();
        let (policy, normalizer) = match init {
            Some((p, n)) => {
                if p.state_dim() != spec.state_dim || p.action_dim() != spec.action_dim {
                    return Err(Error::Validation(format!(
                        "initial policy is {}x{}, env needs {}x{}",
                        p.action_dim(),
                        p.state_dim(),
                        spec.action_dim,
                        spec.state_dim
                    )));
                }
                if n.dim() != spec.state_dim {
                    return Err(Error::dims("initial normalizer", spec.state_dim, n.dim()));
                }
                (p, n)
            }
            None => (
                LinearPolicy::zeros(spec.action_dim, spec.state_dim),
                ObservationNormalizer::new(spec.state_dim),
            ),
        };
        let disc = MlpDiscriminator::new(
            spec.state_dim,
            spec.action_dim,
            &mut Rng::new(seed, &[DISC_INIT_STREAM]),
        )?;
        let adam = AdamState::new(disc.num_params());
        Ok(Self {
            policy,
            normalizer,
            disc,
            adam,
        })
    }
}

/// One imitation iteration:
/// directions → 2N rollouts scored by the current discriminator → discriminator
/// update on those rollouts vs. the expert set → ARS step on the pre-update
/// discriminator returns → normalizer update with all visited states.
pub fn ailsrs_iteration(
    state: &mut AilsrsState,
    expert: &TrajectorySet,
    config: &TrainerConfig,
    env: &Env,
    iteration: u64,
    executor: &Executor,
) -> Result<MetricsRow> {
    let spec = *env.spec();
    expert.check_env(&spec)?;
    let deltas = sample_directions(
        config.seed,
        iteration,
        config.ars.n_directions,
        spec.action_dim,
        spec.state_dim,
    )?;
    let ctx = RolloutContext {
        env,
        normalizer: &state.normalizer,
        source: RewardSource::Discriminator(&state.disc),
        seed: config.seed,
        iteration,
    };
    let eval = evaluate_directions(&state.policy, deltas, config.ars.nu, ctx, executor)?;

    let disc_cfg = DiscTrainConfig {
        iters: config.disc_iters,
        batch_size: config.disc_batch.unwrap_or(spec.horizon),
        lr: config.disc_lr,
    };
    let mut batch_rng = Rng::new(config.seed, &[DISC_BATCH_STREAM, iteration]);
    let disc_loss = disc_train(
        &mut state.disc,
        &mut state.adam,
        expert,
        &eval.trajectories,
        &disc_cfg,
        &mut batch_rng,
    )?;

    let theta = ars_update(state.policy.theta(), &eval.results, config.ars.alpha)?;
    state.policy = LinearPolicy::new(theta)?;
    state.normalizer.observe_all(eval.visited_states())?;

    Ok(MetricsRow {
        iteration: iteration + 1,
        mean_disc_return: eval.mean_return(),
        sigma_r: reward_std(&eval.results),
        disc_loss: Some(disc_loss),
        eval: None,
        wall_ms: None,
    })
}

#[derive(Debug, Clone)]
pub struct AilsrsRun {
    pub policy: LinearPolicy,
    pub normalizer: ObservationNormalizer,
    pub disc: MlpDiscriminator,
    pub metrics: Vec<MetricsRow>,
    /// Iteration (1-based) at which the early-stop target was met.
    pub stopped_at: Option<u64>,
}

impl AilsrsRun {
    pub fn last_eval(&self) -> Option<(f64, f64)> {
        self.metrics.iter().rev().find_map(|m| m.eval)
    }
}

/// Runs imitation until `max_iterations` or the early-stop target. Evaluations
/// use environment reward with the normalizer frozen; they never feed updates.
pub fn train_ailsrs(
    env: &Env,
    expert: &TrajectorySet,
    config: &TrainerConfig,
    init: Option<(LinearPolicy, ObservationNormalizer)>,
    executor: &Executor,
) -> Result<AilsrsRun> {
    config.validate()?;
    expert.validate()?;
    expert.check_env(env.spec())?;
    let env = env.clone().with_max_steps(config.rollout_max_steps);
    let mut state = AilsrsState::new(&env, config.seed, init)?;
    let started = Instant::now();
    let mut metrics = Vec::new();
    let mut stopped_at = None;
    for it in 0..config.max_iterations as u64 {
        let mut row = ailsrs_iteration(&mut state, expert, config, &env, it, executor)?;
        let last = it + 1 == config.max_iterations as u64;
        if row.iteration % config.eval_every as u64 == 0 || last {
            let summary = evaluate(
                &state.policy,
                &state.normalizer,
                &env,
                config.eval_episodes,
                config.eval_seed,
            )?;
            row.eval = Some((summary.mean, summary.std));
            if let Some(stop) = config.early_stop {
                if return_ratio(summary.mean, stop.reference_return) >= stop.fraction {
                    stopped_at = Some(row.iteration);
                }
            }
        }
        if config.record_wall_time {
            row.wall_ms = Some(started.elapsed().as_millis() as u64);
        }
        metrics.push(row);
        if stopped_at.is_some() {
            break;
        }
    }
    Ok(AilsrsRun {
        policy: state.policy,
        normalizer: state.normalizer,
        disc: state.disc,
        metrics,
        stopped_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo_io::record;
    use crate::envs::{riccati_optimal, EnvKind};

    #[test]
    fn ratio_semantics() {
        assert_eq!(return_ratio(-10.0, -9.0), 0.9);
        assert_eq!(return_ratio(-9.0, -9.0), 1.0);
        assert_eq!(return_ratio(50.0, 100.0), 0.5);
        assert!(return_ratio(-20.0, -10.0) < 0.9);
    }

    #[test]
    fn csv_formatting() {
        let row = MetricsRow {
            iteration: 3,
            mean_disc_return: 0.1,
            sigma_r: 2.5e-7,
            disc_loss: Some(0.25),
            eval: None,
            wall_ms: None,
        };
        assert_eq!(row.to_csv(), "3,0.1,0.00000025,0.25,,,");
        let text = metrics_to_csv(&[row]);
        assert!(text.starts_with(METRICS_HEADER));
        let parsed: f64 = "0.00000025".parse().unwrap();
        assert_eq!(parsed, 2.5e-7);
    }

    #[test]
    fn train_expert_rejects_zero_iterations() {
        let env = Env::new(EnvKind::Lqr2d);
        let cfg = ArsConfig {
            n_directions: 2,
            ..Default::default()
        };
        assert!(train_expert(&env, &cfg, 0, 1, &Executor::Serial).is_err());
    }

    #[test]
    fn expert_step_grows_normalizer_count() {
        let env = Env::new(EnvKind::Lqr2d);
        let cfg = ArsConfig {
            n_directions: 4,
            ..Default::default()
        };
        let mut t = ExpertTrainer::new(env, cfg, 1, Executor::Serial).unwrap();
        t.step().unwrap();
        assert_eq!(t.normalizer().count(), 8 * 100);
        t.step().unwrap();
        assert_eq!(t.normalizer().count(), 16 * 100);
    }

    fn small_expert(episodes: usize) -> (Env, TrajectorySet) {
        let env = Env::new(EnvKind::Lqr2d);
        let sol = riccati_optimal(&env).unwrap();
        let set = record(
            &sol.policy,
            &ObservationNormalizer::new(2),
            &env,
            episodes,
            99,
        )
        .unwrap();
        (env, set)
    }

    #[test]
    fn constant_discriminator_leaves_theta() {
        let (env, expert) = small_expert(2);
        let cfg = TrainerConfig {
            ars: ArsConfig {
                n_directions: 4,
                ..Default::default()
            },
            disc_iters: 0,
            ..Default::default()
        };
        let mut state = AilsrsState::new(&env, 1, None).unwrap();
        let zeros = vec![0.0; state.disc.num_params()];
        state.disc.set_params(&zeros).unwrap();
        state.policy = LinearPolicy::new(Rng::new(5, &[]).gaussian_matrix(1, 2)).unwrap();
        let before = state.policy.clone();
        let row = ailsrs_iteration(&mut state, &expert, &cfg, &env, 0, &Executor::Serial).unwrap();
        assert!((row.mean_disc_return - 100.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(row.sigma_r, 0.0);
        assert_eq!(state.policy, before);
        assert_eq!(state.normalizer.count(), 800);
    }

    #[test]
    fn iteration_is_deterministic() {
        let (env, expert) = small_expert(3);
        let cfg = TrainerConfig {
            ars: ArsConfig {
                n_directions: 4,
                ..Default::default()
            },
            seed: 7,
            ..Default::default()
        };
        let run = || {
            let mut s = AilsrsState::new(&env, 7, None).unwrap();
            let row = ailsrs_iteration(&mut s, &expert, &cfg, &env, 0, &Executor::Serial).unwrap();
            (row.to_csv(), s.policy)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn train_ailsrs_metrics_shape() {
        let (env, expert) = small_expert(2);
        let cfg = TrainerConfig {
            ars: ArsConfig {
                n_directions: 2,
                ..Default::default()
            },
            max_iterations: 7,
            eval_every: 3,
            eval_episodes: 2,
            ..Default::default()
        };
        let run = train_ailsrs(&env, &expert, &cfg, None, &Executor::Serial).unwrap();
        assert_eq!(run.metrics.len(), 7);
        assert!(run
            .metrics
            .windows(2)
            .all(|w| w[1].iteration > w[0].iteration));
        let evals: Vec<u64> = run
            .metrics
            .iter()
            .filter(|m| m.eval.is_some())
            .map(|m| m.iteration)
            .collect();
        assert_eq!(evals, vec![3, 6, 7]);
        assert_eq!(run.normalizer.count(), 7 * 4 * 100);
    }

    #[test]
    fn train_ailsrs_rejects_mismatched_demos() {
        let (_, expert) = small_expert(1);
        let env = Env::new(EnvKind::Pendulum);
        let cfg = TrainerConfig {
            max_iterations: 1,
            ..Default::default()
        };
        assert!(train_ailsrs(&env, &expert, &cfg, None, &Executor::Serial).is_err());
    }

    #[test]
    fn evaluation_does_not_touch_normalizer() {
        let env = Env::new(EnvKind::Lqr2d);
        let mut norm = ObservationNormalizer::new(2);
        norm.observe(&[1.0, 2.0]).unwrap();
        norm.observe(&[0.0, -1.0]).unwrap();
        let before = norm.clone();
        evaluate(&LinearPolicy::zeros(1, 2), &norm, &env, 5, 1).unwrap();
        assert_eq!(norm, before);
    }
}
