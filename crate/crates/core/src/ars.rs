//! Augmented random search: antithetic direction sampling and the
//! reward-std-scaled parameter step.

use std::sync::Arc;

use rayon::prelude::*;

use crate::envs::{rollout, Env, RewardSource, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::policy::{LinearPolicy, ObservationNormalizer, Sign};

pub const DIRECTION_STREAM: u64 = 0xD1;
pub const ROLLOUT_STREAM: u64 = 0x20;
/// Below this reward spread the update is skipped.
pub const MIN_SIGMA_R: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ArsConfig {
    /// Step size α.
    pub alpha: f64,
    /// Exploration noise scale ν.
    pub nu: f64,
    /// Directions per iteration N.
    pub n_directions: usize,
}

impl Default for ArsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            nu: 0.03,
            n_directions: 320,
        }
    }
}

impl ArsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.nu > 0.0) || self.n_directions == 0 {
            return Err(Error::InvalidArgument(format!(
                "ARS config needs alpha > 0, nu > 0, N >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Returns of the antithetic pair `θ ± νδ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult {
    pub delta: Matrix,
    pub r_plus: f64,
    pub r_minus: f64,
}

/// Population standard deviation of all `2N` returns.
pub fn reward_std(results: &[DirectionResult]) -> f64 {
    let n = 2.0 * results.len() as f64;
    let mean = results.iter().map(|r| r.r_plus + r.r_minus).sum::<f64>() / n;
    let var = results
        .iter()
        .map(|r| (r.r_plus - mean).powi(2) + (r.r_minus - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt()
}

fn weighted_direction_sum(theta: &Matrix, results: &[DirectionResult]) -> Result<Matrix> {
    if results.is_empty() {
        return Err(Error::Empty("direction results"));
    }
    let mut step = Matrix::zeros(theta.rows(), theta.cols());
    for r in results {
        if r.delta.shape() != theta.shape() {
            return Err(Error::dims(
                "ars_update delta",
                theta.rows() * theta.cols(),
                r.delta.rows() * r.delta.cols(),
            ));
        }
        step.add_scaled(&r.delta, r.r_plus - r.r_minus)?;
    }
    Ok(step)
}

/// `θ + α/(N·σ_R) · Σ (r⁺ᵢ − r⁻ᵢ) δᵢ`; returns `θ` unchanged when `σ_R < 1e-12`.
pub fn ars_update(theta: &Matrix, results: &[DirectionResult], alpha: f64) -> Result<Matrix> {
    let step = weighted_direction_sum(theta, results)?;
    let sigma = reward_std(results);
    if sigma < MIN_SIGMA_R {
        return Ok(theta.clone());
    }
    let mut next = theta.clone();
    next.add_scaled(&step, alpha / (results.len() as f64 * sigma))?;
    Ok(next)
}

/// The unscaled basic-random-search step `θ + α/N · Σ (r⁺ᵢ − r⁻ᵢ) δᵢ` (σ_R fixed to 1).
/// Kept for comparison tests only.
pub fn brs_update(theta: &Matrix, results: &[DirectionResult], alpha: f64) -> Result<Matrix> {
    let step = weighted_direction_sum(theta, results)?;
    let mut next = theta.clone();
    next.add_scaled(&step, alpha / results.len() as f64)?;
    Ok(next)
}

/// `N` standard-normal `p × n` directions; direction `i` of `iteration` comes from
/// stream `(seed, [DIRECTION_STREAM, iteration, i])`.
pub fn sample_directions(
    seed: u64,
    iteration: u64,
    n_directions: usize,
    action_dim: usize,
    state_dim: usize,
) -> Result<Vec<Matrix>> {
    if n_directions == 0 || action_dim == 0 || state_dim == 0 {
        return Err(Error::InvalidArgument(
            "directions need N, p, n >= 1".into(),
        ));
    }
    Ok((0..n_directions as u64)
        .map(|i| {
            Rng::new(seed, &[DIRECTION_STREAM, iteration, i]).gaussian_matrix(action_dim, state_dim)
        })
        .collect())
}

/// Where rollouts run. Results never depend on the choice.
#[derive(Clone, Default)]
pub enum Executor {
    #[default]
    Serial,
    Pool(Arc<rayon::ThreadPool>),
}

impl Executor {
    /// `0` means serial.
    pub fn with_threads(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Ok(Executor::Serial);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(|p| Executor::Pool(Arc::new(p)))
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }

    fn map<T, R, F>(&self, tasks: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Executor::Serial => tasks.iter().map(f).collect(),
            Executor::Pool(pool) => pool.install(|| tasks.par_iter().map(f).collect()),
        }
    }
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Executor::Serial => f.write_str("Serial"),
            Executor::Pool(p) => write!(f, "Pool({})", p.current_num_threads()),
        }
    }
}

/// Outcome of the `2N` perturbed rollouts of one iteration.
#[derive(Debug, Clone)]
pub struct DirectionEvaluation {
    pub results: Vec<DirectionResult>,
    /// `2N` trajectories ordered `(δ₀,+), (δ₀,−), (δ₁,+), …`.
    pub trajectories: Vec<Trajectory>,
}

impl DirectionEvaluation {
    pub fn visited_states(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.trajectories.iter().flat_map(|t| t.states.iter())
    }

    pub fn visited_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Mean of all `2N` returns under the rollout reward source.
    pub fn mean_return(&self) -> f64 {
        let n = 2.0 * self.results.len() as f64;
        self.results
            .iter()
            .map(|r| r.r_plus + r.r_minus)
            .sum::<f64>()
            / n
    }
}

/// Everything one iteration's rollouts read; shared immutably by all workers.
#[derive(Debug, Clone, Copy)]
pub struct RolloutContext<'a> {
    pub env: &'a Env,
    pub normalizer: &'a ObservationNormalizer,
    pub source: RewardSource<'a>,
    pub seed: u64,
    pub iteration: u64,
}

/// Rolls out `θ + νδᵢ` and `θ − νδᵢ` once each. The `(i, sign)` rollout draws its
/// initial state from stream `(seed, [ROLLOUT_STREAM, iteration, i, sign])`.
pub fn evaluate_directions(
    policy: &LinearPolicy,
    deltas: Vec<Matrix>,
    nu: f64,
    ctx: RolloutContext<'_>,
    executor: &Executor,
) -> Result<DirectionEvaluation> {
    let tasks: Vec<(usize, Sign)> = (0..deltas.len())
        .flat_map(|i| [(i, Sign::Plus), (i, Sign::Minus)])
        .collect();
    let outcomes = executor.map(&tasks, |&(i, sign)| {
        let perturbed = policy.perturb(&deltas[i], nu, sign)?;
        let mut env = ctx.env.clone();
        let mut rng = Rng::new(
            ctx.seed,
            &[ROLLOUT_STREAM, ctx.iteration, i as u64, sign.label()],
        );
        rollout(
            &mut env,
            &perturbed,
            ctx.normalizer,
            ctx.source,
            &mut rng,
            true,
        )
    });
    let mut results = Vec::with_capacity(deltas.len());
    let mut trajectories = Vec::with_capacity(tasks.len());
    let mut outcomes = outcomes.into_iter();
    for delta in deltas {
        let plus = outcomes.next().expect("two outcomes per direction")?;
        let minus = outcomes.next().expect("two outcomes per direction")?;
        results.push(DirectionResult {
            delta,
            r_plus: plus.disc_return,
            r_minus: minus.disc_return,
        });
        trajectories.push(plus.trajectory);
        trajectories.push(minus.trajectory);
    }
    Ok(DirectionEvaluation {
        results,
        trajectories,
    })
}
