//! Linear policies over normalized observations, plus behavior cloning.

use crate::error::{Error, Result};
use crate::numerics::{dot, AdamState, Matrix, Rng, RunningStats};

/// Floor applied to the running variance before taking its square root.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Deterministic linear map from normalized state (n) to action (p).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    theta: Matrix,
}

impl LinearPolicy {
    pub fn zeros(action_dim: usize, state_dim: usize) -> Self {
        Self {
            theta: Matrix::zeros(action_dim, state_dim),
        }
    }

    pub fn new(theta: Matrix) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::NonFinite("policy theta".into()));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut Matrix {
        &mut self.theta
    }

    pub fn into_theta(self) -> Matrix {
        self.theta
    }

    pub fn action_dim(&self) -> usize {
        self.theta.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.theta.cols()
    }

    /// `θ ± ν·δ` as a new policy.
    pub fn perturb(&self, delta: &Matrix, nu: f64, sign: Sign) -> Result<LinearPolicy> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument(format!("nu must be > 0, got {nu}")));
        }
        if delta.shape() != self.theta.shape() {
            return Err(Error::dims(
                "perturb delta",
                self.theta.rows() * self.theta.cols(),
                delta.rows() * delta.cols(),
            ));
        }
        let mut theta = self.theta.clone();
        theta.add_scaled(delta, sign.as_f64() * nu)?;
        Ok(LinearPolicy { theta })
    }

    pub fn act(&self, normalizer: &ObservationNormalizer, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(Error::dims("act state", self.state_dim(), state.len()));
        }
        if normalizer.dim() != self.state_dim() {
            return Err(Error::dims(
                "act normalizer",
                self.state_dim(),
                normalizer.dim(),
            ));
        }
        let z = normalizer.normalize(state);
        self.theta.matvec(&z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub(crate) fn label(self) -> u64 {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

/// Running state statistics used to whiten policy inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationNormalizer {
    stats: RunningStats,
}

impl ObservationNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            stats: RunningStats::new(dim),
        }
    }

    pub fn from_stats(stats: RunningStats) -> Self {
        Self { stats }
    }

    pub fn stats(&self) -> &RunningStats {
        &self.stats
    }

    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn count(&self) -> u64 {
        self.stats.count()
    }

    pub fn observe(&mut self, state: &[f64]) -> Result<()> {
        self.stats.push(state)
    }

    pub fn observe_all<'a, I>(&mut self, states: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a Vec<f64>>,
    {
        states.into_iter().try_for_each(|s| self.stats.push(s))
    }

    /// Identity until at least two states have been observed.
    pub fn normalize(&self, state: &[f64]) -> Vec<f64> {
        if self.stats.count() < 2 {
            return state.to_vec();
        }
        let var = self.stats.variance();
        state
            .iter()
            .zip(self.stats.mean())
            .zip(&var)
            .map(|((s, m), v)| (s - m) / v.max(VARIANCE_FLOOR).sqrt())
            .collect()
    }

    /// Returns a frozen copy for read-only use during an iteration.
    pub fn snapshot(&self) -> FrozenNormalizer {
        let scale = if self.stats.count() < 2 {
            None
        } else {
            Some(
                self.stats
                    .variance()
                    .iter()
                    .map(|v| 1.0 / v.max(VARIANCE_FLOOR).sqrt())
                    .collect(),
            )
        };
        FrozenNormalizer {
            mean: self.stats.mean().to_vec(),
            inv_std: scale,
        }
    }
}

/// Precomputed normalization used on the rollout hot path.
#[derive(Debug, Clone)]
pub struct FrozenNormalizer {
    mean: Vec<f64>,
    inv_std: Option<Vec<f64>>,
}

impl FrozenNormalizer {
    pub fn normalize_into(&self, state: &[f64], out: &mut [f64]) {
        match &self.inv_std {
            None => out.copy_from_slice(state),
            Some(inv) => {
                for (((o, s), m), k) in out.iter_mut().zip(state).zip(&self.mean).zip(inv) {
                    *o = (s - m) * k;
                }
            }
        }
    }
}

/// Paired expert (state, action) samples for supervised cloning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BcDataset {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl BcDataset {
    pub fn new(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>) -> Result<Self> {
        if states.len() != actions.len() {
            return Err(Error::dims("BcDataset pairs", states.len(), actions.len()));
        }
        Ok(Self { states, actions })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn dims(&self) -> Result<(usize, usize)> {
        let n = self
            .states
            .first()
            .ok_or(Error::Empty("behavior-cloning dataset"))?
            .len();
        let p = self.actions[0].len();
        for (s, a) in self.states.iter().zip(&self.actions) {
            if s.len() != n {
                return Err(Error::dims("BcDataset state", n, s.len()));
            }
            if a.len() != p {
                return Err(Error::dims("BcDataset action", p, a.len()));
            }
        }
        Ok((n, p))
    }

    fn normalized(&self, normalizer: &ObservationNormalizer) -> Result<Vec<Vec<f64>>> {
        let (n, _) = self.dims()?;
        if normalizer.dim() != n {
            return Err(Error::dims("BcDataset normalizer", n, normalizer.dim()));
        }
        Ok(self
            .states
            .iter()
            .map(|s| normalizer.normalize(s))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcFitConfig {
    pub epochs: usize,
    pub lr: f64,
    /// `None` runs deterministic full-batch steps.
    pub batch_size: Option<usize>,
}

impl Default for BcFitConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 0.01,
            batch_size: None,
        }
    }
}

/// Mean squared action error `(1/B) Σ ‖θz − a‖²`.
pub fn bc_loss(
    policy: &LinearPolicy,
    dataset: &BcDataset,
    normalizer: &ObservationNormalizer,
) -> Result<f64> {
    let zs = dataset.normalized(normalizer)?;
    Ok(mse(policy.theta(), &zs, &dataset.actions))
}

fn mse(theta: &Matrix, zs: &[Vec<f64>], actions: &[Vec<f64>]) -> f64 {
    let total: f64 = zs
        .iter()
        .zip(actions)
        .map(|(z, a)| {
            (0..theta.rows())
                .map(|r| (dot(theta.row(r), z) - a[r]).powi(2))
                .sum::<f64>()
        })
        .sum();
    total / zs.len() as f64
}

/// Fits θ by Adam on the mean squared action error; see [`bc_fit_traced`].
pub fn bc_fit(
    dataset: &BcDataset,
    normalizer: &ObservationNormalizer,
    config: &BcFitConfig,
    rng: &mut Rng,
) -> Result<LinearPolicy> {
    bc_fit_traced(dataset, normalizer, config, rng).map(|(p, _)| p)
}

/// Like [`bc_fit`], also returning the full-dataset loss recorded before each epoch
/// and once after the last.
pub fn bc_fit_traced(
    dataset: &BcDataset,
    normalizer: &ObservationNormalizer,
    config: &BcFitConfig,
    rng: &mut Rng,
) -> Result<(LinearPolicy, Vec<f64>)> {
    let (n, p) = dataset.dims()?;
    if !(config.lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lr must be > 0, got {}",
            config.lr
        )));
    }
    let zs = dataset.normalized(normalizer)?;
    let total = zs.len();
    let batch = config.batch_size.unwrap_or(total).clamp(1, total);

    let mut theta = Matrix::zeros(p, n);
    let mut adam = AdamState::new(p * n);
    let mut order: Vec<usize> = (0..total).collect();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    let mut grad = vec![0.0; p * n];

    for _ in 0..config.epochs {
        losses.push(mse(&theta, &zs, &dataset.actions));
        if batch < total {
            // Fisher–Yates
            for i in (1..total).rev() {
                order.swap(i, rng.index(i + 1));
            }
        }
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / chunk.len() as f64;
            for &k in chunk {
                let z = &zs[k];
                for r in 0..p {
                    let err = dot(theta.row(r), z) - dataset.actions[k][r];
                    for (g, zj) in grad[r * n..(r + 1) * n].iter_mut().zip(z) {
                        *g += scale * err * zj;
                    }
                }
            }
            adam.step(theta.as_mut_slice(), &grad, config.lr)?;
        }
    }
    losses.push(mse(&theta, &zs, &dataset.actions));
    Ok((LinearPolicy::new(theta)?, losses))
}

/// Ridge least-squares solution of the cloning objective: `(ZᵀZ + λI) A = ZᵀY`, `θ = Aᵀ`.
pub fn bc_closed_form(
    dataset: &BcDataset,
    normalizer: &ObservationNormalizer,
    ridge: f64,
) -> Result<LinearPolicy> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let (n, p) = dataset.dims()?;
    let zs = dataset.normalized(normalizer)?;
    let mut gram = Matrix::zeros(n, n);
    let mut rhs = Matrix::zeros(n, p);
    for (z, a) in zs.iter().zip(&dataset.actions) {
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] += z[i] * z[j];
            }
            for k in 0..p {
                rhs[(i, k)] += z[i] * a[k];
            }
        }
    }
    for i in 0..n {
        gram[(i, i)] += ridge;
    }
    let solution = gram.solve(&rhs).map_err(|e| match e {
        Error::Singular(msg) if ridge == 0.0 => {
            Error::Singular(format!("{msg}; retry with ridge > 0"))
        }
        other => other,
    })?;
    LinearPolicy::new(solution.transpose())
}
