//! Two-hidden-layer tanh discriminator with a sigmoid head, trained with the
//! least-squares GAN objective (expert target 1, policy target 0).
//!
//! Its output `D(s, a)` doubles as the imitation reward `−log(1 − D)`.

use crate::demo_io::TrajectorySet;
use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::{dot, AdamState, Matrix, Rng};

pub const HIDDEN_UNITS: usize = 100;
/// Upper clamp on `D` inside the reward, bounding per-step reward by `−ln(1e-6)`.
pub const REWARD_D_CEILING: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDiscriminator {
    state_dim: usize,
    action_dim: usize,
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: f64,
}

/// Reusable activations for allocation-free forward passes.
#[derive(Debug, Clone)]
pub struct ForwardScratch {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// Target `b = 1`.
    Expert,
    /// Target `a = 0`.
    Policy,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::Expert => 1.0,
            Label::Policy => 0.0,
        }
    }
}

/// Concatenated `[s; a]` inputs sharing one label.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscBatch {
    pub inputs: Vec<Vec<f64>>,
    pub label: Label,
}

impl DiscBatch {
    pub fn new(inputs: Vec<Vec<f64>>, label: Label) -> Self {
        Self { inputs, label }
    }

    pub fn from_pairs<'a, I>(pairs: I, label: Label) -> Self
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
    {
        let inputs = pairs.into_iter().map(|(s, a)| concat(s, a)).collect();
        Self { inputs, label }
    }
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    x
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn glorot(rng: &mut Rng, fan_out: usize, fan_in: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| rng.uniform(-limit, limit))
        .collect();
    Matrix::from_vec(fan_out, fan_in, data).expect("shape by construction")
}

impl MlpDiscriminator {
    pub fn new(state_dim: usize, action_dim: usize, rng: &mut Rng) -> Result<Self> {
        Self::with_hidden(state_dim, action_dim, HIDDEN_UNITS, rng)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn with_hidden(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(
                "discriminator dimensions must be >= 1".into(),
            ));
        }
        let input = state_dim + action_dim;
        let w1 = glorot(rng, hidden, input);
        let w2 = glorot(rng, hidden, hidden);
        let w3 = glorot(rng, 1, hidden).into_vec();
        Ok(Self {
            state_dim,
            action_dim,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; hidden],
            w3,
            b3: 0.0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn layers(&self) -> DiscLayers<'_> {
        DiscLayers {
            w1: &self.w1,
            b1: &self.b1,
            w2: &self.w2,
            b2: &self.b2,
            w3: &self.w3,
            b3: self.b3,
        }
    }

    /// Reassembles a discriminator from explicit layer tensors, validating shapes.
    pub fn from_layers(
        state_dim: usize,
        action_dim: usize,
        w1: Matrix,
        b1: Vec<f64>,
        w2: Matrix,
        b2: Vec<f64>,
        w3: Vec<f64>,
        b3: f64,
    ) -> Result<Self> {
        let h = b1.len();
        let input = state_dim + action_dim;
        if state_dim == 0 || action_dim == 0 || h == 0 {
            return Err(Error::Validation("discriminator dims must be >= 1".into()));
        }
        if w1.shape() != (h, input) {
            return Err(Error::dims(
                "discriminator w1",
                h * input,
                w1.rows() * w1.cols(),
            ));
        }
        if w2.shape() != (h, h) || b2.len() != h || w3.len() != h {
            return Err(Error::Validation(format!(
                "discriminator layer shapes inconsistent with hidden width {h}"
            )));
        }
        let d = Self {
            state_dim,
            action_dim,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        };
        if d.params().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("discriminator parameters".into()));
        }
        Ok(d)
    }

    pub fn num_params(&self) -> usize {
        let h = self.hidden();
        h * self.input_dim() + h + h * h + h + h + 1
    }

    /// Flat parameters in the order `w1, b1, w2, b2, w3, b3`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        p.extend_from_slice(self.w1.as_slice());
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(self.w2.as_slice());
        p.extend_from_slice(&self.b2);
        p.extend_from_slice(&self.w3);
        p.push(self.b3);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::dims(
                "discriminator params",
                self.num_params(),
                params.len(),
            ));
        }
        let mut rest = params;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head
        };
        let h = self.hidden();
        let d = self.input_dim();
        self.w1.as_mut_slice().copy_from_slice(take(h * d));
        self.b1.copy_from_slice(take(h));
        self.w2.as_mut_slice().copy_from_slice(take(h * h));
        self.b2.copy_from_slice(take(h));
        self.w3.copy_from_slice(take(h));
        self.b3 = take(1)[0];
        Ok(())
    }

    pub fn scratch(&self) -> ForwardScratch {
        ForwardScratch {
            input: vec![0.0; self.input_dim()],
            h1: vec![0.0; self.hidden()],
            h2: vec![0.0; self.hidden()],
        }
    }

    /// `D(s, a) = σ(W3 · tanh(W2 · tanh(W1 [s; a] + b1) + b2) + b3)`.
    pub fn forward(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.check_pair(state, action)?;
        Ok(self.forward_with(state, action, &mut self.scratch()))
    }

    pub(crate) fn check_pair(&self, state: &[f64], action: &[f64]) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::dims(
                "discriminator state",
                self.state_dim,
                state.len(),
            ));
        }
        if action.len() != self.action_dim {
            return Err(Error::dims(
                "discriminator action",
                self.action_dim,
                action.len(),
            ));
        }
        Ok(())
    }

    /// Unchecked forward pass reusing `scratch`.
    pub fn forward_with(&self, state: &[f64], action: &[f64], scratch: &mut ForwardScratch) -> f64 {
        scratch.input[..self.state_dim].copy_from_slice(state);
        scratch.input[self.state_dim..].copy_from_slice(action);
        sigmoid(self.logit(scratch))
    }

    fn logit(&self, scratch: &mut ForwardScratch) -> f64 {
        let ForwardScratch { input, h1, h2 } = scratch;
        self.w1.matvec_into(input, h1);
        for (h, b) in h1.iter_mut().zip(&self.b1) {
            *h = tanh(*h + b);
        }
        self.w2.matvec_into(h1, h2);
        for (h, b) in h2.iter_mut().zip(&self.b2) {
            *h = tanh(*h + b);
        }
        dot(&self.w3, h2) + self.b3
    }

    fn forward_input(&self, x: &[f64], scratch: &mut ForwardScratch) -> f64 {
        scratch.input.copy_from_slice(x);
        sigmoid(self.logit(scratch))
    }

    /// Imitation reward `−log(1 − min(D, 1 − 1e-6))`.
    pub fn reward(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(reward_from_d(self.forward(state, action)?))
    }

    fn check_batch(&self, batch: &DiscBatch, label: Label, what: &'static str) -> Result<()> {
        if batch.inputs.is_empty() {
            return Err(Error::Empty(what));
        }
        if batch.label != label {
            return Err(Error::InvalidArgument(format!(
                "{what} has label {:?}, expected {label:?}",
                batch.label
            )));
        }
        for x in &batch.inputs {
            if x.len() != self.input_dim() {
                return Err(Error::dims(what, self.input_dim(), x.len()));
            }
        }
        Ok(())
    }

    /// `½·mean_expert[(D − 1)²] + ½·mean_sampled[D²]`.
    pub fn lsgan_loss(&self, expert: &DiscBatch, sampled: &DiscBatch) -> Result<f64> {
        self.check_batch(expert, Label::Expert, "expert batch")?;
        self.check_batch(sampled, Label::Policy, "sampled batch")?;
        let mut scratch = self.scratch();
        let mut half_mse = |batch: &DiscBatch| {
            let t = batch.label.target();
            let sum: f64 = batch
                .inputs
                .iter()
                .map(|x| (self.forward_input(x, &mut scratch) - t).powi(2))
                .sum();
            0.5 * sum / batch.inputs.len() as f64
        };
        Ok(half_mse(expert) + half_mse(sampled))
    }

    /// Exact gradient of [`lsgan_loss`](Self::lsgan_loss), laid out like [`params`](Self::params).
    pub fn lsgan_grad(&self, expert: &DiscBatch, sampled: &DiscBatch) -> Result<Vec<f64>> {
        self.lsgan_loss_and_grad(expert, sampled).map(|(_, g)| g)
    }

    pub fn lsgan_loss_and_grad(
        &self,
        expert: &DiscBatch,
        sampled: &DiscBatch,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_batch(expert, Label::Expert, "expert batch")?;
        self.check_batch(sampled, Label::Policy, "sampled batch")?;
        let h = self.hidden();
        let d = self.input_dim();
        let mut grad = Grad::zeros(h, d);
        let mut scratch = self.scratch();
        let mut dz1 = vec![0.0; h];
        let mut dz2 = vec![0.0; h];
        let mut loss = 0.0;
        for batch in [expert, sampled] {
            let target = batch.label.target();
            let weight = 1.0 / batch.inputs.len() as f64;
            for x in &batch.inputs {
                let out = self.forward_input(x, &mut scratch);
                let err = out - target;
                loss += 0.5 * weight * err * err;
                // dL/dlogit through the sigmoid.
                let dlogit = weight * err * out * (1.0 - out);
                let ForwardScratch { input, h1, h2 } = &scratch;
                grad.b3 += dlogit;
                for j in 0..h {
                    grad.w3[j] += dlogit * h2[j];
                    dz2[j] = dlogit * self.w3[j] * (1.0 - h2[j] * h2[j]);
                }
                dz1.iter_mut().for_each(|v| *v = 0.0);
                for (j, &g) in dz2.iter().enumerate() {
                    grad.b2[j] += g;
                    if g == 0.0 {
                        continue;
                    }
                    let row = self.w2.row(j);
                    let grow = &mut grad.w2[j * h..(j + 1) * h];
                    for k in 0..h {
                        grow[k] += g * h1[k];
                        dz1[k] += g * row[k];
                    }
                }
                for k in 0..h {
                    let g = dz1[k] * (1.0 - h1[k] * h1[k]);
                    grad.b1[k] += g;
                    let grow = &mut grad.w1[k * d..(k + 1) * d];
                    for (gw, xi) in grow.iter_mut().zip(input.iter()) {
                        *gw += g * xi;
                    }
                }
            }
        }
        Ok((loss, grad.flatten()))
    }
}

struct Grad {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: f64,
}

impl Grad {
    fn zeros(h: usize, d: usize) -> Self {
        Self {
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w2: vec![0.0; h * h],
            b2: vec![0.0; h],
            w3: vec![0.0; h],
            b3: 0.0,
        }
    }

    fn flatten(self) -> Vec<f64> {
        let mut out = self.w1;
        out.extend(self.b1);
        out.extend(self.w2);
        out.extend(self.b2);
        out.extend(self.w3);
        out.push(self.b3);
        out
    }
}

/// Borrowed view of the discriminator tensors, for persistence.
#[derive(Debug, Clone, Copy)]
pub struct DiscLayers<'a> {
    pub w1: &'a Matrix,
    pub b1: &'a [f64],
    pub w2: &'a Matrix,
    pub b2: &'a [f64],
    pub w3: &'a [f64],
    pub b3: f64,
}

/// `tanh` through one `expm1`; faster than the libm call and within a few ulp.
#[inline]
fn tanh(x: f64) -> f64 {
    let m = (-2.0 * x.abs()).exp_m1();
    (-m / (2.0 + m)).copysign(x)
}

pub fn reward_from_d(d: f64) -> f64 {
    -(1.0 - d.min(REWARD_D_CEILING)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscTrainConfig {
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for DiscTrainConfig {
    fn default() -> Self {
        Self {
            iters: 3,
            batch_size: 1000,
            lr: 0.00025,
        }
    }
}

fn pair_pool<'a, I>(trajectories: I) -> Vec<(&'a [f64], &'a [f64])>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    trajectories
        .into_iter()
        .flat_map(|t| t.states.iter().zip(&t.actions))
        .map(|(s, a)| (s.as_slice(), a.as_slice()))
        .collect()
}

fn sample_batch(pool: &[(&[f64], &[f64])], size: usize, label: Label, rng: &mut Rng) -> DiscBatch {
    DiscBatch::from_pairs((0..size).map(|_| pool[rng.index(pool.len())]), label)
}

/// Runs `config.iters` Adam steps on freshly sampled (with replacement) expert and
/// policy batches. Returns the mean pre-step loss, or the current loss when `iters == 0`.
pub fn disc_train(
    disc: &mut MlpDiscriminator,
    adam: &mut AdamState,
    expert: &TrajectorySet,
    sampled: &[Trajectory],
    config: &DiscTrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let expert_pool = pair_pool(&expert.trajectories);
    let sampled_pool = pair_pool(sampled);
    if expert_pool.is_empty() {
        return Err(Error::Empty("expert demonstrations"));
    }
    if sampled_pool.is_empty() {
        return Err(Error::Empty("sampled trajectories"));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "discriminator batch size must be >= 1".into(),
        ));
    }
    if config.iters == 0 {
        let e = sample_batch(&expert_pool, config.batch_size, Label::Expert, rng);
        let s = sample_batch(&sampled_pool, config.batch_size, Label::Policy, rng);
        return disc.lsgan_loss(&e, &s);
    }
    let mut params = disc.params();
    let mut total = 0.0;
    for _ in 0..config.iters {
        let e = sample_batch(&expert_pool, config.batch_size, Label::Expert, rng);
        let s = sample_batch(&sampled_pool, config.batch_size, Label::Policy, rng);
        let (loss, grad) = disc.lsgan_loss_and_grad(&e, &s)?;
        total += loss;
        adam.step(&mut params, &grad, config.lr)?;
        disc.set_params(&params)?;
    }
    Ok(total / config.iters as f64)
}
