//! Small deterministic continuous-control tasks and the rollout engine.
//!
//! | name          | n | p | horizon | action clip |
//! |---------------|---|---|---------|-------------|
//! | `lqr2d`       | 2 | 1 | 100     | 10          |
//! | `pointmass2d` | 4 | 2 | 200     | 1           |
//! | `pendulum`    | 3 | 1 | 200     | 2           |
//!
//! Every reward is a negated cost, and episodes always run to the horizon.

mod riccati;
mod rollout;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

pub use riccati::{riccati_optimal, RiccatiSolution, RICCATI_EVAL_EPISODES, RICCATI_EVAL_SEED};
pub use rollout::{evaluate, rollout, EvalSummary, RewardSource, RolloutOutcome, EVAL_STREAM};

use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Lqr2d,
    PointMass2d,
    Pendulum,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Lqr2d, EnvKind::PointMass2d, EnvKind::Pendulum];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Lqr2d => "lqr2d",
            EnvKind::PointMass2d => "pointmass2d",
            EnvKind::Pendulum => "pendulum",
        }
    }

    pub fn spec(self) -> EnvSpec {
        let (state_dim, action_dim, horizon, action_clip) = match self {
            EnvKind::Lqr2d => (2, 1, 100, 10.0),
            EnvKind::PointMass2d => (4, 2, 200, 1.0),
            EnvKind::Pendulum => (3, 1, 200, 2.0),
        };
        EnvSpec {
            kind: self,
            state_dim,
            action_dim,
            horizon,
            action_clip,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownEnv {
                name: s.to_string(),
                valid: EnvKind::ALL.map(EnvKind::name).join(", "),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub action_clip: f64,
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// One episode's worth of (state, action, env reward), aligned by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub env_rewards: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn env_return(&self) -> f64 {
        self.env_rewards.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    // lqr2d: (x, v); pointmass2d: (x, y, vx, vy); pendulum: (φ, φ̇).
    internal: Vec<f64>,
    steps: usize,
}

pub fn make_env(name: &str) -> Result<Env> {
    Ok(Env::new(name.parse()?))
}

const PENDULUM_G: f64 = 10.0;
const PENDULUM_L: f64 = 1.0;
const PENDULUM_M: f64 = 1.0;
const PENDULUM_DT: f64 = 0.05;
const PENDULUM_MAX_SPEED: f64 = 8.0;
const POINTMASS_DT: f64 = 0.1;
const LQR_DT: f64 = 0.1;

/// Wraps an angle to `[−π, π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    (phi + PI).rem_euclid(2.0 * PI) - PI
}

impl Env {
    pub fn new(kind: EnvKind) -> Self {
        let spec = kind.spec();
        let internal = match kind {
            EnvKind::Lqr2d | EnvKind::Pendulum => vec![0.0; 2],
            EnvKind::PointMass2d => vec![0.0; 4],
        };
        Self {
            spec,
            internal,
            steps: 0,
        }
    }

    /// Shortens episodes to at most `max_steps` (never lengthens them).
    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.spec.horizon = self.spec.horizon.min(max_steps.max(1));
        self
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.spec.horizon
    }

    pub fn observation(&self) -> Vec<f64> {
        match self.spec.kind {
            EnvKind::Lqr2d | EnvKind::PointMass2d => self.internal.clone(),
            EnvKind::Pendulum => {
                let (phi, omega) = (self.internal[0], self.internal[1]);
                vec![phi.cos(), phi.sin(), omega]
            }
        }
    }

    /// Sets the internal state directly (lqr2d/pointmass2d: the observation;
    /// pendulum: `(φ, φ̇)`) and rewinds the step counter.
    pub fn set_internal_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.internal.len() {
            return Err(Error::dims(
                "Env::set_internal_state",
                self.internal.len(),
                state.len(),
            ));
        }
        self.internal.copy_from_slice(state);
        self.steps = 0;
        Ok(())
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.steps = 0;
        match self.spec.kind {
            EnvKind::Lqr2d => {
                self.internal[0] = rng.uniform(-1.0, 1.0);
                self.internal[1] = rng.uniform(-1.0, 1.0);
            }
            EnvKind::PointMass2d => {
                self.internal[0] = rng.uniform(-1.0, 1.0);
                self.internal[1] = rng.uniform(-1.0, 1.0);
                self.internal[2] = 0.0;
                self.internal[3] = 0.0;
            }
            EnvKind::Pendulum => {
                self.internal[0] = rng.uniform(-PI, PI);
                self.internal[1] = rng.uniform(-1.0, 1.0);
            }
        }
        self.observation()
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        let c = self.spec.action_clip;
        action.iter().map(|a| a.clamp(-c, c)).collect()
    }

    /// Advances one step. The action is clipped to `±action_clip` first; the reward is
    /// the negated cost of the pre-step state and clipped action.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        if action.len() != self.spec.action_dim {
            return Err(Error::dims(
                "Env::step action",
                self.spec.action_dim,
                action.len(),
            ));
        }
        let a = self.clip_action(action);
        let s = &mut self.internal;
        let reward = match self.spec.kind {
            EnvKind::Lqr2d => {
                let cost = s[0] * s[0] + s[1] * s[1] + 0.1 * a[0] * a[0];
                let x = s[0] + LQR_DT * s[1];
                let v = s[1] + LQR_DT * a[0];
                s[0] = x;
                s[1] = v;
                -cost
            }
            EnvKind::PointMass2d => {
                let cost = s[0] * s[0] + s[1] * s[1] + 0.01 * (a[0] * a[0] + a[1] * a[1]);
                for axis in 0..2 {
                    let pos = s[axis] + POINTMASS_DT * s[axis + 2];
                    let vel = s[axis + 2] + POINTMASS_DT * a[axis];
                    s[axis] = pos;
                    s[axis + 2] = vel;
                }
                -cost
            }
            EnvKind::Pendulum => {
                let (phi, omega, u) = (s[0], s[1], a[0]);
                let cost = wrap_angle(phi).powi(2) + 0.1 * omega * omega + 0.001 * u * u;
                let accel = PENDULUM_G / PENDULUM_L * phi.sin()
                    + u / (PENDULUM_M * PENDULUM_L * PENDULUM_L);
                let omega =
                    (omega + accel * PENDULUM_DT).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
                s[0] = phi + omega * PENDULUM_DT;
                s[1] = omega;
                -cost
            }
        };
        self.steps += 1;
        Ok(StepOutcome {
            state: self.observation(),
            reward,
            done: self.is_done(),
        })
    }
}
