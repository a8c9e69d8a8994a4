//! Adversarial imitation learning with augmented random search.
//!
//! A least-squares-GAN discriminator scores (state, action) pairs, its output
//! becomes the reward `−log(1 − D)`, and augmented random search updates a
//! linear policy on that reward alone. The crate also ships the pieces needed
//! to exercise the method end to end: small continuous-control environments,
//! an exact LQR expert, demonstration recording, behavior cloning, and
//! persistence formats.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod ars;
pub mod demo_io;
pub mod discriminator;
pub mod envs;
pub mod error;
pub mod numerics;
pub mod policy;
pub mod trainer;

pub use ars::{ars_update, ArsConfig, DirectionResult, Executor};
pub use demo_io::{PolicyFile, TrajectorySet};
pub use discriminator::{DiscBatch, Label, MlpDiscriminator};
pub use envs::{make_env, Env, EnvKind, EnvSpec, RewardSource, Trajectory};
pub use error::{Error, Result};
pub use numerics::{Matrix, Rng, RunningStats};
pub use policy::{BcDataset, BcFitConfig, LinearPolicy, ObservationNormalizer, Sign};
pub use trainer::{return_ratio, train_ailsrs, train_expert, EarlyStop, MetricsRow, TrainerConfig};
