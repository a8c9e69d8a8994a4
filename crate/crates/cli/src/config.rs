//! Flat `key = value` training configuration.

use std::path::Path;

use ailsrs_core::{EarlyStop, TrainerConfig};
use serde::Deserialize;

use crate::CliError;

/// Overrides applied on top of [`TrainerConfig::default`]. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub n_directions: Option<usize>,
    pub alpha: Option<f64>,
    pub nu: Option<f64>,
    pub max_iterations: Option<usize>,
    pub rollout_max_steps: Option<usize>,
    pub disc_lr: Option<f64>,
    pub disc_iters: Option<usize>,
    pub disc_batch: Option<usize>,
    pub eval_every: Option<usize>,
    pub eval_episodes: Option<usize>,
    pub eval_seed: Option<u64>,
    pub seed: Option<u64>,
    pub target_frac: Option<f64>,
    pub record_wall_time: Option<bool>,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Keys set in `other` replace the ones here.
    pub fn merged(mut self, other: &CliConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            n_directions,
            alpha,
            nu,
            max_iterations,
            rollout_max_steps,
            disc_lr,
            disc_iters,
            disc_batch,
            eval_every,
            eval_episodes,
            eval_seed,
            seed,
            target_frac,
            record_wall_time
        );
        self
    }

    /// Builds the trainer configuration. `reference_return` anchors `target_frac`.
    pub fn to_trainer_config(&self, reference_return: f64) -> TrainerConfig {
        let mut cfg = TrainerConfig::default();
        if let Some(v) = self.n_directions {
            cfg.ars.n_directions = v;
        }
        if let Some(v) = self.alpha {
            cfg.ars.alpha = v;
        }
        if let Some(v) = self.nu {
            cfg.ars.nu = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.rollout_max_steps {
            cfg.rollout_max_steps = v;
        }
        if let Some(v) = self.disc_lr {
            cfg.disc_lr = v;
        }
        if let Some(v) = self.disc_iters {
            cfg.disc_iters = v;
        }
        if self.disc_batch.is_some() {
            cfg.disc_batch = self.disc_batch;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = self.eval_episodes {
            cfg.eval_episodes = v;
        }
        if let Some(v) = self.eval_seed {
            cfg.eval_seed = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.record_wall_time {
            cfg.record_wall_time = v;
        }
        cfg.early_stop = self.target_frac.map(|fraction| EarlyStop {
            reference_return,
            fraction,
        });
        cfg
    }
}
