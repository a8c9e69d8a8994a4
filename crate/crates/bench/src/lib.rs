//! Fixtures shared by the benchmarks.

use ailsrs_core::demo_io::record;
use ailsrs_core::envs::riccati_optimal;
use ailsrs_core::{
    DiscBatch, Env, EnvKind, Label, MlpDiscriminator, ObservationNormalizer, Rng, TrajectorySet,
};

/// A freshly initialized 2-state, 1-action discriminator.
pub fn lqr_discriminator(seed: u64) -> MlpDiscriminator {
    MlpDiscriminator::new(2, 1, &mut Rng::new(seed, &[])).expect("valid dims")
}

/// Expert and policy batches of `size` random 3-wide inputs each.
pub fn batches(size: usize, seed: u64) -> (DiscBatch, DiscBatch) {
    let mut rng = Rng::new(seed, &[]);
    let mut draw = |label| {
        DiscBatch::new(
            (0..size)
                .map(|_| (0..3).map(|_| rng.gaussian()).collect())
                .collect(),
            label,
        )
    };
    (draw(Label::Expert), draw(Label::Policy))
}

/// Riccati-expert demonstrations on `lqr2d`.
pub fn lqr_demos(episodes: usize) -> TrajectorySet {
    let env = Env::new(EnvKind::Lqr2d);
    let sol = riccati_optimal(&env).expect("riccati converges");
    record(
        &sol.policy,
        &ObservationNormalizer::new(2),
        &env,
        episodes,
        0,
    )
    .expect("record")
}
