use super::{evaluate, Env, EnvKind, LQR_DT};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::policy::{LinearPolicy, ObservationNormalizer};

pub const RICCATI_EVAL_SEED: u64 = 0;
pub const RICCATI_EVAL_EPISODES: usize = 100;
const MAX_ITERATIONS: usize = 100_000;
const TOLERANCE: f64 = 1e-12;

/// Infinite-horizon discrete LQR solution for `lqr2d`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// Fixed point of the Riccati recurrence.
    pub p: Matrix,
    /// Feedback gain with `a = −K s`.
    pub gain: Matrix,
    /// `θ = −K` under the identity normalizer.
    pub policy: LinearPolicy,
    /// Mean return of `policy` over [`RICCATI_EVAL_EPISODES`] episodes seeded with [`RICCATI_EVAL_SEED`].
    pub optimal_return: f64,
    pub iterations: usize,
}

pub(crate) fn lqr2d_matrices() -> (Matrix, Matrix, Matrix, Matrix) {
    let a = Matrix::from_rows(&[vec![1.0, LQR_DT], vec![0.0, 1.0]]).expect("2x2");
    let b = Matrix::from_rows(&[vec![0.0], vec![LQR_DT]]).expect("2x1");
    let q = Matrix::identity(2);
    let r = Matrix::from_rows(&[vec![0.1]]).expect("1x1");
    (a, b, q, r)
}

/// One application of `P ← Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`.
pub fn riccati_step(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let at = a.transpose();
    let bt = b.transpose();
    let pa = p.matmul(a)?;
    let pb = p.matmul(b)?;
    let s = r.add(&bt.matmul(&pb)?)?;
    let btpa = bt.matmul(&pa)?;
    let k = s.solve(&btpa)?;
    q.add(&at.matmul(&pa)?)?.sub(&at.matmul(&pb)?.matmul(&k)?)
}

pub fn riccati_optimal(env: &Env) -> Result<RiccatiSolution> {
    if env.spec().kind != EnvKind::Lqr2d {
        return Err(Error::InvalidArgument(format!(
            "riccati_optimal requires lqr2d, got {}",
            env.spec().name()
        )));
    }
    let (a, b, q, r) = lqr2d_matrices();
    let mut p = q.clone();
    let mut iterations = 0;
    loop {
        let next = riccati_step(&a, &b, &q, &r, &p)?;
        iterations += 1;
        let change = next.max_abs_diff(&p);
        p = next;
        if change <= TOLERANCE || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let bt = b.transpose();
    let gain = r
        .add(&bt.matmul(&p.matmul(&b)?)?)?
        .solve(&bt.matmul(&p.matmul(&a)?)?)?;
    let policy = LinearPolicy::new(gain.scale(-1.0))?;
    let summary = evaluate(
        &policy,
        &ObservationNormalizer::new(2),
        &Env::new(EnvKind::Lqr2d),
        RICCATI_EVAL_EPISODES,
        RICCATI_EVAL_SEED,
    )?;
    Ok(RiccatiSolution {
        p,
        gain,
        policy,
        optimal_return: summary.mean,
        iterations,
    })
}
