//! Seeded splitmix64 generator with Box–Muller normals.
//!
//! Streams are derived from a root seed plus a list of integer labels, so
//! independent tasks (one per direction, per sign, per episode) can each own
//! a generator without sharing state.

use super::matrix::Matrix;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rng {
    state: u64,
    cached_normal: Option<f64>,
}

impl Rng {
    /// `state = mix64(seed)`, then for each label `state = mix64(state ^ mix64(label + γ))`.
    pub fn new(seed: u64, labels: &[u64]) -> Self {
        let state = labels.iter().fold(mix64(seed), |acc, &label| {
            mix64(acc ^ mix64(label.wrapping_add(GOLDEN_GAMMA)))
        });
        Self {
            state,
            cached_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi]` (up to the lattice of 2⁻⁵³ steps).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open0()
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        let u = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        ((u * n as f64) as usize).min(n - 1)
    }

    /// Standard normal via Box–Muller; the second variate of each pair is cached.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform_open0();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// A `rows × cols` matrix of standard normals, filled row-major.
    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| self.gaussian()).collect();
        Matrix::from_vec(rows, cols, data).expect("length matches by construction")
    }
}
