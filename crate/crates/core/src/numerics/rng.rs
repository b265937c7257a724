use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::DenseMatrix;

/// Uniform draws are clamped into `[UNIFORM_CLAMP, 1 - UNIFORM_CLAMP]` so
/// inverse-CDF transforms and logarithms stay finite.
pub const UNIFORM_CLAMP: f64 = 1e-7;

/// Caller-owned, explicitly seeded generator (ChaCha8, counter based).
///
/// There is no global generator anywhere in the crate; every stochastic
/// operation takes one of these.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `(seed, stream)`; does not advance `self`.
    pub fn derive(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Self {
            seed: self.seed,
            inner,
        }
    }

    /// Clamped uniform draw.
    pub fn uniform(&mut self) -> f64 {
        let u: f64 = self.inner.random();
        u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// Matrix of i.i.d. clamped uniforms.
pub fn draw_uniform(rng: &mut RngState, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform())
}

/// Matrix of i.i.d. standard normals.
pub fn draw_standard_normal(rng: &mut RngState, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}
