//! Dense real-matrix arithmetic, seeded pseudo-randomness, special
//! functions and the central finite-difference oracle.

mod fd;
mod matrix;
mod rng;
pub mod special;

pub use fd::finite_difference_gradient;
pub use matrix::{gemm, DenseMatrix, Transpose};
pub use rng::{draw_standard_normal, draw_uniform, RngState, UNIFORM_CLAMP};
