//! Dense tensor engine: tape-based reverse-mode gradients, Adam, parameter
//! initialization and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod tape;

use ndarray::Array2;
use rand::Rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use tape::{Gradients, Tape, Var};

/// Uniform in `[−1/√fan_in, 1/√fan_in]` with `fan_in = rows`.
pub fn uniform_init<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (rows.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}
