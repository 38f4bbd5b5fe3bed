//! Dense linear algebra, parameter storage, Adam, gradient checking and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod rng;

pub use adam::{adam_step, OptimizerConfig};
pub use checkpoint::Checkpoint;
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use matrix::DenseMatrix;
pub use params::{Grads, Init, ParamId, ParamStore, ParamTensor, Values};
