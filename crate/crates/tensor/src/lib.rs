//! A small deterministic tensor engine with reverse-mode differentiation.
//!
//! Everything runs on the CPU in plain row-major buffers. Ops build a fresh
//! computation graph per forward pass; `backward` walks it once from a
//! scalar loss. `f32` is the training precision, `f64` drives the finite
//! difference gradient checker.

pub mod checkpoint;
mod conv;
mod error;
mod gradcheck;
mod loss;
mod matmul;
pub mod nn;
mod norm;
mod ops;
mod optim;
mod scalar;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use norm::{BatchNorm2d, LayerNorm};
pub use optim::{lr_schedule, Adam};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Mean squared error between a prediction and a constant target.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    let diff = pred.sub(target)?;
    Ok(diff.mul(&diff)?.mean())
}
