//! Dense tensors, a reverse-mode tape, the Adam optimizer and gradient checks.

mod graph;
mod gradcheck;
mod optim;
mod params;
mod tensor;

pub use graph::{gelu_scalar, Gradients, Graph, Var, GELU_CUBIC, GELU_SQRT_2_OVER_PI};
pub use gradcheck::{grad_check, grad_check_params, relative_error, GradCheckReport, FD_STEP, REL_ERR_FLOOR};
pub use optim::{adam_step, AdamConfig, OptimizerState};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
