//! Dense tensors, reverse-mode differentiation, Adam, and gradient checking.

mod adam;
pub mod complex;
mod gradcheck;
mod graph;
pub mod layers;
pub mod ops;
mod params;
mod scalar;
mod tensor;

pub use adam::{Adam, AdamConfig, AdamState};
pub use gradcheck::{finite_difference_check, relative_error, GRADIENT_FLOOR, GradCheckReport, ParamCheck};
pub use graph::{GradTable, Graph, Var};
pub use ops::AttentionSpec;
pub use params::{count_parameters, init, Gradients, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
