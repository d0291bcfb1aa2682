//! Dense tensors, parameters and the reverse-mode tape.

mod fd;
mod graph;
mod param;
mod real;
mod tensor;

pub use fd::{finite_difference_grad, relative_error};
pub(crate) use graph::listwise_forward;
pub use graph::{GradMode, Gradients, Graph, Var};
pub use param::{ParamId, ParamStore, Parameter};
pub use real::Real;
pub use tensor::Tensor;
pub(crate) use tensor::{parse_shape_header, parse_value};
