//! A miniature Transformer encoder with parameter-efficient tuning modules,
//! bi-/cross-encoder ranking heads and a training harness.

pub mod data;
pub mod error;
pub mod iaa;
pub mod numerics;
pub mod pet;
pub mod ranking;
pub mod training;
pub mod transformer;

pub use error::{Error, Result};
pub use numerics::{GradMode, Gradients, Graph, ParamId, ParamStore, Parameter, Real, Tensor, Var};
pub use transformer::{Encoder, EncoderConfig, Tower};
