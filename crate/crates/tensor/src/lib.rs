//! Dense tensors and a tape-based reverse-mode differentiation engine with
//! the primitives needed by spatiotemporal video classifiers.

pub mod error;
pub mod float;
pub mod gradcheck;
pub mod kernels;
pub mod param;
pub mod tape;
pub mod tensor;
pub mod vten;

pub use error::{Result, TensorError};
pub use float::{DType, Element, Float};
pub use gradcheck::{check_params, gradient_check, GradCheckConfig, GradCheckReport};
pub use param::{Init, ParamBuilder, ParamId, ParamStore, Parameter};
pub use tape::{BinaryKind, Gradients, Tape, UnaryKind, Var};
pub use tensor::Tensor;
