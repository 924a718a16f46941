// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod cs;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod pgd;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod verify;

pub use autograd::{GradientMap, Tape, Var};
pub use cs::{BlockGrid, SamplingMatrix};
pub use error::{Error, Result};
pub use model::{FsoiNet, ModelConfig, Reconstructor, VariantMode};
pub use tensor::{Element, Precision, Tensor};
