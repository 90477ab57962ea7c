//! A small define-by-run autodiff tape over `f64` tensors.
//!
//! Every operation appends a node holding its value and a backward closure;
//! [`Graph::backward`] sweeps the tape in reverse. Parameters live in a
//! [`ParamStore`] and are bound to a graph by name, so one parameter used by
//! several branches is a single leaf.

pub mod gradcheck;
mod graph;
pub mod ops;
mod optim;
mod params;
mod tensor;

pub use graph::{BackwardFn, Gradients, Graph, Mode, Var};
pub use ops::conv::{conv_out_size, Conv2dSpec, Padding};
pub use ops::elementwise::sigmoid;
pub use ops::norm::init_batch_norm;
pub use ops::pool::resize_bilinear_tensor;
pub use optim::Adam;
pub use params::{group_of, he_uniform, ParamStore};
pub use tensor::Tensor;
