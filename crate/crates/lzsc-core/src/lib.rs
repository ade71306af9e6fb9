// Parameter guards use `!(x > 0.0)` so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod fnet;
pub mod ifnet;
pub mod imageio;
pub mod loss;
pub mod lzsc;
pub mod math;
pub mod metrics;
pub mod solvers;
pub mod synth;
pub mod tensor;
pub mod threshold;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
