//! Numerical substrate: dense tensors, reverse-mode differentiation,
//! parameters, optimisation, dropout and gradient checking.

mod adam;
mod autodiff;
mod checkpoint;
mod dropout;
mod gradcheck;
mod params;
pub mod rng;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use autodiff::{sigmoid, softmax_in_place, Tape, Var};
pub use checkpoint::{NamedTensor, ParamSnapshot};
pub use dropout::{check_rate, dropout, Dropout};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport, ParamCheck};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
