//! Noisy low-rank Tucker tensor completion and inference for linear forms.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod normal;
pub mod rng;
pub mod sampling;
pub mod tensor;
pub mod tucker;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tensor::{DenseTensor, Shape};
pub use tucker::{MultilinearRank, TuckerFactorization};
