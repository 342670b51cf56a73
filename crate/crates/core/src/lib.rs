//! Dense kernels for softmax, kernelized linear and tensor attention, the
//! tensor interaction operator, a small vision transformer encoder, and
//! brute-force oracles for checking all of them.

pub mod baselines;
pub mod dense;
pub mod error;
pub mod expm;
pub mod interaction;
pub mod mechanism;
pub mod oracle;
pub mod sample;
pub mod scalar;
pub mod tensor_attention;
pub mod vit;

pub use baselines::AttnInputs;
pub use dense::{DenseMatrix, Trans};
pub use error::{Error, Normalizer, Result};
pub use mechanism::Mechanism;
pub use num_complex::Complex64;
pub use scalar::{Scalar, ScalarKind};
