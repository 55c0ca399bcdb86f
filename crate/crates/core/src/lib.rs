pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod importance;
pub mod flows;
pub mod gan;
pub mod linalg;
pub mod nn;
pub mod norms;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor2;
