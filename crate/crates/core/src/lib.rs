pub mod changevar;
pub mod dse;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod hermitization;
pub mod linalg;
pub mod locallaw;
pub mod matrix;
pub mod scalar;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use matrix::CMatrix;
pub use scalar::{Real, C};

pub type CMatrix64 = CMatrix<f64>;
pub type CMatrix32 = CMatrix<f32>;
