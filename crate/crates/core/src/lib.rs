pub mod distributions;
pub mod error;
pub mod evalmotion;
pub mod gplvm;
pub mod graphtax;
pub mod kernels;
pub mod manifold;
pub mod optim;

pub use error::{Error, ErrorClass, Result};
