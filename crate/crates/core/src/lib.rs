//! T-product tensor algebra and data-driven analysis and control of
//! T-product-based linear dynamical systems.

pub mod error;
pub mod informativity;
pub mod linalg;
pub mod lmi;
pub mod sim;
pub mod spectral;
pub mod tensor;
pub mod tqr;

pub use error::{Error, Result};
pub use spectral::FourierBlocks;
pub use tensor::{RealMatrix, Tensor3};
