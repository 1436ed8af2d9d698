//! Heat and Poisson kernels of Laguerre-type operators.

pub mod error;
pub mod experiments;
pub mod heat;
pub mod poisson;
pub mod quadrature;
pub mod report;
pub mod special;
pub mod tabulated;
pub mod transference;
pub mod weights;

pub use error::{Error, Result};
