pub mod cli;
pub mod dynamics;
pub mod error;
pub mod hyperbolic;
pub mod lattice;
pub mod misiurewicz;
pub mod scan;

pub use error::{Error, Result};
