pub mod checks;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod temporal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Padding, Tensor, Var};
