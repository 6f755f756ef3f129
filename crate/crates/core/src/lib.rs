//! Deep graph attention: five propagation schemes over a shared sparse
//! differentiation core, with diagnostics for cumulative attention and
//! over-smoothing.

pub mod attention;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod graph;
pub mod oracles;
pub mod propagation;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use exec::Exec;
