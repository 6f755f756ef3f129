//! Dense matrices, the recording tape, gradient checking and Adam.

mod gradcheck;
mod matrix;
mod optim;
mod tape;

pub use gradcheck::{grad_check, GradCheck};
pub use matrix::Matrix;
pub use optim::Adam;
pub use tape::{sym_normalize_values, Gradients, Tape, Unary, Var, EXP_CLAMP, LEAKY_SLOPE};
