//! Dense `f64` kernel: matrices, an LU solver, and a reverse-mode tape
//! covering exactly the primitives the alignment search needs.

mod adam;
mod gradcheck;
pub mod linalg;
mod tape;
mod tensor;

pub use adam::Adam;
pub use gradcheck::grad_check;
pub use tape::{sigmoid, softplus, softplus_inv, Gradients, Tape, Var};
pub use tensor::Tensor;
