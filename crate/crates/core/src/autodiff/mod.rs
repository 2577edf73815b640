//! Dense tensors, a reverse-mode tape, Adam, and a finite-difference checker.

mod adam;
mod gradcheck;
mod losses;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{finite_diff_check, GradCheckReport, REL_ERROR_FLOOR};
pub use losses::cross_entropy;
pub use params::{Bound, ParamStore};
pub use tape::{logsumexp_slice, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
