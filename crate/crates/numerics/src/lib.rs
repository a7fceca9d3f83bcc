//! Minimal dense-tensor numerics: `f64` tensors, a reverse-mode gradient
//! tape, Adam with step decay, and the `FGF1` checkpoint format.
//!
//! Parameters live in a [`ParamStore`]. Each training step records its
//! forward pass on a fresh (or [`Tape::reset`]) tape, calls
//! [`Tape::backward`] once, and hands the returned [`Gradients`] to an
//! optimizer. A second backward on the same tape is an error, so gradients
//! never accumulate silently across steps.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
mod ops;
pub mod optim;
pub mod param;
mod tape;
pub mod tensor;

pub use error::{NumericsError, Result};
pub use ops::{ElementwiseKind, BCE_CLAMP};
pub use optim::{Adam, LrSchedule};
pub use param::{init, Gradients, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
