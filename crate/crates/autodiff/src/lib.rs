//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! Values live on a [`Tape`]; every primitive applied through the tape is
//! recorded together with the handles of its inputs, and [`Tape::backward`]
//! replays the record in reverse to produce gradients for every parameter
//! leaf. Complex arrays are stored as real `(re, im)` pairs in a trailing
//! axis of length two, and their primitives are differentiated through the
//! real composition chain rule.
//!
//! A tape is owned by one forward pass. Batch items can be evaluated on
//! separate tapes (and threads) and their gradients summed afterwards.

mod complex;
mod error;
mod fft;
mod gradcheck;
mod linalg;
mod ops;
mod tape;
mod tensor;

pub use complex::ComplexTensor;
pub use error::{Error, Result};
pub use fft::{fft2_in_place, Direction};
pub use gradcheck::{central_difference, grad_check, grad_check_coords, relative_error};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
