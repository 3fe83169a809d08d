//! Dense tensors, a reverse-mode tape and the Adam optimizer.
//!
//! All arithmetic is `f64` and single-threaded per tape. A tape is built for
//! one forward pass, differentiated once with [`Tape::backward`], and the
//! resulting [`Gradients`] are added into the parameter store. Zeroing the
//! store's gradient buffers between optimizer steps is the caller's job.

mod adam;
pub mod kernels;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var, LN_EPS};
pub use tensor::Tensor;
