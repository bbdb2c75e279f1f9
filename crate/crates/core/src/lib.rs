//! Kantorovich regression: distribution-on-distribution regression through scaled
//! optimal transport potentials, with 1D and 2D transport kernels, feasibility
//! constants and projected-gradient fitting.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over several parallel arrays read closer to the formulas.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fit;
pub mod grid;
pub mod io;
pub mod model;
pub mod ot2d;
pub mod ot1d;
pub mod par;
pub mod synth;

pub use error::{Error, Result};
