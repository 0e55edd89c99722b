//! Exponential-sum models of bath correlation functions, exact
//! harmonic-oscillator benchmarks, hierarchical equations of motion and the
//! surrogate-oscillator error test built on top of them.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod error;
pub mod exact;
pub mod fitting;
pub mod heom;
pub mod io;
pub mod linalg;
pub mod quad;
pub mod special;
pub mod testing;

pub use bath::{BathSpec, Beta, GaussianFilter, MtTerm, SpectralDensity};
pub use error::{Error, Result};
pub use fitting::ExponentialBCF;
pub use num_complex::Complex64;
