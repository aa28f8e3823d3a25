//! Averaging of Finsler metrics, connections and operator families over the
//! indicatrix, together with the deviation tensors that classify a Finsler
//! structure, the torus averaging principle for slow–fast ODE systems, and
//! integration of differential forms along the fiber of a trivial bundle.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod averaging;
pub mod error;
pub mod expr;
pub mod fiber;
pub mod finsler;
pub mod indicatrix;
pub mod ode;
pub mod taylor;
pub mod tensor;

pub use error::{Error, Result};
pub use finsler::{Catalog, FinslerStructure};
pub use indicatrix::IndicatrixQuadrature;
pub use taylor::Jet;
pub use tensor::Tensor3;
