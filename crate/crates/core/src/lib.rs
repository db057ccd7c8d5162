//! Stable forms in dimensions 6 and 7, G₂/SU(3) structures, perturbed
//! special-Lagrangian geometry and associative graphs.
//!
//! Forms are sparse and exact where the input is exact; everything above the
//! exterior algebra layer works in double precision.

pub mod associator_pde;
pub mod cli;
pub mod exterior;
pub mod g2;
pub mod octonion;
pub mod perturbed_sl;
pub mod poly;
pub mod rng;
pub mod stable6;

mod error;

pub use error::{Error, ErrorKind, Result};
pub use exterior::{Form, Metric, MultiIndex};
pub use octonion::Octonion;
pub use poly::Poly;
