// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod poly;
pub mod potential;
pub mod scenario;
pub mod shape;
pub mod sim;
pub mod stabilizer;

pub use error::{FormationError, Result};
