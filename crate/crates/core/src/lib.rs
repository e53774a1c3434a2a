#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Drawdown laws for one-dimensional diffusions.

pub mod error;
pub mod laws;
pub mod mc;
pub mod model;
pub mod ode;
pub mod quad;
pub mod scale;
pub mod sturm;
pub mod verify;

pub use error::{Error, Result};
pub use laws::DrawdownQuery;
pub use model::{DiffusionModel, ModelKind, ModelSpec};
