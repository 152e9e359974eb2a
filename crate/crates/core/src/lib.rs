//! Extended trust-region problems: semidefinite relaxation, exactness and
//! optimality certificates, and robust least-squares / second-order-cone
//! reformulations.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod relaxation;
pub mod robust;
pub mod sdp;

pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use problem::{ConstraintSet, LinearConstraint, QuadraticForm, TrustRegionProblem};
