//! Small reference instances with known answers.

use nalgebra::{DMatrix, DVector};

use crate::linalg::SymMatrix;
use crate::problem::{ConstraintSet, LinearConstraint, QuadraticForm, TrustRegionProblem};

fn v(s: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(s)
}

/// `min −‖x‖² + 3x₁ + 2x₂ + 2x₃` over `‖x − e₁‖² ≤ 1`, `x₁ ≤ 0`, `x₁+x₂+x₃ ≤ 0`.
///
/// The feasible set is the single point `0`, so the optimum is `0` and no
/// strictly feasible point exists.
pub fn single_point() -> TrustRegionProblem {
    TrustRegionProblem::from_parts(
        SymMatrix::from_diagonal(&[-1.0, -1.0, -1.0]),
        v(&[3.0, 2.0, 2.0]),
        0.0,
        v(&[1.0, 0.0, 0.0]),
        1.0,
        vec![
            LinearConstraint::new(v(&[1.0, 0.0, 0.0]), 0.0),
            LinearConstraint::new(v(&[1.0, 1.0, 1.0]), 0.0),
        ],
    )
    .expect("valid fixture")
}

/// `min x − x²` over `x² ≤ 1`, `−x ≤ 0`. Optimum `0` at `x ∈ {0, 1}`; the
/// semidefinite relaxation gives `−1`.
///
/// The linear constraint is `g₁(x) = −x`, so `b₁ = −1`.
pub fn relaxation_gap() -> TrustRegionProblem {
    TrustRegionProblem::from_parts(
        SymMatrix::from_diagonal(&[-1.0]),
        v(&[1.0]),
        0.0,
        v(&[0.0]),
        1.0,
        vec![LinearConstraint::new(v(&[-1.0]), 0.0)],
    )
    .expect("valid fixture")
}

/// Same data as [`relaxation_gap`]; used for the image-convexity question.
pub fn nonconvex_image() -> TrustRegionProblem {
    relaxation_gap()
}

/// `f = x` subject to `x² ≤ 0`, as a form and constraint set (the ball is
/// degenerate so this is not a [`TrustRegionProblem`]).
pub fn asymptotic() -> (QuadraticForm, ConstraintSet) {
    let f = QuadraticForm::new(SymMatrix::zeros(1), v(&[1.0]), 0.0).expect("valid fixture");
    let c = ConstraintSet::new(v(&[0.0]), 0.0, vec![], None).expect("valid fixture");
    (f, c)
}

/// `min −‖x‖² − 2x₁` over `‖x + ½e₁‖² ≤ 5/4`, `x₁² + x₁ ≤ 0`.
///
/// Optimum `−1`, attained at `x₁ = 0`, `x₂² + x₃² = 1`; the relaxation is tight.
pub fn curved_constraint() -> TrustRegionProblem {
    let objective = QuadraticForm::new(SymMatrix::from_diagonal(&[-1.0, -1.0, -1.0]), v(&[-2.0, 0.0, 0.0]), 0.0)
        .expect("valid fixture");
    let mut b = DMatrix::zeros(1, 3);
    b[(0, 0)] = 1.0;
    let constraints = ConstraintSet::new(
        v(&[-0.5, 0.0, 0.0]),
        1.25,
        vec![LinearConstraint::new(v(&[1.0, 0.0, 0.0]), 0.0)],
        Some(b),
    )
    .expect("valid fixture");
    TrustRegionProblem::new(objective, constraints).expect("valid fixture")
}
