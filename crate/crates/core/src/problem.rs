//! The extended trust-region problem
//!
//! ```text
//! min  xᵀAx + aᵀx + γ
//! s.t. ‖x − x₀‖² ≤ α
//!      ‖Bx‖² + bᵢᵀx ≤ βᵢ,   i = 1..m
//! ```
//!
//! with `B = 0` unless a curvature factor is supplied. Feasibility, Slater and
//! dimension-condition checks live here as well.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{self, SymMatrix};

/// `x ↦ xᵀAx + aᵀx + γ`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    hessian: SymMatrix,
    linear: DVector<f64>,
    constant: f64,
}

impl QuadraticForm {
    pub fn new(hessian: SymMatrix, linear: DVector<f64>, constant: f64) -> Result<Self> {
        if linear.len() != hessian.order() {
            return Err(invalid(format!(
                "linear term has length {} but the quadratic term has order {}",
                linear.len(),
                hessian.order()
            )));
        }
        if !constant.is_finite() || linear.iter().any(|v| !v.is_finite()) {
            return Err(invalid("quadratic form data must be finite"));
        }
        Ok(Self {
            hessian,
            linear,
            constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// The `A` in `xᵀAx`.
    pub fn hessian(&self) -> &SymMatrix {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.hessian.quad_form(x) + self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.hessian.as_matrix() * x * 2.0 + &self.linear
    }

    pub fn with_constant(&self, constant: f64) -> Self {
        Self {
            constant,
            ..self.clone()
        }
    }
}

/// `bᵀx ≤ β` (plus the shared `‖Bx‖²` term when the system has curvature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub normal: DVector<f64>,
    pub bound: f64,
}

impl LinearConstraint {
    pub fn new(normal: DVector<f64>, bound: f64) -> Self {
        Self { normal, bound }
    }
}

/// The feasible-set description: a ball plus the (optionally curved) linear
/// constraints. The ball radius may be zero here; [`TrustRegionProblem`]
/// requires it to be positive. S-lemma queries accept degenerate balls such
/// as `g₀(x) = x²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    center: DVector<f64>,
    radius_sq: f64,
    linear: Vec<LinearConstraint>,
    curvature: Option<DMatrix<f64>>,
}

impl ConstraintSet {
    pub fn new(
        center: DVector<f64>,
        radius_sq: f64,
        linear: Vec<LinearConstraint>,
        curvature: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(invalid("problem dimension must be at least 1"));
        }
        if !(radius_sq >= 0.0) || !radius_sq.is_finite() {
            return Err(invalid(format!(
                "squared radius must be finite and >= 0, got {radius_sq}"
            )));
        }
        for (i, c) in linear.iter().enumerate() {
            if c.normal.len() != n {
                return Err(invalid(format!(
                    "constraint {i} has normal of length {} but the problem has dimension {n}",
                    c.normal.len()
                )));
            }
            if !c.bound.is_finite() || c.normal.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("constraint {i} has non-finite data")));
            }
        }
        if let Some(b) = &curvature {
            if b.ncols() != n || b.nrows() == 0 {
                return Err(invalid(format!(
                    "curvature factor must be l x {n} with l >= 1, got {}x{}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self {
            center,
            radius_sq,
            linear,
            curvature,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    pub fn linear(&self) -> &[LinearConstraint] {
        &self.linear
    }

    pub fn num_linear(&self) -> usize {
        self.linear.len()
    }

    pub fn curvature(&self) -> Option<&DMatrix<f64>> {
        self.curvature.as_ref()
    }

    /// `BᵀB`, or `None` without curvature.
    pub fn curvature_gram(&self) -> Option<SymMatrix> {
        self.curvature
            .as_ref()
            .map(|b| SymMatrix::symmetrize(b.transpose() * b).expect("BᵀB is square"))
    }

    /// `g₀(x) = ‖x − x₀‖² − α`
    pub fn ball_value(&self, x: &DVector<f64>) -> f64 {
        (x - &self.center).norm_squared() - self.radius_sq
    }

    fn curvature_sq(&self, x: &DVector<f64>) -> f64 {
        self.curvature.as_ref().map_or(0.0, |b| (b * x).norm_squared())
    }

    /// `gᵢ(x) = ‖Bx‖² + bᵢᵀx − βᵢ` for every linear constraint.
    pub fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        let c = self.curvature_sq(x);
        self.linear.iter().map(|l| c + l.normal.dot(x) - l.bound).collect()
    }

    /// Largest constraint value including the ball; `≤ 0` means feasible.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraint_values(x).into_iter().fold(self.ball_value(x), f64::max)
    }

    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    pub fn normals(&self) -> Vec<DVector<f64>> {
        self.linear.iter().map(|l| l.normal.clone()).collect()
    }

    pub fn with_linear(&self, linear: Vec<LinearConstraint>) -> Result<Self> {
        Self::new(self.center.clone(), self.radius_sq, linear, self.curvature.clone())
    }
}

/// A complete problem instance: objective plus constraint set with `α > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionProblem {
    objective: QuadraticForm,
    constraints: ConstraintSet,
}

/// Values of the objective and slacks at a point. Slacks are nonnegative at
/// feasible points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub objective: f64,
    pub ball_slack: f64,
    pub constraint_slacks: Vec<f64>,
}

impl Evaluation {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.ball_slack >= -tol && self.constraint_slacks.iter().all(|&s| s >= -tol)
    }
}

impl TrustRegionProblem {
    pub fn new(objective: QuadraticForm, constraints: ConstraintSet) -> Result<Self> {
        if objective.dim() != constraints.dim() {
            return Err(invalid(format!(
                "objective has dimension {} but constraints have dimension {}",
                objective.dim(),
                constraints.dim()
            )));
        }
        if !(constraints.radius_sq() > 0.0) {
            return Err(invalid("trust-region radius must be positive (alpha > 0)"));
        }
        Ok(Self { objective, constraints })
    }

    /// Convenience constructor from raw data without curvature.
    pub fn from_parts(
        a_mat: SymMatrix,
        a: DVector<f64>,
        gamma: f64,
        center: DVector<f64>,
        alpha: f64,
        linear: Vec<LinearConstraint>,
    ) -> Result<Self> {
        Self::new(
            QuadraticForm::new(a_mat, a, gamma)?,
            ConstraintSet::new(center, alpha, linear, None)?,
        )
    }

    pub fn objective(&self) -> &QuadraticForm {
        &self.objective
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn num_linear(&self) -> usize {
        self.constraints.num_linear()
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "point has dimension {} but the problem has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(Evaluation {
            objective: self.objective.eval(x),
            ball_slack: -self.constraints.ball_value(x),
            constraint_slacks: self.constraints.constraint_values(x).into_iter().map(|g| -g).collect(),
        })
    }

    pub fn with_objective(&self, objective: QuadraticForm) -> Result<Self> {
        Self::new(objective, self.constraints.clone())
    }
}

/// Outcome of the dimension-condition test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub lambda_min: f64,
    /// `dim Ker(A − λ_min I)`, intersected with `Ker B` in the extended case.
    pub multiplicity: usize,
    /// `dim span{bᵢ}`
    pub s: usize,
    pub holds: bool,
    pub extended: bool,
}

/// Evaluates `dim Ker(A − λ_min I) [∩ Ker B] ≥ dim span{bᵢ} + 1`.
pub fn check_dimension_condition(
    objective: &QuadraticForm,
    constraints: &ConstraintSet,
    tol: f64,
) -> Result<DimensionReport> {
    let eigenspace = linalg::min_eig_multiplicity(objective.hessian(), tol)?;
    let s = linalg::span_rank(&constraints.normals(), tol);
    let (multiplicity, extended) = match constraints.curvature() {
        None => (eigenspace.multiplicity, false),
        Some(b) => (joint_kernel(&eigenspace.basis, b, tol).ncols(), true),
    };
    Ok(DimensionReport {
        lambda_min: eigenspace.value,
        multiplicity,
        s,
        holds: multiplicity > s,
        extended,
    })
}

/// Orthonormal basis of `span(basis) ∩ Ker(b)`, with `basis` orthonormal.
pub(crate) fn joint_kernel(basis: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return basis.clone();
    }
    let scale = b.norm().max(1.0);
    let coeffs = linalg::null_space(&(b * basis), tol * scale);
    basis * coeffs
}

impl TrustRegionProblem {
    pub fn check_dimension_condition(&self, tol: f64) -> Result<DimensionReport> {
        check_dimension_condition(&self.objective, &self.constraints, tol)
    }

    pub fn check_slater(&self) -> SlaterReport {
        check_slater(&self.constraints)
    }
}

/// Margin a Slater witness must clear on every constraint.
pub const SLATER_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaterStatus {
    Holds,
    Fails,
    /// The best max-violation found is within the margin of zero.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlaterReport {
    pub status: SlaterStatus,
    /// Best value of `φ(x) = max(g₀(x), gᵢ(x))` found.
    pub best_violation: f64,
    pub witness: Option<Vec<f64>>,
}

impl SlaterReport {
    pub fn holds(&self) -> bool {
        self.status == SlaterStatus::Holds
    }

    pub fn boundary(&self) -> bool {
        self.status == SlaterStatus::Inconclusive
    }
}

/// Searches for a strictly feasible point by minimizing the convex
/// max-violation `φ` with a normalized subgradient method from a few starts.
pub fn check_slater(constraints: &ConstraintSet) -> SlaterReport {
    let n = constraints.dim();
    let radius = constraints.radius_sq().sqrt();
    let phi = |x: &DVector<f64>| constraints.max_violation(x);

    let mut starts = vec![constraints.center().clone()];
    for i in 0..n {
        for sign in [-0.5, 0.5] {
            let mut x = constraints.center().clone();
            x[i] += sign * radius;
            starts.push(x);
        }
    }

    let gram = constraints.curvature_gram();
    let subgradient = |x: &DVector<f64>| -> DVector<f64> {
        let mut best = constraints.ball_value(x);
        let mut g = (x - constraints.center()) * 2.0;
        for (value, lin) in constraints.constraint_values(x).into_iter().zip(constraints.linear()) {
            if value > best {
                best = value;
                g = lin.normal.clone();
                if let Some(q) = &gram {
                    g += q.as_matrix() * x * 2.0;
                }
            }
        }
        g
    };

    let step0 = radius.max(1e-3);
    let mut best_x = constraints.center().clone();
    let mut best_phi = phi(&best_x);
    for start in starts {
        let mut x = start;
        let mut local_best = phi(&x);
        let mut local_x = x.clone();
        for k in 0..4000 {
            if local_best <= -SLATER_MARGIN * 1e3 && k > 200 {
                break;
            }
            let g = subgradient(&x);
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            x -= g * (step0 / ((k + 1) as f64).sqrt() / gn);
            let v = phi(&x);
            if v < local_best {
                local_best = v;
                local_x = x.clone();
            }
        }
        if local_best < best_phi {
            best_phi = local_best;
            best_x = local_x;
        }
    }

    let status = if best_phi <= -SLATER_MARGIN {
        SlaterStatus::Holds
    } else if best_phi.abs() < SLATER_MARGIN {
        SlaterStatus::Inconclusive
    } else {
        SlaterStatus::Fails
    };
    SlaterReport {
        status,
        best_violation: best_phi,
        witness: (status == SlaterStatus::Holds).then(|| best_x.iter().copied().collect()),
    }
}
