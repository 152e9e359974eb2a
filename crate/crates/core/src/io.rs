//! JSON formats shared by the command-line tool and the Python bindings.
//!
//! Matrices are lists of rows. A problem file looks like
//!
//! ```json
//! {"A": [[-1.0]], "a": [1.0], "gamma": 0.0, "x0": [0.0], "alpha": 1.0,
//!  "constraints": [{"b": [-1.0], "beta": 0.0}]}
//! ```
//!
//! with an optional `"B"` curvature factor. Robust least-squares files hold
//! `"A0"`, `"a0"`, optional `"Delta_bar"`, `"rho"` and `"cuts"`. Robust SOCP
//! files hold `"a"` and a list of constraints, each an uncertainty set plus a
//! bound `"d"`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::SymMatrix;
use crate::problem::{ConstraintSet, LinearConstraint, QuadraticForm, TrustRegionProblem};
use crate::robust::{MatrixUncertaintySet, RobustConstraint, RobustSocpProblem, UncertaintyCut};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(rename = "A")]
    pub a_mat: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
    pub x0: Vec<f64>,
    pub alpha: f64,
    #[serde(default)]
    pub constraints: Vec<ConstraintFile>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b_mat: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    pub b: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyFile {
    #[serde(rename = "A0")]
    pub a0_mat: Vec<Vec<f64>>,
    pub a0: Vec<f64>,
    #[serde(rename = "Delta_bar", default, skip_serializing_if = "Option::is_none")]
    pub delta_bar: Option<Vec<Vec<f64>>>,
    pub rho: f64,
    #[serde(default)]
    pub cuts: Vec<UncertaintyCut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlspFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(flatten)]
    pub uncertainty: UncertaintyFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsocpConstraintFile {
    #[serde(flatten)]
    pub uncertainty: UncertaintyFile,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsocpFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub a: Vec<f64>,
    pub constraints: Vec<RsocpConstraintFile>,
}

fn parse_json<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| invalid(format!("malformed JSON: {e}")))
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(invalid(format!("{what} must be a nonempty list of rows")));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(invalid(format!("{what} has rows of unequal length")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ProblemFile {
    /// Objective and feasible set; the radius may be zero.
    pub fn to_parts(&self) -> Result<(QuadraticForm, ConstraintSet)> {
        let a = matrix(&self.a_mat, "A")?;
        if a.nrows() != a.ncols() {
            return Err(invalid("A must be square"));
        }
        if (&a - a.transpose()).amax() > 1e-12 * (1.0 + a.amax()) {
            return Err(invalid("A must be symmetric"));
        }
        let objective = QuadraticForm::new(SymMatrix::from_upper(a)?, DVector::from_vec(self.a.clone()), self.gamma)?;
        let linear = self
            .constraints
            .iter()
            .map(|c| LinearConstraint::new(DVector::from_vec(c.b.clone()), c.beta))
            .collect();
        let curvature = self.b_mat.as_deref().map(|b| matrix(b, "B")).transpose()?;
        let constraints = ConstraintSet::new(DVector::from_vec(self.x0.clone()), self.alpha, linear, curvature)?;
        if objective.dim() != constraints.dim() {
            return Err(invalid(format!(
                "objective has dimension {} but x0 has length {}",
                objective.dim(),
                constraints.dim()
            )));
        }
        Ok((objective, constraints))
    }

    pub fn to_problem(&self) -> Result<TrustRegionProblem> {
        let (f, c) = self.to_parts()?;
        TrustRegionProblem::new(f, c)
    }

    pub fn from_parts(f: &QuadraticForm, c: &ConstraintSet) -> Self {
        Self {
            description: None,
            a_mat: rows_of(f.hessian().as_matrix()),
            a: f.linear().iter().copied().collect(),
            gamma: f.constant(),
            x0: c.center().iter().copied().collect(),
            alpha: c.radius_sq(),
            constraints: c
                .linear()
                .iter()
                .map(|l| ConstraintFile {
                    b: l.normal.iter().copied().collect(),
                    beta: l.bound,
                })
                .collect(),
            b_mat: c.curvature().map(rows_of),
        }
    }
}

impl UncertaintyFile {
    pub fn to_set(&self) -> Result<MatrixUncertaintySet> {
        let delta_bar = self.delta_bar.as_deref().map(|d| matrix(d, "Delta_bar")).transpose()?;
        MatrixUncertaintySet::new(
            matrix(&self.a0_mat, "A0")?,
            DVector::from_vec(self.a0.clone()),
            delta_bar,
            self.rho,
            self.cuts.clone(),
        )
    }

    pub fn from_set(u: &MatrixUncertaintySet) -> Self {
        let zero = u.delta_bar().iter().all(|v| *v == 0.0);
        Self {
            a0_mat: rows_of(u.a0()),
            a0: u.b0().iter().copied().collect(),
            delta_bar: (!zero).then(|| rows_of(u.delta_bar())),
            rho: u.rho(),
            cuts: u.cuts().to_vec(),
        }
    }
}

impl RsocpFile {
    pub fn to_problem(&self) -> Result<RobustSocpProblem> {
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                Ok(RobustConstraint {
                    uncertainty: c.uncertainty.to_set()?,
                    d: c.d,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RobustSocpProblem::new(DVector::from_vec(self.a.clone()), constraints)
    }

    pub fn from_problem(p: &RobustSocpProblem) -> Self {
        Self {
            description: None,
            a: p.objective().iter().copied().collect(),
            constraints: p
                .constraints()
                .iter()
                .map(|c| RsocpConstraintFile {
                    uncertainty: UncertaintyFile::from_set(&c.uncertainty),
                    d: c.d,
                })
                .collect(),
        }
    }
}

pub fn parse_problem_file(text: &str) -> Result<ProblemFile> {
    parse_json(text)
}

pub fn parse_problem(text: &str) -> Result<TrustRegionProblem> {
    parse_problem_file(text)?.to_problem()
}

pub fn parse_problem_parts(text: &str) -> Result<(QuadraticForm, ConstraintSet)> {
    parse_problem_file(text)?.to_parts()
}

pub fn parse_rlsp(text: &str) -> Result<MatrixUncertaintySet> {
    parse_json::<RlspFile>(text)?.uncertainty.to_set()
}

pub fn parse_rsocp(text: &str) -> Result<RobustSocpProblem> {
    parse_json::<RsocpFile>(text)?.to_problem()
}

pub fn problem_to_json(p: &TrustRegionProblem) -> String {
    serde_json::to_string_pretty(&ProblemFile::from_parts(p.objective(), p.constraints())).expect("serializable")
}
