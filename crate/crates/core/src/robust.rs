//! Robust least squares and robust second-order cone programs under matrix
//! uncertainty `{Ã⁽⁰⁾ + Δ : ‖Δ − Δ̄‖_F ≤ ρ, (wʲ)ᵀvec Δ ≤ βʲ}`.
//!
//! A perturbation `Δ = (ΔA, Δa)` is `k × (n+1)` and cut vectors index
//! `vec(Δ)` column-major. Internally the inner maximization is posed in the
//! row-stacked coordinates `u = vec(Δᵀ)`, where `Δx̃ = (I_k ⊗ x̃ᵀ)u` with
//! `x̃ = (x, −1)`. The relaxation module uses `(x, 1)` instead; the two
//! conventions never meet.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, SymMatrix, DEFAULT_EIG_TOL};
use crate::problem::{check_slater, ConstraintSet, LinearConstraint, QuadraticForm, SlaterStatus, TrustRegionProblem};
use crate::relaxation::{self, RelaxationOptions};
use crate::sdp::{self, ConicProgram, SolveOptions, SolveStatus};

/// Tolerance used to decide that `Δ̄` satisfies the cuts when `ρ = 0`.
const POINT_SET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyCut {
    pub w: Vec<f64>,
    pub beta: f64,
}

impl UncertaintyCut {
    pub fn new(w: Vec<f64>, beta: f64) -> Self {
        Self { w, beta }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixUncertaintySet {
    a0: DMatrix<f64>,
    b0: DVector<f64>,
    delta_bar: DMatrix<f64>,
    rho: f64,
    cuts: Vec<UncertaintyCut>,
}

impl MatrixUncertaintySet {
    /// `delta_bar = None` centers the ball at zero.
    pub fn new(
        a0: DMatrix<f64>,
        b0: DVector<f64>,
        delta_bar: Option<DMatrix<f64>>,
        rho: f64,
        cuts: Vec<UncertaintyCut>,
    ) -> Result<Self> {
        let (k, n) = a0.shape();
        if k == 0 || n == 0 {
            return Err(invalid(format!("nominal matrix must be nonempty, got {k}x{n}")));
        }
        if b0.len() != k {
            return Err(invalid(format!(
                "nominal vector has length {} but the matrix has {k} rows",
                b0.len()
            )));
        }
        let delta_bar = delta_bar.unwrap_or_else(|| DMatrix::zeros(k, n + 1));
        if delta_bar.shape() != (k, n + 1) {
            return Err(invalid(format!(
                "Delta_bar must be {k}x{}, got {}x{}",
                n + 1,
                delta_bar.nrows(),
                delta_bar.ncols()
            )));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(invalid(format!("rho must be finite and >= 0, got {rho}")));
        }
        let dim = k * (n + 1);
        for (j, c) in cuts.iter().enumerate() {
            if c.w.len() != dim {
                return Err(invalid(format!(
                    "cut {j} has length {} but vec(Delta) has length {dim}",
                    c.w.len()
                )));
            }
            if !c.beta.is_finite() || c.w.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("cut {j} has non-finite data")));
            }
        }
        let finite = a0
            .iter()
            .chain(b0.iter())
            .chain(delta_bar.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("uncertainty data must be finite"));
        }
        Ok(Self {
            a0,
            b0,
            delta_bar,
            rho,
            cuts,
        })
    }

    /// Number of rows `k`.
    pub fn rows(&self) -> usize {
        self.a0.nrows()
    }

    /// Number of decision variables `n`.
    pub fn dim(&self) -> usize {
        self.a0.ncols()
    }

    /// Length of `vec(Δ)`, `k(n+1)`.
    pub fn perturbation_dim(&self) -> usize {
        self.rows() * (self.dim() + 1)
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn b0(&self) -> &DVector<f64> {
        &self.b0
    }

    pub fn delta_bar(&self) -> &DMatrix<f64> {
        &self.delta_bar
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn cuts(&self) -> &[UncertaintyCut] {
        &self.cuts
    }

    /// `vec(Δ̄)`, column-major.
    pub fn b(&self) -> DVector<f64> {
        linalg::vec(&self.delta_bar)
    }

    /// `ρ² − Tr(Δ̄ᵀΔ̄)`
    pub fn gamma(&self) -> f64 {
        self.rho * self.rho - self.delta_bar.norm_squared()
    }

    /// `dim span{wʲ}`
    pub fn span_rank(&self) -> usize {
        let ws: Vec<DVector<f64>> = self.cuts.iter().map(|c| DVector::from_column_slice(&c.w)).collect();
        linalg::span_rank(&ws, DEFAULT_EIG_TOL)
    }

    /// Maps a column-major `vec(Δ)` to row-stacked `vec(Δᵀ)`.
    fn to_rows(&self, v: &[f64]) -> DVector<f64> {
        let (k, m) = (self.rows(), self.dim() + 1);
        DVector::from_fn(k * m, |idx, _| {
            let (r, c) = (idx / m, idx % m);
            v[c * k + r]
        })
    }

    /// Maps a row-stacked `vec(Δᵀ)` back to a `k × (n+1)` matrix.
    fn unstack_rows(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let (k, m) = (self.rows(), self.dim() + 1);
        DMatrix::from_fn(k, m, |r, c| u[r * m + c])
    }

    /// `‖(A⁽⁰⁾+ΔA)x − (a⁽⁰⁾+Δa)‖²`
    pub fn residual(&self, delta: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
        (self.nominal_residual(x) + delta * x_tilde(x)).norm_squared()
    }

    fn nominal_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a0 * x - &self.b0
    }

    /// Largest constraint violation of `Δ`; `≤ 0` means `Δ ∈ U`.
    pub fn violation(&self, delta: &DMatrix<f64>) -> f64 {
        let ball = (delta - &self.delta_bar).norm() - self.rho;
        let v = linalg::vec(delta);
        self.cuts
            .iter()
            .map(|c| c.w.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() - c.beta)
            .fold(ball, f64::max)
    }

    /// Checks the exactness hypotheses `k ≥ s + 1` and strict feasibility.
    pub fn hypotheses(&self) -> HypothesisReport {
        let k = self.rows();
        let s = self.span_rank();
        let strict = if self.rho == 0.0 {
            SlaterStatus::Fails
        } else {
            check_slater(&self.u_constraints()).status
        };
        let mut warnings = Vec::new();
        if k < s + 1 {
            warnings.push(format!(
                "k = {k} < s + 1 = {}: the LMI is an upper bound but may not be exact",
                s + 1
            ));
        }
        if self.rho == 0.0 {
            warnings.push("rho = 0: the uncertainty set is the single point Delta_bar".to_string());
        } else if strict != SlaterStatus::Holds {
            warnings.push("no strictly feasible perturbation found: the LMI may not be exact".to_string());
        }
        HypothesisReport {
            k,
            s,
            rank_condition: k > s,
            strict_feasibility: strict,
            warnings,
        }
    }

    /// Ball-plus-cuts description in `u` coordinates.
    fn u_constraints(&self) -> ConstraintSet {
        let b_u = self.to_rows(self.b().as_slice());
        let cuts = self
            .cuts
            .iter()
            .map(|c| LinearConstraint::new(self.to_rows(&c.w), c.beta))
            .collect();
        ConstraintSet::new(b_u, self.rho * self.rho, cuts, None).expect("validated dimensions")
    }

    /// Errors when `ρ = 0` and `Δ̄` violates a cut.
    fn check_point_set(&self) -> Result<()> {
        if self.violation(&self.delta_bar) > POINT_SET_TOL {
            return Err(invalid(
                "uncertainty set is empty: Delta_bar violates a cut and rho = 0",
            ));
        }
        Ok(())
    }

    /// Nominal data shifted by `Δ̄`.
    fn centered_data(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let a = &self.a0 + self.delta_bar.columns(0, n);
        let b = &self.b0 + self.delta_bar.column(n);
        (a, b)
    }
}

fn x_tilde(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n + 1, |i, _| if i < n { x[i] } else { -1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub k: usize,
    /// `dim span{wʲ}`
    pub s: usize,
    /// `k ≥ s + 1`
    pub rank_condition: bool,
    pub strict_feasibility: SlaterStatus,
    pub warnings: Vec<String>,
}

impl HypothesisReport {
    /// Both hypotheses hold, so the LMI characterization is exact.
    pub fn exact(&self) -> bool {
        self.rank_condition && self.strict_feasibility == SlaterStatus::Holds
    }
}

/// Special-case uncertainty descriptions.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintyShape {
    /// `‖Δ‖_F ≤ ρ`, encoded with the single trivial cut `0ᵀvec Δ ≤ 1`.
    MatrixNorm { rho: f64 },
    /// `‖Δ‖_F ≤ ρ` and `−1 ≤ wᵀvec Δ ≤ 1`; needs `k ≥ 2`.
    TwoEllipsoid { rho: f64, w: Vec<f64> },
    /// `‖Δ‖_F ≤ ρ` and `−1 ≤ (wˡ)ᵀvec Δ ≤ 1` for at most `k − 1` directions.
    ManyEllipsoid { rho: f64, directions: Vec<Vec<f64>> },
    General {
        delta_bar: Option<DMatrix<f64>>,
        rho: f64,
        cuts: Vec<UncertaintyCut>,
    },
}

/// Builds one of the special-case sets. Cuts of the ellipsoid shapes are
/// ordered `+w¹…+wᵖ, −w¹…−wᵖ`, each with bound 1.
pub fn make_uncertainty(a0: DMatrix<f64>, b0: DVector<f64>, shape: UncertaintyShape) -> Result<MatrixUncertaintySet> {
    let k = a0.nrows();
    let dim = k * (a0.ncols() + 1);
    let positive = |rho: f64| {
        if rho > 0.0 && rho.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("rho must be positive, got {rho}")))
        }
    };
    let paired = |ws: &[Vec<f64>]| -> Result<Vec<UncertaintyCut>> {
        for (l, w) in ws.iter().enumerate() {
            if w.len() != dim {
                return Err(invalid(format!(
                    "direction {l} has length {} but vec(Delta) has length {dim}",
                    w.len()
                )));
            }
            if w.iter().all(|v| *v == 0.0) {
                return Err(invalid(format!("direction {l} is zero")));
            }
        }
        let mut cuts: Vec<UncertaintyCut> = ws.iter().map(|w| UncertaintyCut::new(w.clone(), 1.0)).collect();
        cuts.extend(
            ws.iter()
                .map(|w| UncertaintyCut::new(w.iter().map(|v| -v).collect(), 1.0)),
        );
        Ok(cuts)
    };
    match shape {
        UncertaintyShape::MatrixNorm { rho } => {
            positive(rho)?;
            MatrixUncertaintySet::new(a0, b0, None, rho, vec![UncertaintyCut::new(vec![0.0; dim], 1.0)])
        }
        UncertaintyShape::TwoEllipsoid { rho, w } => {
            positive(rho)?;
            if k < 2 {
                return Err(invalid(format!("two-ellipsoid uncertainty needs k >= 2, got {k}")));
            }
            let cuts = paired(std::slice::from_ref(&w))?;
            MatrixUncertaintySet::new(a0, b0, None, rho, cuts)
        }
        UncertaintyShape::ManyEllipsoid { rho, directions } => {
            positive(rho)?;
            if directions.is_empty() || directions.len() + 1 > k {
                return Err(invalid(format!(
                    "many-ellipsoid uncertainty needs between 1 and k - 1 = {} directions, got {}",
                    k.saturating_sub(1),
                    directions.len()
                )));
            }
            let cuts = paired(&directions)?;
            MatrixUncertaintySet::new(a0, b0, None, rho, cuts)
        }
        UncertaintyShape::General { delta_bar, rho, cuts } => MatrixUncertaintySet::new(a0, b0, delta_bar, rho, cuts),
    }
}

/// Symmetric matrix affine in a variable vector `v`:
/// `F(v) = F₀ + Σ vⱼ Fⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLmi {
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
}

impl AffineLmi {
    pub fn order(&self) -> usize {
        self.constant.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.coefficients.len()
    }

    pub fn evaluate(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        if v.len() != self.num_vars() {
            return Err(invalid(format!(
                "expected {} variables, got {}",
                self.num_vars(),
                v.len()
            )));
        }
        let mut out = self.constant.clone();
        for (f, vj) in self.coefficients.iter().zip(v) {
            out += f * *vj;
        }
        Ok(out)
    }

    pub fn min_eigenvalue(&self, v: &[f64]) -> Result<f64> {
        Ok(linalg::min_eigenvalue(&SymMatrix::symmetrize(self.evaluate(v)?)?))
    }

    /// Substitutes a value for variable `j` and drops it.
    fn fix(mut self, j: usize, value: f64) -> Self {
        let f = self.coefficients.remove(j);
        self.constant += f * value;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityLmi {
    /// Variables ordered `x₁…xₙ, λ, λ⁰, λ¹…λˡ`.
    pub lmi: AffineLmi,
    pub hypotheses: HypothesisReport,
}

/// The robust-feasibility LMI of order `k + k(n+1) + 1`:
/// `max_{U} ‖Ax − a‖² ≤ λ` iff it holds at some `λ⁰…λˡ ≥ 0`.
pub fn build_feasibility_lmi(u: &MatrixUncertaintySet) -> FeasibilityLmi {
    FeasibilityLmi {
        lmi: lmi_parts(u),
        hypotheses: u.hypotheses(),
    }
}

fn lmi_parts(u: &MatrixUncertaintySet) -> AffineLmi {
    let (k, n) = (u.rows(), u.dim());
    let m = n + 1;
    let big = k * m;
    let order = k + big + 1;
    let last = order - 1;
    let mid = |r: usize, c: usize| k + r * m + c;
    let sym = |f: &mut DMatrix<f64>, i: usize, j: usize, v: f64| {
        f[(i, j)] += v;
        if i != j {
            f[(j, i)] += v;
        }
    };

    let mut constant = DMatrix::zeros(order, order);
    for r in 0..k {
        constant[(r, r)] = 1.0;
        sym(&mut constant, r, mid(r, n), -1.0);
        sym(&mut constant, r, last, -u.b0[r]);
    }

    let mut coefficients = Vec::with_capacity(n + 2 + u.cuts.len());
    for c in 0..n {
        let mut f = DMatrix::zeros(order, order);
        for r in 0..k {
            sym(&mut f, r, mid(r, c), 1.0);
            sym(&mut f, r, last, u.a0[(r, c)]);
        }
        coefficients.push(f);
    }

    let mut f_lambda = DMatrix::zeros(order, order);
    f_lambda[(last, last)] = 1.0;
    coefficients.push(f_lambda);

    let b_u = u.to_rows(u.b().as_slice());
    let mut f0 = DMatrix::zeros(order, order);
    for i in 0..big {
        f0[(k + i, k + i)] = 1.0;
        sym(&mut f0, k + i, last, -b_u[i]);
    }
    f0[(last, last)] = -(u.rho * u.rho - b_u.norm_squared());
    coefficients.push(f0);

    for cut in &u.cuts {
        let w_u = u.to_rows(&cut.w);
        let mut f = DMatrix::zeros(order, order);
        for i in 0..big {
            sym(&mut f, k + i, last, 0.5 * w_u[i]);
        }
        f[(last, last)] = -cut.beta;
        coefficients.push(f);
    }
    AffineLmi { constant, coefficients }
}

/// `[[I, Ãx − ã], [·, d²]] ⪰ 0` in `x`, used when `ρ = 0`.
fn nominal_lmi(u: &MatrixUncertaintySet, d_sq: f64) -> AffineLmi {
    let (a, b) = u.centered_data();
    let (k, n) = a.shape();
    let mut constant = DMatrix::identity(k + 1, k + 1);
    constant[(k, k)] = d_sq;
    for r in 0..k {
        constant[(r, k)] = -b[r];
        constant[(k, r)] = -b[r];
    }
    let coefficients = (0..n)
        .map(|c| {
            let mut f = DMatrix::zeros(k + 1, k + 1);
            for r in 0..k {
                f[(r, k)] = a[(r, c)];
                f[(k, r)] = a[(r, c)];
            }
            f
        })
        .collect();
    AffineLmi { constant, coefficients }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustOptions {
    pub sdp: SolveOptions,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            sdp: SolveOptions {
                tol: 1e-10,
                max_iter: 300,
                record_iterates: false,
            },
        }
    }
}

struct LmiSolution {
    y: Vec<f64>,
    status: SolveStatus,
    iterations: usize,
}

/// `max cᵀv` subject to every `F_i(v_{map_i}) ⪰ 0` and `v_j ≥ 0` for `j ∈ nonneg`,
/// solved as the dual side of a block conic program.
fn solve_lmis(
    lmis: &[(AffineLmi, Vec<usize>)],
    num_vars: usize,
    nonneg: &[usize],
    objective: &[f64],
    opts: &SolveOptions,
) -> Result<LmiSolution> {
    let mut sizes: Vec<usize> = lmis.iter().map(|(l, _)| l.order()).collect();
    let sign_base = sizes.len();
    sizes.extend(std::iter::repeat_n(1, nonneg.len()));
    let mut prog = ConicProgram::new(sizes)?;
    let mut c = prog.zero_block_matrix();
    for (i, (l, _)) in lmis.iter().enumerate() {
        *c.block_mut(i) = l.constant.clone();
    }
    prog.set_objective(c)?;
    let mut coeff: Vec<_> = (0..num_vars).map(|_| prog.zero_block_matrix()).collect();
    for (i, (l, map)) in lmis.iter().enumerate() {
        for (f, &g) in l.coefficients.iter().zip(map) {
            *coeff[g].block_mut(i) -= f;
        }
    }
    for (s, &g) in nonneg.iter().enumerate() {
        coeff[g].set_sym(sign_base + s, 0, 0, -1.0);
    }
    for (a, &cj) in coeff.into_iter().zip(objective) {
        prog.add_constraint(a, cj)?;
    }
    let sol = sdp::solve(&prog, opts)?;
    match sol.status {
        SolveStatus::Optimal => Ok(LmiSolution {
            y: sol.y.iter().copied().collect(),
            status: sol.status,
            iterations: sol.iterations,
        }),
        SolveStatus::Unbounded => Err(Error::Infeasible("robust program has no feasible point".into())),
        SolveStatus::Infeasible => Err(Error::Unbounded("robust objective is unbounded below".into())),
        SolveStatus::MaxIter => {
            let r = sdp::residuals(&prog, &sol);
            Err(Error::SolverFailure {
                message: format!(
                    "robust LMI solve stopped: {}",
                    sol.diagnostic.as_deref().unwrap_or("max iterations")
                ),
                residual: r.primal_infeas.max(r.dual_infeas).max(r.gap),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RlspSolution {
    pub x: Vec<f64>,
    /// Certified worst-case squared residual at `x`.
    pub lambda: f64,
    /// `λ⁰, λ¹…λˡ`
    pub multipliers: Vec<f64>,
    pub hypotheses: HypothesisReport,
    pub sdp_status: SolveStatus,
    pub sdp_iterations: usize,
}

/// Minimizes the worst-case squared residual `max_U ‖Ax − a‖²`.
pub fn solve_rlsp(u: &MatrixUncertaintySet) -> Result<RlspSolution> {
    solve_rlsp_with(u, &RobustOptions::default())
}

pub fn solve_rlsp_with(u: &MatrixUncertaintySet, opts: &RobustOptions) -> Result<RlspSolution> {
    let n = u.dim();
    let l = u.cuts.len();
    let hypotheses = u.hypotheses();
    if u.rho == 0.0 {
        u.check_point_set()?;
        let (a, b) = u.centered_data();
        let x = a
            .clone()
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| invalid(format!("least squares failed: {e}")))?;
        let lambda = (&a * &x - &b).norm_squared();
        return Ok(RlspSolution {
            x: x.iter().copied().collect(),
            lambda,
            multipliers: vec![0.0; l + 1],
            hypotheses,
            sdp_status: SolveStatus::Optimal,
            sdp_iterations: 0,
        });
    }
    let lmi = lmi_parts(u);
    let num_vars = n + 2 + l;
    let map: Vec<usize> = (0..num_vars).collect();
    let nonneg: Vec<usize> = (n + 1..num_vars).collect();
    let mut objective = vec![0.0; num_vars];
    objective[n] = -1.0;
    let sol = solve_lmis(&[(lmi, map)], num_vars, &nonneg, &objective, &opts.sdp)?;
    Ok(RlspSolution {
        x: sol.y[..n].to_vec(),
        lambda: sol.y[n],
        multipliers: sol.y[n + 1..].iter().map(|v| v.max(0.0)).collect(),
        hypotheses,
        sdp_status: sol.status,
        sdp_iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustConstraint {
    pub uncertainty: MatrixUncertaintySet,
    pub d: f64,
}

/// `min aᵀx` s.t. `‖Bᵢx − bᵢ‖ ≤ dᵢ` for every `(Bᵢ, bᵢ) ∈ Uᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustSocpProblem {
    objective: DVector<f64>,
    constraints: Vec<RobustConstraint>,
}

impl RobustSocpProblem {
    pub fn new(objective: DVector<f64>, constraints: Vec<RobustConstraint>) -> Result<Self> {
        let n = objective.len();
        if n == 0 {
            return Err(invalid("objective must be nonempty"));
        }
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(invalid("objective must be finite"));
        }
        for (i, c) in constraints.iter().enumerate() {
            if c.uncertainty.dim() != n {
                return Err(invalid(format!(
                    "constraint {i} acts on dimension {} but the objective has dimension {n}",
                    c.uncertainty.dim()
                )));
            }
            if !(c.d >= 0.0) || !c.d.is_finite() {
                return Err(invalid(format!("constraint {i} needs a finite d >= 0, got {}", c.d)));
            }
        }
        Ok(Self { objective, constraints })
    }

    pub fn objective(&self) -> &DVector<f64> {
        &self.objective
    }

    pub fn constraints(&self) -> &[RobustConstraint] {
        &self.constraints
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RsocpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Per constraint `λᵢ⁰, λᵢ¹…λᵢˡ`; zeros for point sets.
    pub multipliers: Vec<Vec<f64>>,
    pub hypotheses: Vec<HypothesisReport>,
    pub sdp_status: SolveStatus,
    pub sdp_iterations: usize,
}

pub fn solve_rsocp(p: &RobustSocpProblem) -> Result<RsocpSolution> {
    solve_rsocp_with(p, &RobustOptions::default())
}

pub fn solve_rsocp_with(p: &RobustSocpProblem, opts: &RobustOptions) -> Result<RsocpSolution> {
    let n = p.dim();
    let hypotheses: Vec<HypothesisReport> = p.constraints.par_iter().map(|c| c.uncertainty.hypotheses()).collect();
    let built: Vec<Result<(AffineLmi, usize)>> = p
        .constraints
        .par_iter()
        .map(|c| {
            let u = &c.uncertainty;
            if u.rho == 0.0 {
                u.check_point_set()?;
                Ok((nominal_lmi(u, c.d * c.d), 0))
            } else {
                Ok((lmi_parts(u).fix(n, c.d * c.d), u.cuts.len() + 1))
            }
        })
        .collect();

    let mut lmis = Vec::with_capacity(built.len());
    let mut nonneg = Vec::new();
    let mut offsets = Vec::with_capacity(built.len());
    let mut next = n;
    for b in built {
        let (lmi, extra) = b?;
        let mut map: Vec<usize> = (0..n).collect();
        map.extend(next..next + extra);
        nonneg.extend(next..next + extra);
        offsets.push((next, extra));
        next += extra;
        lmis.push((lmi, map));
    }
    let num_vars = next;
    let mut objective = vec![0.0; num_vars];
    for (o, a) in objective.iter_mut().zip(p.objective.iter()) {
        *o = -a;
    }
    let sol = solve_lmis(&lmis, num_vars, &nonneg, &objective, &opts.sdp)?;
    let x = DVector::from_column_slice(&sol.y[..n]);
    let multipliers = p
        .constraints
        .iter()
        .zip(&offsets)
        .map(|(c, &(start, len))| {
            if len == 0 {
                vec![0.0; c.uncertainty.cuts.len() + 1]
            } else {
                sol.y[start..start + len].iter().map(|v| v.max(0.0)).collect()
            }
        })
        .collect();
    Ok(RsocpSolution {
        objective_value: p.objective.dot(&x),
        x: x.iter().copied().collect(),
        multipliers,
        hypotheses,
        sdp_status: sol.status,
        sdp_iterations: sol.iterations,
    })
}

/// The inner problem `min_u −‖r₀ + (I_k ⊗ x̃ᵀ)u‖²` over the ball and cuts in
/// `u` coordinates. Zero cuts with `β ≥ 0` are dropped.
pub fn inner_problem(x: &DVector<f64>, u: &MatrixUncertaintySet) -> Result<TrustRegionProblem> {
    let (k, n) = (u.rows(), u.dim());
    if x.len() != n {
        return Err(invalid(format!(
            "point has length {} but the uncertainty acts on {n}",
            x.len()
        )));
    }
    if u.rho == 0.0 {
        return Err(invalid("inner problem needs rho > 0"));
    }
    let xt = x_tilde(x);
    let r0 = u.nominal_residual(x);
    let xxt = &xt * xt.transpose();
    let hess = linalg::kron_identity(k, &xxt) * -1.0;
    let mut lin = DVector::zeros(k * (n + 1));
    for r in 0..k {
        lin.rows_mut(r * (n + 1), n + 1).copy_from(&(&xt * (-2.0 * r0[r])));
    }
    let constraints = u.u_constraints();
    let mut kept = Vec::new();
    for c in constraints.linear() {
        if c.normal.iter().all(|v| *v == 0.0) {
            if c.bound < 0.0 {
                return Err(invalid("uncertainty set is empty: a zero cut has a negative bound"));
            }
            continue;
        }
        kept.push(c.clone());
    }
    let objective = QuadraticForm::new(SymMatrix::symmetrize(hess)?, lin, -r0.norm_squared())?;
    TrustRegionProblem::new(objective, constraints.with_linear(kept)?)
}

/// `max_{Δ ∈ U} ‖(A⁽⁰⁾+ΔA)x − (a⁽⁰⁾+Δa)‖²` via the semidefinite relaxation of
/// the inner problem. The result is an upper bound, exact under the
/// hypotheses.
pub fn worst_case_residual(x: &DVector<f64>, u: &MatrixUncertaintySet) -> Result<f64> {
    if x.len() != u.dim() {
        return Err(invalid(format!(
            "point has length {} but the uncertainty acts on {}",
            x.len(),
            u.dim()
        )));
    }
    if u.rho == 0.0 {
        u.check_point_set()?;
        return Ok(u.residual(&u.delta_bar, x));
    }
    let p = inner_problem(x, u)?;
    let opts = RelaxationOptions {
        sdp: SolveOptions {
            tol: 1e-10,
            max_iter: 300,
            record_iterates: false,
        },
        ..RelaxationOptions::default()
    };
    let rel = relaxation::solve_relaxation_with(&p, &opts)?;
    Ok(-rel.sdp_value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioOptions {
    pub samples: usize,
    pub seed: u64,
    pub shards: usize,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            shards: 8,
        }
    }
}

/// Acceptance below this rate aborts the sampler.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub accepted: usize,
    pub drawn: usize,
    pub max_residual: f64,
    /// Maximizing `vec(Δ)`, column-major.
    pub argmax: Vec<f64>,
}

/// Largest residual at `x` over perturbations drawn uniformly from the
/// Frobenius ball and rejected against the cuts.
pub fn scenario_max_residual(
    x: &DVector<f64>,
    u: &MatrixUncertaintySet,
    opts: &ScenarioOptions,
) -> Result<ScenarioReport> {
    if x.len() != u.dim() {
        return Err(invalid(format!(
            "point has length {} but the uncertainty acts on {}",
            x.len(),
            u.dim()
        )));
    }
    if u.rho == 0.0 {
        u.check_point_set()?;
        return Ok(ScenarioReport {
            accepted: opts.samples,
            drawn: opts.samples,
            max_residual: u.residual(&u.delta_bar, x),
            argmax: linalg::vec(&u.delta_bar).iter().copied().collect(),
        });
    }
    let shards = opts.shards.max(1);
    let dim = u.perturbation_dim();
    let (k, m) = (u.rows(), u.dim() + 1);
    // (accepted, drawn, best residual, best vec Δ) per shard
    type Shard = (usize, usize, f64, DVector<f64>);
    let results: Vec<Result<Shard>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let target = opts.samples / shards + usize::from(shard < opts.samples % shards);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(shard as u64);
            let limit = ((target as f64 / MIN_ACCEPTANCE) as usize).max(1000);
            let (mut accepted, mut drawn) = (0, 0);
            let mut best = (f64::NEG_INFINITY, DVector::zeros(dim));
            while accepted < target {
                if drawn >= limit {
                    return Err(Error::Precondition {
                        message: format!("scenario acceptance fell below {MIN_ACCEPTANCE} after {drawn} draws"),
                        max_violation: 0.0,
                    });
                }
                drawn += 1;
                let mut v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = v.norm();
                if norm == 0.0 {
                    continue;
                }
                let radius = u.rho * rng.random::<f64>().powf(1.0 / dim as f64);
                v *= radius / norm;
                let delta = u.delta_bar.clone() + DMatrix::from_column_slice(k, m, v.as_slice());
                if u.violation(&delta) > 0.0 {
                    continue;
                }
                accepted += 1;
                let r = u.residual(&delta, x);
                if r > best.0 {
                    best = (r, linalg::vec(&delta));
                }
            }
            Ok((accepted, drawn, best.0, best.1))
        })
        .collect();
    let mut report = ScenarioReport {
        accepted: 0,
        drawn: 0,
        max_residual: f64::NEG_INFINITY,
        argmax: Vec::new(),
    };
    for r in results {
        let (acc, drawn, best, arg) = r?;
        report.accepted += acc;
        report.drawn += drawn;
        if best > report.max_residual {
            report.max_residual = best;
            report.argmax = arg.iter().copied().collect();
        }
    }
    Ok(report)
}

/// Perturbation that attains `(‖r₀‖ + ρ‖x̃‖)²` for matrix-norm sets.
pub fn aligned_perturbation(x: &DVector<f64>, u: &MatrixUncertaintySet) -> DMatrix<f64> {
    let xt = x_tilde(x);
    let r0 = u.nominal_residual(x);
    let dir = if r0.norm() > 0.0 {
        r0.normalize()
    } else {
        let mut e = DVector::zeros(u.rows());
        e[0] = 1.0;
        e
    };
    let u_rows = {
        let mut v = DVector::zeros(u.perturbation_dim());
        for r in 0..u.rows() {
            v.rows_mut(r * xt.len(), xt.len())
                .copy_from(&(&xt * (dir[r] * u.rho / xt.norm())));
        }
        v
    };
    &u.delta_bar + u.unstack_rows(&u_rows)
}
