//! Semidefinite relaxation of the extended trust-region problem.
//!
//! With `x̃ = (x, 1)` the objective and constraints are traces against
//! `x̃x̃ᵀ`; the relaxation replaces `x̃x̃ᵀ` by any PSD `X` with `X[n,n] = 1`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix, DEFAULT_EIG_TOL};
use crate::problem::{DimensionReport, LinearConstraint, TrustRegionProblem};
use crate::sdp::{self, ConicProgram, ConicSolution, SolveOptions, SolveStatus};

/// Feasibility tolerance for extracted candidates.
pub const FEAS_TOL: f64 = 1e-7;
/// Relative gap under which the relaxation is declared exact.
pub const EXACT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationMatrices {
    pub m: SymMatrix,
    pub h0: SymMatrix,
    pub h: Vec<SymMatrix>,
}

/// Lifted data `M`, `H₀`, `Hᵢ` of order `n + 1`.
pub fn relaxation_matrices(p: &TrustRegionProblem) -> RelaxationMatrices {
    let n = p.dim();
    let f = p.objective();
    let c = p.constraints();
    let bordered = |top: &DMatrix<f64>, lin: &DVector<f64>, corner: f64| {
        let mut out = DMatrix::zeros(n + 1, n + 1);
        out.view_mut((0, 0), (n, n)).copy_from(top);
        for i in 0..n {
            out[(i, n)] = lin[i];
            out[(n, i)] = lin[i];
        }
        out[(n, n)] = corner;
        SymMatrix::symmetrize(out).expect("square")
    };
    let m = bordered(f.hessian().as_matrix(), &(f.linear() * 0.5), 0.0);
    let x0 = c.center();
    let h0 = bordered(&DMatrix::identity(n, n), &(-x0), x0.norm_squared() - c.radius_sq());
    let top = c
        .curvature_gram()
        .map(SymMatrix::into_matrix)
        .unwrap_or_else(|| DMatrix::zeros(n, n));
    let h = c
        .linear()
        .iter()
        .map(|l| bordered(&top, &(&l.normal * 0.5), -l.bound))
        .collect();
    RelaxationMatrices { m, h0, h }
}

/// `min Tr(MX)` s.t. `Tr(H₀X)+s₀ = 0`, `Tr(HᵢX)+sᵢ = 0`, `X[n,n] = 1`,
/// over `S^{n+1}₊ × ℝ₊^{m+1}`.
pub fn build_sdrp(p: &TrustRegionProblem) -> ConicProgram {
    let n = p.dim();
    let mats = relaxation_matrices(p);
    let m = mats.h.len();
    let mut sizes = vec![n + 1];
    sizes.extend(std::iter::repeat_n(1, m + 1));
    let mut prog = ConicProgram::new(sizes).expect("valid block structure");

    let mut c = prog.zero_block_matrix();
    *c.block_mut(0) = mats.m.into_matrix();
    prog.set_objective(c).expect("conforming");

    for (j, h) in std::iter::once(&mats.h0).chain(&mats.h).enumerate() {
        let mut a = prog.zero_block_matrix();
        *a.block_mut(0) = h.as_matrix().clone();
        a.set_sym(1 + j, 0, 0, 1.0);
        prog.add_constraint(a, 0.0).expect("conforming");
    }
    let mut a = prog.zero_block_matrix();
    a.set_sym(0, n, n, 1.0);
    prog.add_constraint(a, 1.0).expect("conforming");
    prog
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationOptions {
    pub sdp: SolveOptions,
    /// Eigenvalue tolerance for the dimension condition.
    pub eig_tol: f64,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self {
            sdp: SolveOptions::default(),
            eig_tol: DEFAULT_EIG_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxationResult {
    pub sdp_value: f64,
    /// Lifted primal solution, order `n + 1`.
    #[serde(skip)]
    pub x_matrix: DMatrix<f64>,
    pub candidate: Vec<f64>,
    pub candidate_value: f64,
    pub exact: bool,
    /// `candidate_value − sdp_value`
    pub gap: f64,
    pub candidate_feasible: bool,
    /// Conic dual multipliers `(λ₀, λ₁, …, λ_m)`.
    pub multipliers: Vec<f64>,
    pub dimension_condition: DimensionReport,
    pub sdp_status: SolveStatus,
    pub sdp_iterations: usize,
}

pub fn solve_relaxation(p: &TrustRegionProblem) -> Result<RelaxationResult> {
    solve_relaxation_with(p, &RelaxationOptions::default())
}

pub fn solve_relaxation_with(p: &TrustRegionProblem, opts: &RelaxationOptions) -> Result<RelaxationResult> {
    let prog = build_sdrp(p);
    let sol = sdp::solve(&prog, &opts.sdp)?;
    check_status(&prog, &sol)?;

    let n = p.dim();
    let m = p.num_linear();
    let x_matrix = sol.x.block(0).clone();
    let gamma = p.objective().constant();
    let sdp_value = sol.primal_value + gamma;
    let multipliers: Vec<f64> = (0..=m).map(|j| (-sol.y[j]).max(0.0)).collect();

    let (candidate, feasible) = match extract_candidate(&x_matrix, p) {
        Ok(x) => (x, true),
        Err(Error::Extraction { best, .. }) => (DVector::from_vec(best), false),
        Err(e) => return Err(e),
    };
    debug_assert_eq!(candidate.len(), n);
    let candidate_value = p.objective().eval(&candidate);
    let gap = candidate_value - sdp_value;
    let exact = feasible && gap <= EXACT_TOL * (1.0 + sdp_value.abs());

    Ok(RelaxationResult {
        sdp_value,
        x_matrix,
        candidate: candidate.iter().copied().collect(),
        candidate_value,
        exact,
        gap,
        candidate_feasible: feasible,
        multipliers,
        dimension_condition: p.check_dimension_condition(opts.eig_tol)?,
        sdp_status: sol.status,
        sdp_iterations: sol.iterations,
    })
}

fn check_status(prog: &ConicProgram, sol: &ConicSolution) -> Result<()> {
    match sol.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => Err(Error::Infeasible(
            sol.diagnostic
                .clone()
                .unwrap_or_else(|| "relaxation is infeasible".into()),
        )),
        _ => {
            let r = sdp::residuals(prog, sol);
            Err(Error::SolverFailure {
                message: format!(
                    "conic solve ended with status {:?}: {}",
                    sol.status,
                    sol.diagnostic.as_deref().unwrap_or("")
                ),
                residual: r.primal_infeas.max(r.dual_infeas).max(r.gap),
            })
        }
    }
}

/// Recovers a feasible point of `p` from a lifted relaxation solution.
///
/// Candidates are the last column of `X` and the top eigenvector of `X`,
/// each followed by a line search along `Ker(A − λ_min I) ∩ Ker B ∩ bᵢ⊥`
/// out to the sphere. The feasible candidate with the lowest objective wins.
pub fn extract_candidate(x_matrix: &DMatrix<f64>, p: &TrustRegionProblem) -> Result<DVector<f64>> {
    let n = p.dim();
    if x_matrix.nrows() != n + 1 || x_matrix.ncols() != n + 1 {
        return Err(crate::error::invalid(format!(
            "lifted matrix must be {0}x{0}, got {1}x{2}",
            n + 1,
            x_matrix.nrows(),
            x_matrix.ncols()
        )));
    }
    let corner = x_matrix[(n, n)];
    let mut raw = Vec::new();
    if corner > 0.0 {
        raw.push(x_matrix.view((0, n), (n, 1)).column(0) / corner);
    }
    let sym = SymMatrix::symmetrize(x_matrix.clone())?;
    let eig = linalg::eig_sym(&sym)?;
    let top = eig.eigenvectors.column(n);
    if top[n].abs() > 1e-12 {
        raw.push(top.rows(0, n) / top[n]);
    }

    let directions = purification_directions(p)?;
    let f = p.objective();
    let c = p.constraints();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut least_violating: Option<(f64, DVector<f64>)> = None;
    for y in raw {
        let purified = purify(&y, &directions, p);
        for cand in [y, purified] {
            let viol = c.max_violation(&cand);
            if viol <= FEAS_TOL {
                let val = f.eval(&cand);
                if best.as_ref().is_none_or(|(bv, _)| val < *bv) {
                    best = Some((val, cand));
                }
            } else if least_violating.as_ref().is_none_or(|(bv, _)| viol < *bv) {
                least_violating = Some((viol, cand));
            }
        }
    }
    match (best, least_violating) {
        (Some((_, x)), _) => Ok(refine_kkt(p, &x).unwrap_or(x)),
        (None, Some((viol, x))) => Err(Error::Extraction {
            message: "no candidate from the relaxation is feasible".into(),
            best: x.iter().copied().collect(),
            max_violation: viol,
        }),
        (None, None) => Err(Error::Extraction {
            message: "lifted matrix has no usable rank-one component".into(),
            best: vec![0.0; n],
            max_violation: f64::INFINITY,
        }),
    }
}

/// Newton's method on the KKT system of the constraints active at `x`.
///
/// Returns the refined point only if Newton converges nearby, the point stays
/// feasible with nonnegative multipliers, and the objective does not rise.
fn refine_kkt(p: &TrustRegionProblem, x: &DVector<f64>) -> Option<DVector<f64>> {
    const ACTIVE_TOL: f64 = 1e-6;
    let n = p.dim();
    let f = p.objective();
    let c = p.constraints();
    let gram = c.curvature_gram().map(SymMatrix::into_matrix);
    let ball_active = c.ball_value(x).abs() <= ACTIVE_TOL;
    let lin_active: Vec<usize> = c
        .constraint_values(x)
        .iter()
        .enumerate()
        .filter(|(_, g)| g.abs() <= ACTIVE_TOL)
        .map(|(i, _)| i)
        .collect();
    let k = usize::from(ball_active) + lin_active.len();

    let values = |y: &DVector<f64>| -> Vec<f64> {
        let mut out = Vec::with_capacity(k);
        if ball_active {
            out.push(c.ball_value(y));
        }
        let g = c.constraint_values(y);
        out.extend(lin_active.iter().map(|&i| g[i]));
        out
    };
    let gradients = |y: &DVector<f64>| -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(k);
        if ball_active {
            out.push((y - c.center()) * 2.0);
        }
        for &i in &lin_active {
            let mut g = c.linear()[i].normal.clone();
            if let Some(q) = &gram {
                g += q * y * 2.0;
            }
            out.push(g);
        }
        out
    };

    let mut y = x.clone();
    let grads = gradients(&y);
    let mut mu = if k == 0 {
        DVector::zeros(0)
    } else {
        DMatrix::from_columns(&grads)
            .svd(true, true)
            .solve(&(-f.gradient(&y)), 1e-12)
            .ok()?
    };
    let scale = 1.0 + f.gradient(&y).norm();
    let mut converged = false;
    for _ in 0..30 {
        let grads = gradients(&y);
        let mut stat = f.gradient(&y);
        for (g, m) in grads.iter().zip(mu.iter()) {
            stat += g * *m;
        }
        let vals = values(&y);
        let res = stat.norm().max(vals.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
        if res <= 1e-13 * scale {
            converged = true;
            break;
        }
        let mut hess = f.hessian().as_matrix() * 2.0;
        let mut col = 0;
        if ball_active {
            hess += DMatrix::<f64>::identity(n, n) * (2.0 * mu[0]);
            col = 1;
        }
        if let Some(q) = &gram {
            for j in col..k {
                hess += q * (2.0 * mu[j]);
            }
        }
        let mut jac = DMatrix::zeros(n + k, n + k);
        jac.view_mut((0, 0), (n, n)).copy_from(&hess);
        for (j, g) in grads.iter().enumerate() {
            jac.view_mut((0, n + j), (n, 1)).copy_from(g);
            jac.view_mut((n + j, 0), (1, n)).copy_from(&g.transpose());
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&stat);
        for (j, v) in vals.iter().enumerate() {
            rhs[n + j] = *v;
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax {
            return None;
        }
        let step = svd.solve(&rhs, 0.0).ok()?;
        y -= step.rows(0, n);
        mu -= step.rows(n, k);
        if (&y - x).norm() > 1e-3 * (1.0 + x.norm()) {
            return None;
        }
    }
    let current = f.eval(x);
    let refined = f.eval(&y);
    let accept = converged
        && mu.iter().all(|m| *m >= -1e-9)
        && c.max_violation(&y) <= FEAS_TOL.min(c.max_violation(x).max(1e-12))
        && refined <= current + 1e-7 * (1.0 + current.abs());
    accept.then_some(y)
}

/// Orthonormal basis of `Ker(A − λ_min I) ∩ Ker B ∩ {bᵢ}⊥`.
fn purification_directions(p: &TrustRegionProblem) -> Result<DMatrix<f64>> {
    let n = p.dim();
    let eigenspace = linalg::min_eig_multiplicity(p.objective().hessian(), DEFAULT_EIG_TOL)?;
    let c = p.constraints();
    let mut rows: Vec<DVector<f64>> = c.normals();
    if let Some(b) = c.curvature() {
        rows.extend(b.row_iter().map(|r| r.transpose()));
    }
    if rows.is_empty() {
        return Ok(eigenspace.basis);
    }
    let mut k = DMatrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        k.row_mut(i).copy_from(&r.transpose());
    }
    Ok(crate::problem::joint_kernel(&eigenspace.basis, &k, DEFAULT_EIG_TOL))
}

/// Moves `y` along each direction to the sphere `‖x − x₀‖² = α`, keeping a
/// step only when it does not increase the objective.
fn purify(y: &DVector<f64>, directions: &DMatrix<f64>, p: &TrustRegionProblem) -> DVector<f64> {
    let f = p.objective();
    let c = p.constraints();
    let mut x = y.clone();
    for v in directions.column_iter() {
        let v = v.into_owned();
        let d = &x - c.center();
        let half_b = v.dot(&d);
        let c0 = d.norm_squared() - c.radius_sq();
        let disc = half_b * half_b - c0;
        if disc < 0.0 {
            continue;
        }
        let root = disc.sqrt();
        let current = f.eval(&x);
        let mut next: Option<(f64, DVector<f64>)> = None;
        for t in [-half_b + root, -half_b - root] {
            let cand = &x + &v * t;
            let val = f.eval(&cand);
            if next.as_ref().is_none_or(|(nv, _)| val < *nv) {
                next = Some((val, cand));
            }
        }
        if let Some((val, cand)) = next {
            if val <= current + 1e-12 * (1.0 + current.abs()) {
                x = cand;
            }
        }
    }
    x
}

/// Replaces a constraint `(bᵀx)² ≤ r` by `bᵀx ≤ √r` and `−bᵀx ≤ √r`.
pub fn rank_one_reformulate(p0: &TrustRegionProblem, b: &DVector<f64>, r: f64) -> Result<TrustRegionProblem> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(crate::error::invalid(format!(
            "rank-one bound r must be finite and >= 0, got {r}"
        )));
    }
    if b.len() != p0.dim() {
        return Err(crate::error::invalid(format!(
            "rank-one vector has length {} but the problem has dimension {}",
            b.len(),
            p0.dim()
        )));
    }
    let root = r.sqrt();
    let mut linear = p0.constraints().linear().to_vec();
    linear.push(LinearConstraint::new(b.clone(), root));
    linear.push(LinearConstraint::new(-b, root));
    TrustRegionProblem::new(p0.objective().clone(), p0.constraints().with_linear(linear)?)
}

/// Lifted solution of the form `x̃x̃ᵀ` for `x̃ = (x, 1)`.
pub fn lift(x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut xt = DVector::zeros(n + 1);
    xt.rows_mut(0, n).copy_from(x);
    xt[n] = 1.0;
    &xt * xt.transpose()
}
