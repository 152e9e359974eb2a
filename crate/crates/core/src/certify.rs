//! Global-optimality certificates, the Lagrangian dual, and S-lemma
//! multiplier searches.
//!
//! Throughout, `λ = (λ₀, λ₁, …, λ_m)` pairs with `(g₀, g₁, …, g_m)` where
//! `g₀(x) = ‖x − x₀‖² − α` and `gᵢ(x) = ‖Bx‖² + bᵢᵀx − βᵢ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, SymMatrix, DEFAULT_EIG_TOL};
use crate::oracle::{self, OracleOptions};
use crate::problem::{
    check_dimension_condition, check_slater, ConstraintSet, DimensionReport, QuadraticForm, SlaterReport,
    TrustRegionProblem,
};
use crate::relaxation::{self, RelaxationResult, FEAS_TOL};
use crate::sdp::{self, ConicProgram, SolveOptions, SolveStatus};

/// Nonnegative multipliers, ball first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OptimalityCertificate {
    lambda: Vec<f64>,
}

impl OptimalityCertificate {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(invalid("certificate needs at least the ball multiplier"));
        }
        if let Some(v) = lambda.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(invalid(format!("multipliers must be finite and >= 0, got {v}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    fn check_len(&self, m: usize) -> Result<()> {
        if self.lambda.len() != m + 1 {
            return Err(invalid(format!(
                "certificate has {} multipliers but the problem needs {}",
                self.lambda.len(),
                m + 1
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for OptimalityCertificate {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OptimalityCertificate> for Vec<f64> {
    fn from(c: OptimalityCertificate) -> Self {
        c.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub kkt_tol: f64,
    pub complementarity_tol: f64,
    pub second_order_tol: f64,
    /// Feasibility required of `x*`.
    pub feasibility_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            complementarity_tol: 1e-6,
            second_order_tol: 1e-8,
            feasibility_tol: FEAS_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateVerdict {
    pub lambda: Vec<f64>,
    pub kkt_residual: f64,
    pub complementarity_residual: f64,
    pub second_order_min_eig: f64,
    pub valid: bool,
}

/// `A + λ₀I + Σλᵢ BᵀB`
pub fn lagrangian_hessian(p: &TrustRegionProblem, lambda: &[f64]) -> SymMatrix {
    hessian_of(p.objective(), p.constraints(), lambda)
}

fn hessian_of(f: &QuadraticForm, c: &ConstraintSet, lambda: &[f64]) -> SymMatrix {
    let n = f.dim();
    let mut q = f.hessian().as_matrix() + DMatrix::identity(n, n) * lambda[0];
    if let Some(g) = c.curvature_gram() {
        let total: f64 = lambda[1..].iter().sum();
        q += g.as_matrix() * total;
    }
    SymMatrix::symmetrize(q).expect("square")
}

/// `a − 2λ₀x₀ + Σλᵢbᵢ`
fn linear_of(f: &QuadraticForm, c: &ConstraintSet, lambda: &[f64]) -> DVector<f64> {
    let mut l = f.linear() - c.center() * (2.0 * lambda[0]);
    for (li, con) in lambda[1..].iter().zip(c.linear()) {
        l += &con.normal * *li;
    }
    l
}

/// `γ + λ₀(‖x₀‖² − α) − Σλᵢβᵢ`
fn constant_of(f: &QuadraticForm, c: &ConstraintSet, lambda: &[f64]) -> f64 {
    let mut k = f.constant() + lambda[0] * (c.center().norm_squared() - c.radius_sq());
    for (li, con) in lambda[1..].iter().zip(c.linear()) {
        k -= li * con.bound;
    }
    k
}

pub fn verify_global_optimality(
    p: &TrustRegionProblem,
    x: &DVector<f64>,
    cert: &OptimalityCertificate,
) -> Result<CertificateVerdict> {
    verify_global_optimality_with(p, x, cert, &CertifyOptions::default())
}

/// Checks stationarity of the Lagrangian, complementary slackness and
/// positive semidefiniteness of the Lagrangian Hessian at `x`.
pub fn verify_global_optimality_with(
    p: &TrustRegionProblem,
    x: &DVector<f64>,
    cert: &OptimalityCertificate,
    opts: &CertifyOptions,
) -> Result<CertificateVerdict> {
    let c = p.constraints();
    if x.len() != p.dim() {
        return Err(invalid(format!(
            "x has length {} but the problem has dimension {}",
            x.len(),
            p.dim()
        )));
    }
    cert.check_len(p.num_linear())?;
    let viol = c.max_violation(x);
    if viol > opts.feasibility_tol {
        return Err(Error::Precondition {
            message: "x* is not feasible".into(),
            max_violation: viol,
        });
    }
    let lambda = cert.lambda();
    let q = lagrangian_hessian(p, lambda);
    let grad = q.as_matrix() * x * 2.0 + linear_of(p.objective(), c, lambda);
    let kkt_residual = grad.norm();

    let mut complementarity_residual = (lambda[0] * c.ball_value(x)).abs();
    for (li, g) in lambda[1..].iter().zip(c.constraint_values(x)) {
        complementarity_residual = complementarity_residual.max((li * g).abs());
    }
    let second_order_min_eig = linalg::min_eigenvalue(&q);
    let valid = kkt_residual <= opts.kkt_tol
        && complementarity_residual <= opts.complementarity_tol
        && second_order_min_eig >= -opts.second_order_tol;
    Ok(CertificateVerdict {
        lambda: lambda.to_vec(),
        kkt_residual,
        complementarity_residual,
        second_order_min_eig,
        valid,
    })
}

const PINV_TOL: f64 = 1e-10;
const RANGE_TOL: f64 = 1e-8;

/// `inf_x L(x, λ)` in closed form; `−∞` when the Lagrangian is unbounded below.
pub fn dual_function(p: &TrustRegionProblem, lambda: &[f64]) -> Result<f64> {
    if lambda.len() != p.num_linear() + 1 {
        return Err(invalid(format!(
            "dual point has {} multipliers but the problem needs {}",
            lambda.len(),
            p.num_linear() + 1
        )));
    }
    if lambda.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("dual point must be componentwise >= 0"));
    }
    let (f, c) = (p.objective(), p.constraints());
    let q = hessian_of(f, c, lambda);
    let eig = linalg::eig_sym(&q)?;
    if eig.min() < -PINV_TOL * eig.norm2().max(1.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let l = linear_of(f, c, lambda);
    let (z, resid) = linalg::pinv_solve(&q, &l, PINV_TOL)?;
    if resid > RANGE_TOL * (1.0 + l.norm()) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(constant_of(f, c, lambda) - 0.25 * l.dot(&z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityOptions {
    /// Each multiplier is searched in `[0, cap]`.
    pub cap: f64,
    pub rounds: usize,
    pub oracle: OracleOptions,
    pub relaxation: relaxation::RelaxationOptions,
}

impl Default for DualityOptions {
    fn default() -> Self {
        Self {
            cap: 100.0,
            rounds: 50,
            oracle: OracleOptions::default(),
            relaxation: relaxation::RelaxationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    /// `primal − dual`
    pub gap: f64,
    pub attained: bool,
    /// Maximizing multipliers found for the dual.
    pub multipliers: Vec<f64>,
    pub relaxation_value: f64,
    pub oracle_value: Option<f64>,
}

pub fn strong_duality_report(p: &TrustRegionProblem) -> Result<DualityReport> {
    strong_duality_report_with(p, &DualityOptions::default())
}

pub fn strong_duality_report_with(p: &TrustRegionProblem, opts: &DualityOptions) -> Result<DualityReport> {
    let rel = relaxation::solve_relaxation_with(p, &opts.relaxation)?;
    let oracle_value = match oracle::brute_force_min(p, &opts.oracle) {
        Ok(r) => Some(r.value),
        Err(Error::Infeasible(_)) => None,
        Err(e) => return Err(e),
    };
    let mut primal = f64::INFINITY;
    if rel.candidate_feasible {
        primal = rel.candidate_value;
    }
    if let Some(v) = oracle_value {
        primal = primal.min(v);
    }
    if !primal.is_finite() {
        return Err(Error::Infeasible("no feasible point found for the primal".into()));
    }
    let (multipliers, dual) = maximize_dual(p, &rel.multipliers, opts.cap, opts.rounds)?;
    let gap = primal - dual;
    Ok(DualityReport {
        primal,
        dual,
        gap,
        attained: gap <= 1e-6 * (1.0 + primal.abs()),
        multipliers,
        relaxation_value: rel.sdp_value,
        oracle_value,
    })
}

/// Projected coordinate ascent on the box `[0, cap]^{m+1}`: a dense scan per
/// coordinate then golden-section refinement around the best sample.
pub fn maximize_dual(p: &TrustRegionProblem, start: &[f64], cap: f64, rounds: usize) -> Result<(Vec<f64>, f64)> {
    let k = p.num_linear() + 1;
    if start.len() != k {
        return Err(invalid("dual start has the wrong length"));
    }
    let mut lam: Vec<f64> = start.iter().map(|v| v.clamp(0.0, cap)).collect();
    let eval = |l: &[f64]| dual_function(p, l);
    let mut best = eval(&lam)?;
    const SAMPLES: usize = 200;
    let h = cap / SAMPLES as f64;
    for _ in 0..rounds {
        let before = best;
        for i in 0..k {
            let mut trial = lam.clone();
            let mut arg = lam[i];
            for s in 0..=SAMPLES {
                trial[i] = s as f64 * h;
                let v = eval(&trial)?;
                if v > best {
                    best = v;
                    arg = trial[i];
                }
            }
            // Golden section on the bracket around the best sample.
            let (mut a, mut b) = ((arg - h).max(0.0), (arg + h).min(cap));
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut c1 = b - g * (b - a);
            let mut c2 = a + g * (b - a);
            trial[i] = c1;
            let mut f1 = eval(&trial)?;
            trial[i] = c2;
            let mut f2 = eval(&trial)?;
            for _ in 0..60 {
                if f1 >= f2 {
                    b = c2;
                    c2 = c1;
                    f2 = f1;
                    c1 = b - g * (b - a);
                    trial[i] = c1;
                    f1 = eval(&trial)?;
                } else {
                    a = c1;
                    c1 = c2;
                    f1 = f2;
                    c2 = a + g * (b - a);
                    trial[i] = c2;
                    f2 = eval(&trial)?;
                }
            }
            for (t, v) in [(c1, f1), (c2, f2)] {
                if v > best {
                    best = v;
                    arg = t;
                }
            }
            lam[i] = arg;
        }
        if best.is_finite() && best - before <= 1e-14 * (1.0 + best.abs()) {
            break;
        }
    }
    Ok((lam, best))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifiedSolution {
    pub x: Vec<f64>,
    pub verdict: CertificateVerdict,
}

/// Builds a certificate for the relaxation's candidate, trying the conic dual
/// multipliers and a least-squares refit on the active constraints.
pub fn certify_relaxation(p: &TrustRegionProblem, rel: &RelaxationResult) -> Result<CertifiedSolution> {
    certify_relaxation_with(p, rel, &CertifyOptions::default())
}

pub fn certify_relaxation_with(
    p: &TrustRegionProblem,
    rel: &RelaxationResult,
    opts: &CertifyOptions,
) -> Result<CertifiedSolution> {
    let x = DVector::from_column_slice(&rel.candidate);
    let mut tries = vec![rel.multipliers.clone()];
    tries.push(polish_multipliers(p, &x)?);
    let mut best: Option<CertificateVerdict> = None;
    for lam in tries {
        let cert = OptimalityCertificate::new(lam)?;
        let v = verify_global_optimality_with(p, &x, &cert, opts)?;
        let rank = |v: &CertificateVerdict| (!v.valid, v.kkt_residual.max(v.complementarity_residual));
        if best.as_ref().is_none_or(|b| rank(&v) < rank(b)) {
            best = Some(v);
        }
    }
    Ok(CertifiedSolution {
        x: rel.candidate.clone(),
        verdict: best.expect("at least one try"),
    })
}

/// Least-squares multipliers on the active set, clamped at zero.
pub fn polish_multipliers(p: &TrustRegionProblem, x: &DVector<f64>) -> Result<Vec<f64>> {
    let c = p.constraints();
    let f = p.objective();
    let m = p.num_linear();
    let active_tol = 1e-6;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut idx = Vec::new();
    if c.ball_value(x).abs() <= active_tol {
        cols.push((x - c.center()) * 2.0);
        idx.push(0);
    }
    let gram = c.curvature_gram();
    for (i, (l, g)) in c.linear().iter().zip(c.constraint_values(x)).enumerate() {
        if g.abs() <= active_tol {
            let mut col = l.normal.clone();
            if let Some(q) = &gram {
                col += q.as_matrix() * x * 2.0;
            }
            cols.push(col);
            idx.push(i + 1);
        }
    }
    let mut out = vec![0.0; m + 1];
    if cols.is_empty() {
        return Ok(out);
    }
    let jac = DMatrix::from_columns(&cols);
    let rhs = -f.gradient(x);
    let sol = jac
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| invalid(format!("multiplier least squares failed: {e}")))?;
    for (k, &i) in idx.iter().enumerate() {
        out[i] = sol[k].max(0.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SLemmaOutcome {
    pub certificate: Option<OptimalityCertificate>,
    /// `λ_min(M_γ + λ₀H₀ + ΣλᵢHᵢ)` at the returned multipliers.
    pub min_eig: Option<f64>,
    /// Largest shift `t` with `M_γ + ΣλH − tI ⪰ 0` at bounded multipliers.
    pub best_shift: f64,
    pub slater: SlaterReport,
    pub dimension_condition: DimensionReport,
}

/// Bound on `Σλ` during the feasibility phase.
const PHASE1_BOUND: f64 = 1e4;
const SLEMMA_FEAS_TOL: f64 = 1e-7;

/// Homogenized matrices `M_γ`, `H₀`, `Hᵢ` of order `n + 1`.
fn homogenized(f: &QuadraticForm, c: &ConstraintSet, corner_bump: f64) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = f.dim();
    let bordered = |top: &DMatrix<f64>, lin: &DVector<f64>, corner: f64| {
        let mut out = DMatrix::zeros(n + 1, n + 1);
        out.view_mut((0, 0), (n, n)).copy_from(top);
        for i in 0..n {
            out[(i, n)] = lin[i];
            out[(n, i)] = lin[i];
        }
        out[(n, n)] = corner;
        out
    };
    let m = bordered(f.hessian().as_matrix(), &(f.linear() * 0.5), f.constant() + corner_bump);
    let x0 = c.center();
    let mut hs = vec![bordered(
        &DMatrix::identity(n, n),
        &(-x0),
        x0.norm_squared() - c.radius_sq(),
    )];
    let top = c
        .curvature_gram()
        .map(SymMatrix::into_matrix)
        .unwrap_or_else(|| DMatrix::zeros(n, n));
    for l in c.linear() {
        hs.push(bordered(&top, &(&l.normal * 0.5), -l.bound));
    }
    (m, hs)
}

/// LMI `M + Σλⱼ Hⱼ − t I ⪰ 0`, `λ ≥ 0`, as a dual-form conic program.
///
/// With `shift = None` the program maximizes `t` under `Σλ ≤ PHASE1_BOUND`;
/// otherwise `t` is fixed to `shift` and `Σλ` is minimized.
fn lmi_program(m: &DMatrix<f64>, hs: &[DMatrix<f64>], shift: Option<f64>) -> ConicProgram {
    let order = m.nrows();
    let k = hs.len();
    let mut sizes = vec![order];
    sizes.extend(std::iter::repeat_n(1, k));
    if shift.is_none() {
        sizes.push(1);
    }
    let mut prog = ConicProgram::new(sizes).expect("valid blocks");
    let mut c = prog.zero_block_matrix();
    *c.block_mut(0) = match shift {
        Some(t) => m - DMatrix::identity(order, order) * t,
        None => m.clone(),
    };
    if shift.is_none() {
        c.set_sym(k + 1, 0, 0, PHASE1_BOUND);
    }
    prog.set_objective(c).expect("conforming");
    // S = C − Σ yⱼAⱼ with yⱼ = λⱼ requires Aⱼ = −Hⱼ on the LMI block.
    for (j, h) in hs.iter().enumerate() {
        let mut a = prog.zero_block_matrix();
        *a.block_mut(0) = -h;
        a.set_sym(1 + j, 0, 0, -1.0);
        if shift.is_none() {
            a.set_sym(k + 1, 0, 0, 1.0);
        }
        let cost = if shift.is_none() { 0.0 } else { -1.0 };
        prog.add_constraint(a, cost).expect("conforming");
    }
    if shift.is_none() {
        let mut a = prog.zero_block_matrix();
        *a.block_mut(0) = DMatrix::identity(order, order);
        prog.add_constraint(a, 1.0).expect("conforming");
    }
    prog
}

fn lmi_min_eig(m: &DMatrix<f64>, hs: &[DMatrix<f64>], lambda: &[f64]) -> f64 {
    let mut s = m.clone();
    for (h, l) in hs.iter().zip(lambda) {
        s += h * *l;
    }
    linalg::min_eigenvalue(&SymMatrix::symmetrize(s).expect("square"))
}

struct LmiSearch {
    lambda: Option<Vec<f64>>,
    best_shift: f64,
}

fn search_multipliers(m: &DMatrix<f64>, hs: &[DMatrix<f64>]) -> Result<LmiSearch> {
    let k = hs.len();
    let scale = 1.0 + m.amax();
    // Certificates often sit on a single-point face, where multiplier error
    // tracks the square root of the gap.
    let opts = SolveOptions {
        tol: 1e-13,
        max_iter: 400,
        ..SolveOptions::default()
    };
    let phase1 = lmi_program(m, hs, None);
    let sol = sdp::solve(&phase1, &opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::SolverFailure {
            message: format!("S-lemma phase 1 ended with {:?}", sol.status),
            residual: sdp::residuals(&phase1, &sol).dual_infeas,
        });
    }
    let best_shift = sol.y[k];
    if best_shift < -SLEMMA_FEAS_TOL * scale {
        return Ok(LmiSearch {
            lambda: None,
            best_shift,
        });
    }
    let shift = best_shift.min(0.0);
    let phase2 = lmi_program(m, hs, Some(shift));
    let sol2 = sdp::solve(&phase2, &opts)?;
    let lambda: Vec<f64> = if sol2.status == SolveStatus::Optimal {
        (0..k).map(|j| sol2.y[j].max(0.0)).collect()
    } else {
        (0..k).map(|j| sol.y[j].max(0.0)).collect()
    };
    Ok(LmiSearch {
        lambda: Some(lambda),
        best_shift,
    })
}

/// Searches for `λ ≥ 0` making `f + λ₀g₀ + Σλᵢgᵢ` nonnegative everywhere,
/// preferring the smallest `Σλ`.
pub fn slemma_certificate(f: &QuadraticForm, c: &ConstraintSet) -> Result<SLemmaOutcome> {
    if f.dim() != c.dim() {
        return Err(invalid("objective and constraint dimensions differ"));
    }
    let (m, hs) = homogenized(f, c, 0.0);
    let search = search_multipliers(&m, &hs)?;
    let slater = check_slater(c);
    let dimension_condition = check_dimension_condition(f, c, DEFAULT_EIG_TOL)?;
    let (certificate, min_eig) = match search.lambda {
        Some(l) => {
            let e = lmi_min_eig(&m, &hs, &l);
            (Some(OptimalityCertificate::new(l)?), Some(e))
        }
        None => (None, None),
    };
    Ok(SLemmaOutcome {
        certificate,
        min_eig,
        best_shift: search.best_shift,
        slater,
        dimension_condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticCertificate {
    pub certificate: OptimalityCertificate,
    pub epsilon: f64,
    /// `λ_min` of the bumped homogenized matrix.
    pub min_eig: f64,
}

/// Multipliers making `f + λ₀g₀ + Σλᵢgᵢ + ε` nonnegative everywhere.
pub fn asymptotic_certificate(f: &QuadraticForm, c: &ConstraintSet, epsilon: f64) -> Result<AsymptoticCertificate> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("epsilon must be finite and > 0, got {epsilon}")));
    }
    if f.dim() != c.dim() {
        return Err(invalid("objective and constraint dimensions differ"));
    }
    let attempt = |eps: f64| -> Result<Option<(Vec<f64>, f64)>> {
        let (m, hs) = homogenized(f, c, eps);
        let s = search_multipliers(&m, &hs)?;
        Ok(s.lambda.map(|l| {
            let e = lmi_min_eig(&m, &hs, &l);
            (l, e)
        }))
    };
    if let Some((l, e)) = attempt(epsilon)? {
        return Ok(AsymptoticCertificate {
            certificate: OptimalityCertificate::new(l)?,
            epsilon,
            min_eig: e,
        });
    }
    // Bracket the smallest feasible ε above the request.
    let mut lo = epsilon;
    let mut hi = epsilon;
    let mut found = None;
    for _ in 0..60 {
        hi *= 2.0;
        if attempt(hi)?.is_some() {
            found = Some(hi);
            break;
        }
        lo = hi;
    }
    if let Some(mut h) = found {
        for _ in 0..30 {
            let mid = 0.5 * (lo + h);
            if attempt(mid)?.is_some() {
                h = mid;
            } else {
                lo = mid;
            }
        }
        found = Some(h);
    }
    Err(Error::EpsilonTooSmall {
        requested: epsilon,
        smallest_feasible: found,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(s)
    }

    fn cert(l: &[f64]) -> OptimalityCertificate {
        OptimalityCertificate::new(l.to_vec()).unwrap()
    }

    #[test]
    fn curved_constraint_certificate() {
        let p = fixtures::curved_constraint();
        let r = verify_global_optimality(&p, &v(&[0.0, 1.0, 0.0]), &cert(&[1.0, 1.0])).unwrap();
        assert!(r.valid);
        assert!(r.kkt_residual <= 1e-12);
        assert!(r.complementarity_residual <= 1e-12);
        assert!(r.second_order_min_eig >= -1e-12);
    }

    #[test]
    fn convex_interior_minimum() {
        let p =
            TrustRegionProblem::from_parts(SymMatrix::identity(2), v(&[0.0, 0.0]), 0.0, v(&[0.0, 0.0]), 1.0, vec![])
                .unwrap();
        assert!(
            verify_global_optimality(&p, &v(&[0.0, 0.0]), &cert(&[0.0]))
                .unwrap()
                .valid
        );
        let bad = verify_global_optimality(&p, &v(&[0.5, 0.0]), &cert(&[0.0])).unwrap();
        assert!(!bad.valid);
    }

    #[test]
    fn infeasible_point_rejected() {
        let p = fixtures::curved_constraint();
        let e = verify_global_optimality(&p, &v(&[3.0, 0.0, 0.0]), &cert(&[1.0, 1.0])).unwrap_err();
        assert!(matches!(e, Error::Precondition { .. }));
        assert!(OptimalityCertificate::new(vec![-1.0]).is_err());
        assert!(verify_global_optimality(&p, &v(&[0.0, 1.0, 0.0]), &cert(&[1.0])).is_err());
    }

    #[test]
    fn dual_function_lagrangian_gap() {
        let p = fixtures::single_point();
        assert_eq!(dual_function(&p, &[0.5, 0.0, 0.0]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(dual_function(&p, &[1.0, 0.0, 0.0]).unwrap(), f64::NEG_INFINITY);
        // λ₀ > 1: −Σℓᵢ²/(4(λ₀−1)) with ℓ = (3+λ₁+λ₂−2λ₀, 2+λ₂, 2+λ₂).
        let (l0, l1, l2) = (3.0, 1.0, 0.5);
        let l = [3.0 + l1 + l2 - 2.0 * l0, 2.0 + l2, 2.0 + l2];
        let want = -l.iter().map(|x| x * x).sum::<f64>() / (4.0 * (l0 - 1.0));
        assert_relative_eq!(dual_function(&p, &[l0, l1, l2]).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn dual_function_unconstrained_convex() {
        let a = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let lin = v(&[1.0, -1.0]);
        let p = TrustRegionProblem::from_parts(a.clone(), lin.clone(), 0.7, v(&[0.0, 0.0]), 1.0, vec![]).unwrap();
        let ainv = a.as_matrix().clone().try_inverse().unwrap();
        let want = 0.7 - 0.25 * lin.dot(&(ainv * &lin));
        assert_relative_eq!(dual_function(&p, &[0.0]).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn dual_function_concave_on_segments() {
        let p = fixtures::curved_constraint();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for _ in 0..500 {
            let a: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..4.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..4.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let (fa, fb, fm) = (
                dual_function(&p, &a).unwrap(),
                dual_function(&p, &b).unwrap(),
                dual_function(&p, &mid).unwrap(),
            );
            if fa.is_finite() && fb.is_finite() && fm.is_finite() {
                assert!(fm >= fa.min(fb) - 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn strong_duality_curved_constraint() {
        let r = strong_duality_report(&fixtures::curved_constraint()).unwrap();
        assert_relative_eq!(r.primal, -1.0, epsilon = 1e-6);
        assert!(r.attained, "{r:?}");
    }

    #[test]
    fn strong_duality_fails_lagrangian_gap() {
        let r = strong_duality_report(&fixtures::single_point()).unwrap();
        assert!(r.primal.abs() <= 1e-6);
        assert!(r.dual <= -0.01, "{r:?}");
        assert!(r.gap > 0.0 && !r.attained);
    }

    #[test]
    fn relaxation_certificate_curved_constraint() {
        let p = fixtures::curved_constraint();
        let rel = relaxation::solve_relaxation(&p).unwrap();
        let c = certify_relaxation(&p, &rel).unwrap();
        assert!(c.verdict.valid, "{c:?}");
    }

    #[test]
    fn slemma_trivial() {
        let f = QuadraticForm::new(SymMatrix::identity(2), v(&[0.0, 0.0]), 0.0).unwrap();
        let c = ConstraintSet::new(v(&[0.0, 0.0]), 1.0, vec![], None).unwrap();
        let out = slemma_certificate(&f, &c).unwrap();
        let l = out.certificate.unwrap();
        assert!(l.lambda()[0] <= 1e-6);
        assert!(out.min_eig.unwrap() >= -1e-8);
    }

    #[test]
    fn slemma_fails_without_slater() {
        let (f, c) = fixtures::asymptotic();
        let out = slemma_certificate(&f, &c).unwrap();
        assert!(out.certificate.is_none(), "{out:?}");
        assert!(!out.slater.holds());
    }

    #[test]
    fn slemma_curved_constraint_shifted() {
        let p = fixtures::curved_constraint();
        let f = p.objective().with_constant(1.0);
        let out = slemma_certificate(&f, p.constraints()).unwrap();
        let l = out.certificate.clone().expect("certificate exists");
        assert_relative_eq!(l.lambda()[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(l.lambda()[1], 1.0, epsilon = 1e-4);
        assert!(out.min_eig.unwrap() >= -1e-8);
    }

    #[test]
    fn asymptotic_asymptotic() {
        let (f, c) = fixtures::asymptotic();
        for eps in [1.0, 0.1, 0.01] {
            let a = asymptotic_certificate(&f, &c, eps).unwrap();
            assert!(a.min_eig >= -1e-8);
            assert_relative_eq!(a.certificate.lambda()[0] * eps, 0.25, epsilon = 1e-3);
        }
    }

    #[test]
    fn asymptotic_reports_smallest_epsilon() {
        // f = −1 can only be lifted to nonnegative by ε ≥ 1.
        let f = QuadraticForm::new(SymMatrix::zeros(1), v(&[0.0]), -1.0).unwrap();
        let c = ConstraintSet::new(v(&[0.0]), 1.0, vec![], None).unwrap();
        match asymptotic_certificate(&f, &c, 0.25) {
            Err(Error::EpsilonTooSmall {
                requested,
                smallest_feasible,
            }) => {
                assert_eq!(requested, 0.25);
                let s = smallest_feasible.unwrap();
                assert!((0.25..1.0 + 1e-3).contains(&s), "{s}");
            }
            other => panic!("expected EpsilonTooSmall, got {other:?}"),
        }
    }
}
