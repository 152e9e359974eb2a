//! Primal–dual interior-point solver for small dense block-diagonal SDPs.
//!
//! Primal and dual are
//!
//! ```text
//! (P)  min ⟨C, X⟩  s.t. ⟨A_j, X⟩ = b_j,  X ⪰ 0
//! (D)  max bᵀy     s.t. S = C − Σ y_j A_j ⪰ 0
//! ```
//!
//! Blocks of order one are plain nonnegative scalars, so LPs and sign
//! constraints on dual variables fit the same form. The method is the
//! infeasible-start HKM direction with a Mehrotra predictor–corrector step.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::linalg::{self, SymMatrix};

/// Block-diagonal symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    blocks: Vec<DMatrix<f64>>,
}

impl BlockMatrix {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            blocks: sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
        }
    }

    pub fn scaled_identity(sizes: &[usize], scale: f64) -> Self {
        Self {
            blocks: sizes.iter().map(|&n| DMatrix::identity(n, n) * scale).collect(),
        }
    }

    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Self {
        Self { blocks }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut DMatrix<f64> {
        &mut self.blocks[k]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Sets entry `(i, j)` and its mirror in block `k`.
    pub fn set_sym(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.blocks[k][(i, j)] = v;
        self.blocks[k][(j, i)] = v;
    }

    /// Adds `v` to entry `(i, j)` and, off the diagonal, to its mirror.
    pub fn add_sym(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.blocks[k][(i, j)] += v;
        if i != j {
            self.blocks[k][(j, i)] += v;
        }
    }

    /// Trace inner product `⟨self, other⟩`.
    pub fn dot(&self, other: &BlockMatrix) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
    }

    fn axpy(&mut self, alpha: f64, other: &BlockMatrix) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a += b * alpha;
        }
    }

    fn symmetrize(&mut self) {
        for b in &mut self.blocks {
            let t = b.transpose();
            *b = (&*b + t) * 0.5;
        }
    }

    fn is_zero(&self, k: usize) -> bool {
        self.blocks[k].iter().all(|&v| v == 0.0)
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                if b.nrows() == 1 {
                    b[(0, 0)]
                } else {
                    linalg::min_eigenvalue(&SymMatrix::symmetrize(b.clone()).expect("square block"))
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `min ⟨C,X⟩ s.t. ⟨A_j,X⟩ = b_j, X ⪰ 0` over a fixed block structure.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    sizes: Vec<usize>,
    objective: BlockMatrix,
    constraints: Vec<BlockMatrix>,
    rhs: Vec<f64>,
}

impl ConicProgram {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(invalid("conic program needs at least one block, all of order >= 1"));
        }
        let objective = BlockMatrix::zeros(&sizes);
        Ok(Self {
            sizes,
            objective,
            constraints: Vec::new(),
            rhs: Vec::new(),
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn objective(&self) -> &BlockMatrix {
        &self.objective
    }

    pub fn objective_mut(&mut self) -> &mut BlockMatrix {
        &mut self.objective
    }

    pub fn constraints(&self) -> &[BlockMatrix] {
        &self.constraints
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn zero_block_matrix(&self) -> BlockMatrix {
        BlockMatrix::zeros(&self.sizes)
    }

    pub fn set_objective(&mut self, c: BlockMatrix) -> Result<()> {
        self.check_conforming(&c)?;
        self.objective = c;
        Ok(())
    }

    /// Appends `⟨a, X⟩ = b` and returns its index.
    pub fn add_constraint(&mut self, a: BlockMatrix, b: f64) -> Result<usize> {
        self.check_conforming(&a)?;
        self.constraints.push(a);
        self.rhs.push(b);
        Ok(self.constraints.len() - 1)
    }

    fn check_conforming(&self, m: &BlockMatrix) -> Result<()> {
        if m.sizes() != self.sizes {
            return Err(invalid(format!(
                "block structure {:?} does not match program structure {:?}",
                m.sizes(),
                self.sizes
            )));
        }
        for b in m.blocks() {
            if b.iter().any(|v| !v.is_finite()) {
                return Err(invalid("conic data must be finite"));
            }
            if (b - b.transpose()).amax() > 1e-12 * (1.0 + b.amax()) {
                return Err(invalid("conic data blocks must be symmetric"));
            }
        }
        Ok(())
    }

    /// `A(X)`, the vector of `⟨A_j, X⟩`.
    pub fn apply(&self, x: &BlockMatrix) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|a| a.dot(x)))
    }

    /// `Σ y_j A_j`
    pub fn adjoint(&self, y: &DVector<f64>) -> BlockMatrix {
        let mut out = self.zero_block_matrix();
        for (a, &yj) in self.constraints.iter().zip(y.iter()) {
            if yj != 0.0 {
                out.axpy(yj, a);
            }
        }
        out
    }

    /// Plain-text dump for cross-checking with other solvers.
    ///
    /// ```text
    /// <number of constraints>
    /// <number of blocks>
    /// <block orders...>
    /// <b_1 ... b_m>
    /// j block row col value      (upper triangle, 1-based; j = 0 is C)
    /// ```
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.constraints.len());
        let _ = writeln!(out, "{}", self.sizes.len());
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "{}", sizes.join(" "));
        let rhs: Vec<String> = self.rhs.iter().map(|b| format!("{b:e}")).collect();
        let _ = writeln!(out, "{}", rhs.join(" "));
        let mats = std::iter::once(&self.objective).chain(&self.constraints);
        for (j, m) in mats.enumerate() {
            for (k, b) in m.blocks().iter().enumerate() {
                for c in 0..b.ncols() {
                    for r in 0..=c {
                        let v = b[(r, c)];
                        if v != 0.0 {
                            let _ = writeln!(out, "{} {} {} {} {:e}", j, k + 1, r + 1, c + 1, v);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative tolerance on primal/dual infeasibility and duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep a per-iteration log in the solution.
    pub record_iterates: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            record_iterates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// The primal has no feasible point (dual improving ray found).
    Infeasible,
    /// The primal objective is unbounded below (the dual has no feasible point).
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterateLog {
    pub iteration: usize,
    pub primal_value: f64,
    pub dual_value: f64,
    /// `‖b − A(X)‖ / (1 + ‖b‖)`
    pub primal_infeas: f64,
    /// `‖C − Aᵀy − S‖ / (1 + ‖C‖)`
    pub dual_infeas: f64,
    pub mu: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: BlockMatrix,
    pub y: DVector<f64>,
    pub s: BlockMatrix,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub log: Vec<IterateLog>,
    /// Human-readable note for non-optimal exits.
    pub diagnostic: Option<String>,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Absolute KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `‖A(X) − b‖₂`
    pub primal_infeas: f64,
    /// `‖C − Aᵀy − S‖_F`
    pub dual_infeas: f64,
    /// `|⟨C,X⟩ − bᵀy|`
    pub gap: f64,
    pub primal_min_eig: f64,
    pub dual_min_eig: f64,
}

pub fn residuals(prog: &ConicProgram, sol: &ConicSolution) -> Residuals {
    let b = DVector::from_column_slice(prog.rhs());
    let primal_infeas = (prog.apply(&sol.x) - &b).norm();
    let mut rd = prog.objective.clone();
    rd.axpy(-1.0, &prog.adjoint(&sol.y));
    rd.axpy(-1.0, &sol.s);
    Residuals {
        primal_infeas,
        dual_infeas: rd.norm(),
        gap: (prog.objective.dot(&sol.x) - b.dot(&sol.y)).abs(),
        primal_min_eig: sol.x.min_eigenvalue(),
        dual_min_eig: sol.s.min_eigenvalue(),
    }
}

const STEP_FRACTION: f64 = 0.98;
const NORM_CAP: f64 = 1e8;
const CERT_TOL: f64 = 1e-6;
/// Accuracy at which a stalled run still counts as optimal.
const ACCEPT_TOL: f64 = 1e-7;

struct Workspace<'a> {
    prog: &'a ConicProgram,
    /// `active[j][k]`: constraint `j` touches block `k`.
    active: Vec<Vec<usize>>,
}

impl<'a> Workspace<'a> {
    fn new(prog: &'a ConicProgram) -> Self {
        let active = prog
            .constraints
            .iter()
            .map(|a| (0..a.num_blocks()).filter(|&k| !a.is_zero(k)).collect())
            .collect();
        Self { prog, active }
    }

    fn apply(&self, z: &BlockMatrix) -> DVector<f64> {
        DVector::from_iterator(
            self.active.len(),
            self.prog
                .constraints
                .iter()
                .zip(&self.active)
                .map(|(a, ks)| ks.iter().map(|&k| a.block(k).dot(z.block(k))).sum::<f64>()),
        )
    }

    /// HKM Schur complement `M_ij = ⟨A_i, X A_j S⁻¹⟩`.
    fn schur(&self, x: &BlockMatrix, s_inv: &BlockMatrix) -> DMatrix<f64> {
        let m = self.active.len();
        let nb = x.num_blocks();
        let mut out = DMatrix::zeros(m, m);
        for k in 0..nb {
            let users: Vec<usize> = (0..m).filter(|&j| self.active[j].contains(&k)).collect();
            if users.is_empty() {
                continue;
            }
            let xk = x.block(k);
            let sk = s_inv.block(k);
            for &j in &users {
                let g = xk * self.prog.constraints[j].block(k) * sk;
                for &i in &users {
                    out[(i, j)] += self.prog.constraints[i].block(k).dot(&g);
                }
            }
        }
        let t = out.transpose();
        (out + t) * 0.5
    }
}

fn block_product(a: &BlockMatrix, b: &BlockMatrix, c: &BlockMatrix) -> BlockMatrix {
    BlockMatrix::from_blocks(
        a.blocks
            .iter()
            .zip(&b.blocks)
            .zip(&c.blocks)
            .map(|((a, b), c)| a * b * c)
            .collect(),
    )
}

fn block_inverse(m: &BlockMatrix) -> Option<BlockMatrix> {
    let mut out = Vec::with_capacity(m.num_blocks());
    for b in m.blocks() {
        if b.nrows() == 1 {
            if b[(0, 0)] <= 0.0 {
                return None;
            }
            out.push(DMatrix::from_element(1, 1, 1.0 / b[(0, 0)]));
        } else {
            let inv = Cholesky::new(b.clone())?.inverse();
            out.push((&inv + inv.transpose()) * 0.5);
        }
    }
    Some(BlockMatrix::from_blocks(out))
}

/// Largest `α` with `m + α d ⪰ 0` (may be infinite).
fn max_step(m: &BlockMatrix, d: &BlockMatrix) -> f64 {
    let mut alpha = f64::INFINITY;
    for (mb, db) in m.blocks().iter().zip(d.blocks()) {
        if mb.nrows() == 1 {
            if db[(0, 0)] < 0.0 {
                alpha = alpha.min(-mb[(0, 0)] / db[(0, 0)]);
            }
            continue;
        }
        let Some(chol) = Cholesky::new(mb.clone()) else {
            return 0.0;
        };
        let l = chol.l();
        let w = l.solve_lower_triangular(db).expect("triangular solve");
        let w = l.solve_lower_triangular(&w.transpose()).expect("triangular solve");
        let lo = linalg::min_eigenvalue(&SymMatrix::symmetrize(w).expect("square"));
        if lo < 0.0 {
            alpha = alpha.min(-1.0 / lo);
        }
    }
    alpha
}

/// Solves `prog` from the fixed start `X = S = τI`, `y = 0`.
pub fn solve(prog: &ConicProgram, opts: &SolveOptions) -> Result<ConicSolution> {
    let m = prog.num_constraints();
    if m == 0 {
        return Err(invalid("conic program has no constraints"));
    }
    check_independence(prog)?;

    let ws = Workspace::new(prog);
    let sizes = prog.sizes.clone();
    let dim: usize = sizes.iter().sum();
    let b = DVector::from_column_slice(&prog.rhs);
    let c = &prog.objective;
    let b_norm = b.norm();
    let c_norm = c.norm();

    let data_scale = prog
        .constraints
        .iter()
        .map(|a| a.norm())
        .chain(std::iter::once(c_norm))
        .chain(prog.rhs.iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    let tau = 1.0 + data_scale;
    let mut x = BlockMatrix::scaled_identity(&sizes, tau);
    let mut s = BlockMatrix::scaled_identity(&sizes, tau);
    let mut y = DVector::zeros(m);

    let mut log = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut diagnostic = None;
    let mut iterations = 0;
    let mut best: Option<(f64, BlockMatrix, DVector<f64>, BlockMatrix)> = None;

    for iter in 0..opts.max_iter {
        iterations = iter;
        let rp = &b - ws.apply(&x);
        let mut rd = c.clone();
        rd.axpy(-1.0, &prog.adjoint(&y));
        rd.axpy(-1.0, &s);
        let pobj = c.dot(&x);
        let dobj = b.dot(&y);
        let mu = x.dot(&s) / dim as f64;
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = rd.norm() / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        let merit = pinf.max(dinf).max(gap);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), s.clone()));
        }

        let mut entry = IterateLog {
            iteration: iter,
            primal_value: pobj,
            dual_value: dobj,
            primal_infeas: pinf,
            dual_infeas: dinf,
            mu,
            step_primal: 0.0,
            step_dual: 0.0,
        };

        if pinf <= opts.tol && dinf <= opts.tol && gap <= opts.tol {
            if opts.record_iterates {
                log.push(entry);
            }
            status = SolveStatus::Optimal;
            break;
        }

        // Farkas-type certificates, normalized by the diverging objective.
        if dobj > 0.0 {
            let ratio = (c_norm + rd.norm()) / dobj;
            if ratio <= CERT_TOL && dobj > 1e3 * (1.0 + c_norm) {
                status = SolveStatus::Infeasible;
                diagnostic = Some(format!("dual ray with ‖Aᵀy + S‖/bᵀy = {ratio:e}"));
                if opts.record_iterates {
                    log.push(entry);
                }
                break;
            }
        }
        if pobj < 0.0 {
            let ratio = (b_norm + rp.norm()) / (-pobj);
            if ratio <= CERT_TOL && -pobj > 1e3 * (1.0 + b_norm) {
                status = SolveStatus::Unbounded;
                diagnostic = Some(format!("primal ray with ‖A(X)‖/(−⟨C,X⟩) = {ratio:e}"));
                if opts.record_iterates {
                    log.push(entry);
                }
                break;
            }
        }
        if x.max_abs() > NORM_CAP {
            status = SolveStatus::Unbounded;
            diagnostic = Some("primal iterate norm exceeded 1e8".into());
            if opts.record_iterates {
                log.push(entry);
            }
            break;
        }

        let Some(s_inv) = block_inverse(&s) else {
            diagnostic = Some("dual slack lost definiteness".into());
            break;
        };
        let schur = ws.schur(&x, &s_inv);
        let solver = match Cholesky::new(schur.clone()) {
            Some(ch) => SchurSolver::Cholesky(ch),
            None => {
                let ridge = 1e-12 * schur.diagonal().amax().max(1.0);
                let shifted = &schur + DMatrix::identity(m, m) * ridge;
                match Cholesky::new(shifted) {
                    Some(ch) => SchurSolver::Cholesky(ch),
                    None => {
                        let lu = schur.lu();
                        if !lu.is_invertible() {
                            diagnostic = Some("Schur complement is singular".into());
                            break;
                        }
                        SchurSolver::Lu(lu)
                    }
                }
            }
        };

        // X·Rd·S⁻¹ is shared by predictor and corrector.
        let x_rd_sinv = block_product(&x, &rd, &s_inv);
        let a_x_rd_sinv = ws.apply(&x_rd_sinv);

        let direction = |target: &BlockMatrix| -> (BlockMatrix, DVector<f64>, BlockMatrix) {
            let rhs = &rp - ws.apply(target) + &a_x_rd_sinv;
            let dy = solver.solve(&rhs);
            let mut ds = rd.clone();
            ds.axpy(-1.0, &prog.adjoint(&dy));
            let mut dx = target.clone();
            let mut t = block_product(&x, &ds, &s_inv);
            t.symmetrize();
            dx.axpy(-1.0, &t);
            dx.symmetrize();
            (dx, dy, ds)
        };

        // Predictor.
        let mut target = x.clone();
        for blk in &mut target.blocks {
            *blk *= -1.0;
        }
        let (dx_a, _, ds_a) = direction(&target);
        let ap = (STEP_FRACTION * max_step(&x, &dx_a)).min(1.0);
        let ad = (STEP_FRACTION * max_step(&s, &ds_a)).min(1.0);
        let mut xa = x.clone();
        xa.axpy(ap, &dx_a);
        let mut sa = s.clone();
        sa.axpy(ad, &ds_a);
        let mu_aff = xa.dot(&sa) / dim as f64;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).max(0.0).powi(3).min(1.0)
        } else {
            0.0
        };

        // Corrector: σμS⁻¹ − X − sym(ΔXₐ ΔSₐ S⁻¹).
        let mut target = s_inv.clone();
        for blk in &mut target.blocks {
            *blk *= sigma * mu;
        }
        target.axpy(-1.0, &x);
        let mut second = block_product(&dx_a, &ds_a, &s_inv);
        second.symmetrize();
        target.axpy(-1.0, &second);
        let (dx, dy, ds) = direction(&target);

        let ap = (STEP_FRACTION * max_step(&x, &dx)).min(1.0);
        let ad = (STEP_FRACTION * max_step(&s, &ds)).min(1.0);
        entry.step_primal = ap;
        entry.step_dual = ad;
        if opts.record_iterates {
            log.push(entry);
        }
        if ap < 1e-12 && ad < 1e-12 {
            diagnostic = Some("step length collapsed".into());
            break;
        }
        x.axpy(ap, &dx);
        x.symmetrize();
        y += dy * ad;
        s.axpy(ad, &ds);
        s.symmetrize();
        iterations = iter + 1;
    }

    if status == SolveStatus::MaxIter {
        let reason = diagnostic
            .take()
            .unwrap_or_else(|| format!("no convergence within {} iterations", opts.max_iter));
        if let Some((merit, bx, by, bs)) = best {
            x = bx;
            y = by;
            s = bs;
            if merit <= opts.tol.max(ACCEPT_TOL) {
                status = SolveStatus::Optimal;
            }
            diagnostic = Some(format!("{reason}; best iterate has relative residual {merit:e}"));
        } else {
            diagnostic = Some(reason);
        }
    }
    let primal_value = c.dot(&x);
    let dual_value = b.dot(&y);
    Ok(ConicSolution {
        x,
        y,
        s,
        primal_value,
        dual_value,
        gap: (primal_value - dual_value).abs(),
        status,
        iterations,
        log,
        diagnostic,
    })
}

enum SchurSolver {
    Cholesky(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurSolver {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurSolver::Cholesky(ch) => ch.solve(rhs),
            SchurSolver::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

fn check_independence(prog: &ConicProgram) -> Result<()> {
    let m = prog.num_constraints();
    let gram = DMatrix::from_fn(m, m, |i, j| prog.constraints[i].dot(&prog.constraints[j]));
    let rank = linalg::matrix_rank(&gram, 1e-12);
    if rank < m {
        return Err(invalid(format!(
            "constraint matrices are linearly dependent (rank {rank} < {m})"
        )));
    }
    Ok(())
}
