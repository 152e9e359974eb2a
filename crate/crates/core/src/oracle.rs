//! Brute-force ground truth at small dimension.
//!
//! Minimization is a lattice scan (or low-discrepancy multistart) followed by
//! projected-gradient polishing, with projections onto the feasible set
//! computed by Dykstra's alternating scheme. Membership in the joint image set
//! is decided exactly by face enumeration when the cuts are linear, and by a
//! lattice plus compass search otherwise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::problem::{ConstraintSet, QuadraticForm, TrustRegionProblem};

/// Closed convex pieces whose intersection is the feasible set.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// `‖x − c‖² ≤ r²`
    Ball { center: DVector<f64>, radius_sq: f64 },
    /// `bᵀx ≤ β`
    HalfSpace { normal: DVector<f64>, bound: f64 },
    /// `|bᵀx| ≤ h`
    Slab { normal: DVector<f64>, half_width: f64 },
    /// `‖Bx‖² + bᵀx ≤ β`
    ConvexQuadratic {
        factor: DMatrix<f64>,
        normal: DVector<f64>,
        bound: f64,
    },
}

impl Region {
    /// Constraint value; `≤ 0` inside.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Region::Ball { center, radius_sq } => (x - center).norm_squared() - radius_sq,
            Region::HalfSpace { normal, bound } => normal.dot(x) - bound,
            Region::Slab { normal, half_width } => normal.dot(x).abs() - half_width,
            Region::ConvexQuadratic { factor, normal, bound } => (factor * x).norm_squared() + normal.dot(x) - bound,
        }
    }

    /// Euclidean projection.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Region::Ball { center, radius_sq } => {
                let d = x - center;
                let r = radius_sq.sqrt();
                let dn = d.norm();
                if dn <= r {
                    x.clone()
                } else {
                    center + d * (r / dn)
                }
            }
            Region::HalfSpace { normal, bound } => {
                let v = normal.dot(x) - bound;
                let nn = normal.norm_squared();
                if v <= 0.0 || nn == 0.0 {
                    x.clone()
                } else {
                    x - normal * (v / nn)
                }
            }
            Region::Slab { normal, half_width } => {
                let t = normal.dot(x);
                let nn = normal.norm_squared();
                if t.abs() <= *half_width || nn == 0.0 {
                    x.clone()
                } else {
                    x - normal * ((t - t.signum() * half_width) / nn)
                }
            }
            Region::ConvexQuadratic { factor, normal, bound } => {
                if self.value(x) <= 0.0 {
                    return x.clone();
                }
                project_convex_quadratic(factor, normal, *bound, x)
            }
        }
    }
}

/// Projection onto `‖Bx‖² + bᵀx ≤ β` by bisection on the multiplier of
/// `(I + μBᵀB) x = y − μb/2`.
fn project_convex_quadratic(b: &DMatrix<f64>, lin: &DVector<f64>, bound: f64, y: &DVector<f64>) -> DVector<f64> {
    let n = y.len();
    let gram = b.transpose() * b;
    let at = |mu: f64| -> DVector<f64> {
        let m = DMatrix::identity(n, n) + &gram * mu;
        let rhs = y - lin * (0.5 * mu);
        m.cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(|| y.clone())
    };
    let g = |x: &DVector<f64>| (b * x).norm_squared() + lin.dot(x) - bound;
    let mut hi = 1.0;
    let mut x_hi = at(hi);
    let mut guard = 0;
    while g(&x_hi) > 0.0 && guard < 200 {
        hi *= 2.0;
        x_hi = at(hi);
        guard += 1;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    at(hi)
}

/// Projection onto the intersection of `regions` by Dykstra's algorithm.
pub fn project_onto(regions: &[Region], x: &DVector<f64>) -> DVector<f64> {
    if regions.len() == 1 {
        return regions[0].project(x);
    }
    let mut cur = x.clone();
    let mut corr: Vec<DVector<f64>> = vec![DVector::zeros(x.len()); regions.len()];
    for _ in 0..500 {
        let prev = cur.clone();
        for (r, p) in regions.iter().zip(corr.iter_mut()) {
            let shifted = &cur + &*p;
            let next = r.project(&shifted);
            *p = shifted - &next;
            cur = next;
        }
        if (&cur - &prev).norm() <= 1e-14 * (1.0 + cur.norm()) {
            break;
        }
    }
    cur
}

pub fn max_violation(regions: &[Region], x: &DVector<f64>) -> f64 {
    regions.iter().map(|r| r.value(x)).fold(f64::NEG_INFINITY, f64::max)
}

/// The feasible set of `p` as a list of regions.
pub fn regions_of(c: &ConstraintSet) -> Vec<Region> {
    let mut out = vec![Region::Ball {
        center: c.center().clone(),
        radius_sq: c.radius_sq(),
    }];
    for l in c.linear() {
        out.push(match c.curvature() {
            None => Region::HalfSpace {
                normal: l.normal.clone(),
                bound: l.bound,
            },
            Some(b) => Region::ConvexQuadratic {
                factor: b.clone(),
                normal: l.normal.clone(),
                bound: l.bound,
            },
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Grid,
    Multistart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// `None` picks grid for `n ≤ 4`, multistart otherwise.
    pub method: Option<OracleMethod>,
    /// Lattice points per axis.
    pub grid_points: usize,
    /// Cap on the total lattice size; points per axis shrink to respect it.
    pub max_grid_evaluations: usize,
    pub polish_steps: usize,
    /// Number of best lattice points that get polished.
    pub polish_starts: usize,
    pub multistart_starts: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            method: None,
            grid_points: 201,
            max_grid_evaluations: 4_000_000,
            polish_steps: 200,
            polish_starts: 16,
            multistart_starts: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub evaluations: u64,
    pub method: OracleMethod,
}

/// Feasibility slack accepted for the reported minimizer.
pub const ARGMIN_TOL: f64 = 1e-9;

pub fn brute_force_min(p: &TrustRegionProblem, opts: &OracleOptions) -> Result<OracleResult> {
    minimize_over(p.objective(), &regions_of(p.constraints()), opts)
}

/// Minimizes `f` over the intersection of `regions`; the first region must be
/// a ball, which supplies the search box.
pub fn minimize_over(f: &QuadraticForm, regions: &[Region], opts: &OracleOptions) -> Result<OracleResult> {
    let Some(Region::Ball { center, radius_sq }) = regions.first() else {
        return Err(invalid("oracle needs a ball as its first region"));
    };
    let n = center.len();
    if f.dim() != n {
        return Err(invalid("objective and region dimensions differ"));
    }
    let radius = radius_sq.sqrt();
    let method = opts.method.unwrap_or(if n <= 4 {
        OracleMethod::Grid
    } else {
        OracleMethod::Multistart
    });

    let start = project_onto(regions, center);
    if max_violation(regions, &start) > 1e-7 * (1.0 + radius_sq) {
        return Err(Error::Infeasible(format!(
            "alternating projections stalled at violation {:e}",
            max_violation(regions, &start)
        )));
    }

    let mut evaluations = 0u64;
    let mut starts = vec![start];
    match method {
        OracleMethod::Grid => {
            let (pts, evals) = grid_candidates(f, regions, center, radius, opts);
            evaluations += evals;
            starts.extend(pts);
        }
        OracleMethod::Multistart => {
            for k in 0..opts.multistart_starts {
                let h = halton(k + 1, n);
                let x = DVector::from_fn(n, |i, _| center[i] + radius * (2.0 * h[i] - 1.0));
                starts.push(project_onto(regions, &x));
            }
        }
    }

    let step = polish_step(f, radius);
    let polished: Vec<(f64, DVector<f64>, u64)> = starts
        .par_iter()
        .map(|x| polish(f, regions, x, step, opts.polish_steps))
        .collect();

    let mut best: Option<(f64, DVector<f64>)> = None;
    for (v, x, evals) in polished {
        evaluations += evals;
        if max_violation(regions, &x) > ARGMIN_TOL {
            continue;
        }
        if best.as_ref().is_none_or(|(bv, bx)| better(v, &x, *bv, bx)) {
            best = Some((v, x));
        }
    }
    let (value, argmin) = best.ok_or_else(|| Error::Infeasible("no feasible point found".into()))?;
    Ok(OracleResult {
        value,
        argmin: argmin.iter().copied().collect(),
        evaluations,
        method,
    })
}

/// Lower value wins; ties broken lexicographically on the point.
fn better(v: f64, x: &DVector<f64>, bv: f64, bx: &DVector<f64>) -> bool {
    if v != bv {
        return v < bv;
    }
    for (a, b) in x.iter().zip(bx.iter()) {
        if a != b {
            return a < b;
        }
    }
    false
}

fn polish_step(f: &QuadraticForm, radius: f64) -> f64 {
    let a2 = linalg::eig_sym(f.hessian()).map(|e| e.norm2()).unwrap_or(1.0);
    let lin = f.linear().norm() / radius.max(1e-12);
    1.0 / (2.0 * a2 + lin + 1e-12)
}

fn polish(
    f: &QuadraticForm,
    regions: &[Region],
    x0: &DVector<f64>,
    step: f64,
    steps: usize,
) -> (f64, DVector<f64>, u64) {
    let mut x = project_onto(regions, x0);
    let mut v = f.eval(&x);
    let mut evals = 1;
    for _ in 0..steps {
        let next = project_onto(regions, &(&x - f.gradient(&x) * step));
        let nv = f.eval(&next);
        evals += 1;
        let moved = (&next - &x).norm();
        // Alternating projections can stall short of a thin feasible set.
        if nv <= v && max_violation(regions, &next) <= ARGMIN_TOL {
            x = next;
            v = nv;
        } else {
            break;
        }
        if moved <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    (v, x, evals)
}

/// Best feasible lattice points, ordered by value.
fn grid_candidates(
    f: &QuadraticForm,
    regions: &[Region],
    center: &DVector<f64>,
    radius: f64,
    opts: &OracleOptions,
) -> (Vec<DVector<f64>>, u64) {
    let n = center.len();
    let per_axis = points_per_axis(n, opts.grid_points, opts.max_grid_evaluations);
    let coord = |i: usize, k: usize| -> f64 {
        if per_axis == 1 {
            center[i]
        } else {
            center[i] - radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64
        }
    };
    let inner: usize = per_axis.pow((n - 1) as u32);
    let keep = opts.polish_starts.max(1);

    let shards: Vec<Vec<(f64, DVector<f64>)>> = (0..per_axis)
        .into_par_iter()
        .map(|k0| {
            let mut local: Vec<(f64, DVector<f64>)> = Vec::new();
            let mut x = DVector::zeros(n);
            x[0] = coord(0, k0);
            for idx in 0..inner {
                let mut rem = idx;
                for i in 1..n {
                    x[i] = coord(i, rem % per_axis);
                    rem /= per_axis;
                }
                if max_violation(regions, &x) > 0.0 {
                    continue;
                }
                let v = f.eval(&x);
                if local.len() < keep || v < local[local.len() - 1].0 {
                    let pos = local
                        .iter()
                        .position(|(lv, lx)| better(v, &x, *lv, lx))
                        .unwrap_or(local.len());
                    local.insert(pos, (v, x.clone()));
                    local.truncate(keep);
                }
            }
            local
        })
        .collect();

    let mut all: Vec<(f64, DVector<f64>)> = shards.into_iter().flatten().collect();
    all.sort_by(|a, b| {
        if better(a.0, &a.1, b.0, &b.1) {
            std::cmp::Ordering::Less
        } else if better(b.0, &b.1, a.0, &a.1) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    all.truncate(keep);
    let evals = (per_axis as u64).pow(n as u32);
    (all.into_iter().map(|(_, x)| x).collect(), evals)
}

fn points_per_axis(n: usize, requested: usize, cap: usize) -> usize {
    let mut k = requested.max(1);
    while k > 2 && (k as f64).powi(n as i32) > cap as f64 {
        k -= 1;
    }
    k
}

/// Halton point `index` in `[0,1)^dim`.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// `(f(x), g₀(x), g₁(x), …, g_m(x))`
pub fn image(f: &QuadraticForm, c: &ConstraintSet, x: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![f.eval(x), c.ball_value(x)];
    out.extend(c.constraint_values(x));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Inside,
    Outside,
    /// Best max-violation found lies in `(0, INDETERMINATE_BAND)`.
    Indeterminate,
}

/// Width of the undecided band above the membership boundary.
pub const INDETERMINATE_BAND: f64 = 1e-3;
const INSIDE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub verdict: Membership,
    /// Smallest `max(f(x) − r, gᵢ(x) − sᵢ)` found.
    pub best_violation: f64,
    pub witness: Vec<f64>,
}

/// Decides whether `point = (r, s₀, …, s_m)` lies in the image set
/// `{(f(x), g₀(x), …, g_m(x))} + ℝ₊^{m+2}`.
pub fn membership_in_u(point: &[f64], f: &QuadraticForm, c: &ConstraintSet) -> Result<MembershipReport> {
    let n = c.dim();
    let m = c.num_linear();
    if point.len() != m + 2 {
        return Err(invalid(format!(
            "point must have {} coordinates, got {}",
            m + 2,
            point.len()
        )));
    }
    if f.dim() != n {
        return Err(invalid("objective and constraint dimensions differ"));
    }

    // g₀(x) ≤ s₀ confines the search to a ball around x₀.
    let r2 = c.radius_sq() + point[1];
    if r2 < 0.0 {
        return Ok(MembershipReport {
            verdict: Membership::Outside,
            best_violation: -r2,
            witness: c.center().iter().copied().collect(),
        });
    }
    if c.curvature().is_none() && m <= MAX_ENUMERATED_CUTS {
        return Ok(membership_by_faces(point, f, c));
    }
    Ok(membership_by_search(point, f, c))
}

/// Lattice scan plus compass search on `max(f − r, gᵢ − sᵢ)`.
fn membership_by_search(point: &[f64], f: &QuadraticForm, c: &ConstraintSet) -> MembershipReport {
    let n = c.dim();
    let phi = |x: &DVector<f64>| -> f64 {
        let img = image(f, c, x);
        img.iter()
            .zip(point)
            .map(|(g, s)| g - s)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let r2 = c.radius_sq() + point[1];
    let radius = r2.sqrt();
    let per_axis = points_per_axis(n, 61, 40_000);
    let center = c.center();
    let spacing = if per_axis > 1 {
        2.0 * radius / (per_axis - 1) as f64
    } else {
        radius
    };

    let total = per_axis.pow(n as u32);
    let mut scored: Vec<(f64, DVector<f64>)> = (0..total)
        .map(|idx| {
            let mut rem = idx;
            let x = DVector::from_fn(n, |i, _| {
                let k = rem % per_axis;
                rem /= per_axis;
                if per_axis == 1 {
                    center[i]
                } else {
                    center[i] - radius + spacing * k as f64
                }
            });
            (phi(&x), x)
        })
        .collect();
    scored.push((phi(center), center.clone()));
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.truncate(6);

    let mut best = (f64::INFINITY, center.clone());
    for (v0, x0) in scored {
        let (v, x) = compass_search(&phi, x0, v0, spacing.max(1e-3), 1e-11);
        if v < best.0 {
            best = (v, x);
        }
        if best.0 <= INSIDE_TOL {
            break;
        }
    }
    let verdict = if best.0 <= INSIDE_TOL {
        Membership::Inside
    } else if best.0 >= INDETERMINATE_BAND {
        Membership::Outside
    } else {
        Membership::Indeterminate
    };
    MembershipReport {
        verdict,
        best_violation: best.0,
        witness: best.1.iter().copied().collect(),
    }
}

const MAX_ENUMERATED_CUTS: usize = 12;

/// Exact membership test for linear cuts: `point` lies in the image set iff
/// `min{f(x) : g₀(x) ≤ s₀, gᵢ(x) ≤ sᵢ} ≤ r`. The minimum is found among the
/// stationary points of `f` on every face of the shifted feasible set.
/// `best_violation` is the excess of that minimum over `r`, or the smallest
/// constraint violation among the candidates when the set is empty.
fn membership_by_faces(point: &[f64], f: &QuadraticForm, c: &ConstraintSet) -> MembershipReport {
    let n = c.dim();
    let m = c.num_linear();
    let radius_sq = c.radius_sq() + point[1];
    let bounds: Vec<f64> = c.linear().iter().zip(&point[2..]).map(|(l, s)| l.bound + s).collect();
    let scale = 1.0 + radius_sq + c.center().norm_squared();
    let feas_tol = 1e-9 * scale;

    let violation = |x: &DVector<f64>| -> f64 {
        let mut v = (x - c.center()).norm_squared() - radius_sq;
        for (l, b) in c.linear().iter().zip(&bounds) {
            v = v.max(l.normal.dot(x) - b);
        }
        v
    };

    let mut best_feasible: Option<(f64, DVector<f64>)> = None;
    let mut least_violating: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > n {
            continue;
        }
        for x in face_candidates(f, c, &active, &bounds, radius_sq) {
            let v = violation(&x);
            if v <= feas_tol {
                let value = f.eval(&x);
                if best_feasible.as_ref().is_none_or(|(b, _)| value < *b) {
                    best_feasible = Some((value, x));
                }
            } else if least_violating.as_ref().is_none_or(|(b, _)| v < *b) {
                least_violating = Some((v, x));
            }
        }
    }

    match best_feasible {
        Some((value, x)) => {
            let excess = value - point[0];
            let tol = 1e-9 * (1.0 + point[0].abs() + value.abs());
            let verdict = if excess <= tol {
                Membership::Inside
            } else if excess >= INDETERMINATE_BAND {
                Membership::Outside
            } else {
                Membership::Indeterminate
            };
            MembershipReport {
                verdict,
                best_violation: excess,
                witness: x.iter().copied().collect(),
            }
        }
        None => {
            let (v, x) = least_violating.unwrap_or((f64::INFINITY, c.center().clone()));
            MembershipReport {
                verdict: if v >= INDETERMINATE_BAND {
                    Membership::Outside
                } else {
                    Membership::Indeterminate
                },
                best_violation: v,
                witness: x.iter().copied().collect(),
            }
        }
    }
}

/// Stationary points of `f` on the affine set where the cuts in `active` are
/// tight, both inside the ball and on its sphere.
fn face_candidates(
    f: &QuadraticForm,
    c: &ConstraintSet,
    active: &[usize],
    bounds: &[f64],
    radius_sq: f64,
) -> Vec<DVector<f64>> {
    let n = c.dim();
    let x0 = c.center();
    let mut out = Vec::new();

    // Affine set {p + Zy}.
    let (p, z) = if active.is_empty() {
        (x0.clone(), DMatrix::identity(n, n))
    } else {
        let rows = DMatrix::from_fn(active.len(), n, |k, j| c.linear()[active[k]].normal[j]);
        let rhs = DVector::from_fn(active.len(), |k, _| bounds[active[k]]);
        let eig = (rows.transpose() * &rows).symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let cutoff = 1e-12 * top.max(f64::MIN_POSITIVE);
        let resid = &rhs - &rows * x0;
        let back = rows.transpose() * resid;
        let mut p = x0.clone();
        let mut null = Vec::new();
        for k in 0..n {
            let v = eig.eigenvectors.column(k);
            if eig.eigenvalues[k] > cutoff {
                p += v * (v.dot(&back) / eig.eigenvalues[k]);
            } else {
                null.push(v.into_owned());
            }
        }
        if (&rows * &p - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            return out;
        }
        let z = if null.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&null)
        };
        (p, z)
    };
    let d = z.ncols();
    let a = f.hessian().as_matrix();
    // f(p + Zy) = yᵀHy + cᵀy + const
    let h = z.transpose() * a * &z;
    let lin = z.transpose() * (a * &p * 2.0 + f.linear());
    out.push(p.clone());
    if d == 0 {
        return out;
    }

    // Interior stationary point, least-squares when H is singular.
    if let Ok(y) = (&h * 2.0).svd(true, true).solve(&(-&lin), 1e-12 * (1.0 + h.amax())) {
        out.push(&p + &z * y);
    }

    // Sphere: ‖y − y_c‖² = ρ² inside the affine set.
    let y_c = z.transpose() * (x0 - &p);
    let rho_sq = radius_sq - (x0 - &p - &z * &y_c).norm_squared();
    if rho_sq < 0.0 {
        return out;
    }
    let rho = rho_sq.sqrt();
    // With y = y_c + u: (H + μI)u = −q.
    let q = &h * &y_c + &lin * 0.5;
    let eig = h.symmetric_eigen();
    let qh = eig.eigenvectors.transpose() * &q;
    let hscale = 1.0 + eig.eigenvalues.amax();
    let lift = |uh: DVector<f64>| -> DVector<f64> {
        let mut u = &eig.eigenvectors * uh;
        let norm = u.norm();
        if norm > 0.0 {
            u *= rho / norm;
        }
        &p + &z * (&y_c + u)
    };

    // Eigenvalue groups.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if (eig.eigenvalues[i] - eig.eigenvalues[g[0]]).abs() <= 1e-10 * hscale => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let qscale = 1.0 + q.norm();
    let weights: Vec<f64> = groups.iter().map(|g| g.iter().map(|&i| qh[i] * qh[i]).sum()).collect();
    let mut poles: Vec<(f64, f64)> = groups
        .iter()
        .zip(&weights)
        .filter(|(_, w)| w.sqrt() > 1e-14 * qscale)
        .map(|(g, w)| (-eig.eigenvalues[g[0]], *w))
        .collect();
    poles.sort_by(|a, b| a.0.total_cmp(&b.0));

    let u_at = |mu: f64| DVector::from_fn(d, |i, _| -qh[i] / (eig.eigenvalues[i] + mu));

    // Hard-case points: μ = −h on a group with no weight.
    for (g, w) in groups.iter().zip(&weights) {
        if w.sqrt() > 1e-14 * qscale {
            continue;
        }
        let mu = -eig.eigenvalues[g[0]];
        let mut uh = DVector::from_fn(d, |i, _| {
            if g.contains(&i) {
                0.0
            } else {
                -qh[i] / (eig.eigenvalues[i] + mu)
            }
        });
        let t = rho_sq - uh.norm_squared();
        if t >= -1e-12 * (1.0 + rho_sq) {
            let t = t.max(0.0).sqrt();
            for sign in [1.0, -1.0] {
                uh[g[0]] = sign * t;
                out.push(lift(uh.clone()));
            }
        }
    }

    if poles.is_empty() || rho == 0.0 {
        if rho == 0.0 {
            out.push(&p + &z * &y_c);
        }
        return out;
    }
    // ψ(μ) = Σ w/(μ − π)² − ρ², convex between consecutive poles π.
    let psi = |mu: f64| poles.iter().map(|(pi, w)| w / ((mu - pi) * (mu - pi))).sum::<f64>() - rho_sq;
    let dpsi = |mu: f64| {
        poles
            .iter()
            .map(|(pi, w)| -2.0 * w / ((mu - pi) * (mu - pi) * (mu - pi)))
            .sum::<f64>()
    };
    let total: f64 = poles.iter().map(|(_, w)| w).sum();
    let reach = total.sqrt() / rho;
    let bisect = |mut lo: f64, mut hi: f64, g: &dyn Fn(f64) -> f64| -> f64 {
        let glo = g(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (g(mid) > 0.0) == (glo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let nudge = |x: f64, toward: f64| {
        let step = f64::EPSILON * (1.0 + x.abs()) * 4.0;
        if toward > x {
            x + step
        } else {
            x - step
        }
    };

    let mut roots = Vec::new();
    let first = poles[0].0;
    let last = poles[poles.len() - 1].0;
    roots.push(bisect(first - reach, nudge(first, first - 1.0), &psi));
    roots.push(bisect(nudge(last, last + 1.0), last + reach, &psi));
    for pair in poles.windows(2) {
        let (lo, hi) = (nudge(pair[0].0, pair[1].0), nudge(pair[1].0, pair[0].0));
        if lo >= hi {
            continue;
        }
        let valley = bisect(lo, hi, &dpsi);
        if psi(valley) <= 0.0 {
            roots.push(bisect(lo, valley, &psi));
            roots.push(bisect(valley, hi, &psi));
        }
    }
    for mu in roots {
        out.push(lift(u_at(mu)));
    }
    out
}

/// Derivative-free descent on the coordinate stencil, halving the step on
/// failure.
fn compass_search(
    phi: &impl Fn(&DVector<f64>) -> f64,
    mut x: DVector<f64>,
    mut v: f64,
    mut step: f64,
    min_step: f64,
) -> (f64, DVector<f64>) {
    let n = x.len();
    let mut iters = 0;
    while step > min_step && iters < 20_000 {
        iters += 1;
        let mut improved = false;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += sign * step;
                let w = phi(&y);
                if w < v {
                    x = y;
                    v = w;
                    improved = true;
                }
            }
        }
        if n > 1 {
            // Diagonal moves help on the kinks of a max of smooth functions.
            for i in 0..n {
                for j in (i + 1)..n {
                    for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let mut y = x.clone();
                        y[i] += si * step;
                        y[j] += sj * step;
                        let w = phi(&y);
                        if w < v {
                            x = y;
                            v = w;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (v, x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    pub num_midpoints: usize,
    pub seed: u64,
    /// Pairs of points of the image set tested before the random ones.
    pub seed_pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeViolation {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub midpoint: Vec<f64>,
    pub best_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub tested: usize,
    pub violations: Vec<ProbeViolation>,
    /// Midpoints whose verdict fell in the indeterminate band.
    pub indeterminate: usize,
}

/// Tests midpoints of pairs of points of the image set for membership.
pub fn convexity_probe(f: &QuadraticForm, c: &ConstraintSet, opts: &ProbeOptions) -> Result<ProbeReport> {
    let n = c.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let offset = Exp::new(4.0).expect("positive rate");
    let spread = 1.5 * c.radius_sq().sqrt().max(0.5);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let x = DVector::from_fn(n, |i, _| c.center()[i] + spread * rng.random_range(-1.0..1.0));
        let mut img = image(f, c, &x);
        for v in &mut img {
            if rng.random_bool(0.5) {
                *v += offset.sample(rng);
            }
        }
        img
    };

    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = opts.seed_pairs.clone();
    while pairs.len() < opts.num_midpoints.max(opts.seed_pairs.len()) {
        let a = sample(&mut rng);
        let b = sample(&mut rng);
        pairs.push((a, b));
    }

    let verdicts: Vec<Result<(Vec<f64>, MembershipReport)>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let mid: Vec<f64> = a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect();
            membership_in_u(&mid, f, c).map(|r| (mid, r))
        })
        .collect();

    let mut violations = Vec::new();
    let mut indeterminate = 0;
    for ((a, b), res) in pairs.iter().zip(verdicts) {
        let (mid, report) = res?;
        match report.verdict {
            Membership::Inside => {}
            Membership::Indeterminate => indeterminate += 1,
            Membership::Outside => violations.push(ProbeViolation {
                first: a.clone(),
                second: b.clone(),
                midpoint: mid,
                best_violation: report.best_violation,
            }),
        }
    }
    Ok(ProbeReport {
        tested: pairs.len(),
        violations,
        indeterminate,
    })
}
