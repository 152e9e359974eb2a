//! Dense symmetric linear algebra used by every other module.
//!
//! Matrices are small (order well under a hundred), so everything is dense and
//! the symmetric eigensolver is a cyclic Jacobi iteration. The Jacobi sweep is
//! slow compared to tridiagonal QR for large orders but is deterministic and
//! accurate to a few ulps in the eigenvalues, which is what the multiplicity
//! tests in [`crate::problem`] need.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default clustering tolerance for eigenvalue multiplicities.
pub const DEFAULT_EIG_TOL: f64 = 1e-8;

const JACOBI_MAX_ORDER: usize = 64;
const JACOBI_MAX_SWEEPS: usize = 100;

/// A real symmetric matrix. The upper triangle is authoritative: constructors
/// mirror it into the lower triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DMatrix<f64>", into = "DMatrix<f64>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds from a square matrix, copying the upper triangle onto the lower one.
    pub fn from_upper(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(invalid("symmetric matrix must have order >= 1"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        let mut m = m;
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(i, j)] = m[(j, i)];
            }
        }
        Ok(Self(m))
    }

    /// Same as [`SymMatrix::from_upper`] but first averages `m` with its
    /// transpose. Used for products that are symmetric up to rounding.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid("symmetrize needs a square matrix"));
        }
        let t = m.transpose();
        Self::from_upper((m + t) * 0.5)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("matrix rows must all have length equal to the number of rows"));
        }
        Self::from_upper(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    /// `xᵀ S x`
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }
}

impl TryFrom<DMatrix<f64>> for SymMatrix {
    type Error = Error;
    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        SymMatrix::from_upper(m)
    }
}

impl From<SymMatrix> for DMatrix<f64> {
    fn from(s: SymMatrix) -> Self {
        s.0
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// as columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// Spectral norm of the decomposed matrix.
    pub fn norm2(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        q * DMatrix::from_diagonal(&self.eigenvalues) * q.transpose()
    }
}

/// Symmetric eigendecomposition. Cyclic Jacobi up to order 64, nalgebra's
/// tridiagonal QR beyond that.
pub fn eig_sym(s: &SymMatrix) -> Result<SpectralDecomposition> {
    let n = s.order();
    let (values, vectors) = if n <= JACOBI_MAX_ORDER {
        jacobi(s.as_matrix())?
    } else {
        let e =
            nalgebra::SymmetricEigen::try_new(s.as_matrix().clone(), 1e-15, 10_000).ok_or(Error::SolverFailure {
                message: "symmetric QR did not converge".into(),
                residual: f64::NAN,
            })?;
        (e.eigenvalues, e.eigenvectors)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &vectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn jacobi(s: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    let mut a = s.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    if scale == 0.0 {
        return Ok((DVector::zeros(n), v));
    }

    let off = |a: &DMatrix<f64>| -> f64 {
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
        acc.sqrt()
    };

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= f64::EPSILON * scale {
            return Ok((a.diagonal(), v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let residual = off(&a);
    if residual <= 1e-12 * scale {
        return Ok((a.diagonal(), v));
    }
    Err(Error::SolverFailure {
        message: format!("Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"),
        residual,
    })
}

/// The bottom eigenvalue, its numerical multiplicity and an orthonormal basis
/// of the associated invariant subspace.
#[derive(Debug, Clone)]
pub struct MinEigenspace {
    pub value: f64,
    pub multiplicity: usize,
    /// `n × multiplicity`, orthonormal columns.
    pub basis: DMatrix<f64>,
}

/// Eigenvalues within `tol·(1+‖S‖₂)` of the smallest one are counted as copies of it.
pub fn min_eig_multiplicity(s: &SymMatrix, tol: f64) -> Result<MinEigenspace> {
    if !(tol > 0.0) {
        return Err(invalid("eigenvalue clustering tolerance must be positive"));
    }
    let eig = eig_sym(s)?;
    let lo = eig.min();
    let threshold = tol * (1.0 + eig.norm2());
    let multiplicity = eig.eigenvalues.iter().take_while(|&&l| l - lo <= threshold).count();
    let basis = eig.eigenvectors.columns(0, multiplicity).into_owned();
    Ok(MinEigenspace {
        value: lo,
        multiplicity,
        basis,
    })
}

/// `I_k ⊗ M`: block-diagonal with `k` copies of `M`.
pub fn kron_identity(k: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(k >= 1, "kron_identity needs k >= 1");
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(k * r, k * c);
    for b in 0..k {
        out.view_mut((b * r, b * c), (r, c)).copy_from(m);
    }
    out
}

/// Column-major stacking of the entries of `m`.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra stores column-major already.
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for a `rows × cols` matrix.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// `λ_min(S) ≥ −tol·(1+‖S‖₂)`.
pub fn is_psd(s: &SymMatrix, tol: f64) -> bool {
    match eig_sym(s) {
        Ok(e) => e.min() >= -tol * (1.0 + e.norm2()),
        Err(_) => false,
    }
}

/// Smallest eigenvalue, or NaN if the eigensolver fails.
pub fn min_eigenvalue(s: &SymMatrix) -> f64 {
    eig_sym(s).map(|e| e.min()).unwrap_or(f64::NAN)
}

/// Numerical rank of the span: singular values at least `tol·σ_max` count.
pub fn span_rank(vectors: &[DVector<f64>], tol: f64) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let n = vectors[0].len();
    assert!(
        vectors.iter().all(|v| v.len() == n),
        "span_rank: vectors of unequal length"
    );
    let m = DMatrix::from_columns(vectors);
    matrix_rank(&m, tol)
}

/// Numerical rank relative to the largest singular value.
pub fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= tol * smax).count()
}

/// Orthonormal basis of the null space of `m` (columns), using singular values
/// below `tol·max(σ_max, 1)` as zero.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let ncols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    // Work with the Gram matrix so the full right singular basis is available
    // even when m is wide.
    let gram = SymMatrix::symmetrize(m.transpose() * m).expect("gram matrix is square");
    let eig = eig_sym(&gram).expect("Jacobi on a Gram matrix converges");
    let smax = eig.max().max(0.0).sqrt();
    let cut = tol * smax.max(1.0);
    let idx: Vec<usize> = (0..ncols)
        .filter(|&i| eig.eigenvalues[i].max(0.0).sqrt() < cut)
        .collect();
    let mut out = DMatrix::zeros(ncols, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

/// Solves `Q z = r` in the least-squares sense with the pseudo-inverse of a
/// symmetric `Q`, dropping eigenvalues below `rel_tol·max|λ|`. Returns the
/// solution and the residual norm `‖Q z − r‖`.
pub fn pinv_solve(q: &SymMatrix, r: &DVector<f64>, rel_tol: f64) -> Result<(DVector<f64>, f64)> {
    let eig = eig_sym(q)?;
    let cut = rel_tol * eig.norm2();
    let qt_r = eig.eigenvectors.transpose() * r;
    let mut coeff = DVector::zeros(r.len());
    for i in 0..r.len() {
        let l = eig.eigenvalues[i];
        if l.abs() > cut && l != 0.0 {
            coeff[i] = qt_r[i] / l;
        }
    }
    let z = &eig.eigenvectors * coeff;
    let resid = (q.as_matrix() * &z - r).norm();
    Ok((z, resid))
}
