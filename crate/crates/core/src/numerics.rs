//! Dense linear algebra and iterative scaling primitives.
//!
//! Matrices are stored row-major as `ndarray::Array2<f64>` with one observation per row;
//! decompositions are delegated to `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative threshold below which a singular value or eigenvalue counts as zero.
const RANK_TOL: f64 = 1e-10;

pub(crate) fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn ensure_finite(a: &Array2<f64>, step: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(step, "input contains NaN or infinite entries"))
    }
}

/// Thin singular value decomposition `A = U · diag(S) · Vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Array2<f64>,
    /// Singular values, nonincreasing.
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.s.view().insert_axis(Axis(0));
        us.dot(&self.vt)
    }
}

/// Thin SVD with singular values sorted descending and a deterministic sign convention:
/// the largest-magnitude entry of every column of `U` is positive.
pub fn svd(a: &Array2<f64>) -> Result<SvdResult> {
    ensure_finite(a, "svd")?;
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("svd of an empty matrix".into()));
    }
    let decomposition = SVD::try_new(to_dmatrix(a), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical("svd", "did not converge"))?;
    let u = decomposition.u.expect("requested U");
    let vt = decomposition.v_t.expect("requested Vt");
    let sv = decomposition.singular_values;

    let k = sv.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]).then(x.cmp(&y)));

    let mut out_u = Array2::zeros((rows, k));
    let mut out_vt = Array2::zeros((k, cols));
    let mut out_s = Array1::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        out_s[dst] = sv[src];
        let col = u.column(src);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..rows {
            out_u[[i, dst]] = sign * u[(i, src)];
        }
        for j in 0..cols {
            out_vt[[dst, j]] = sign * vt[(src, j)];
        }
    }
    Ok(SvdResult {
        u: out_u,
        s: out_s,
        vt: out_vt,
    })
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
/// Columns of the returned matrix are the matching unit eigenvectors.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    ensure_finite(a, "symmetric eigen")?;
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!("eigen of non-square {n}x{}", a.ncols())));
    }
    let eig = SymmetricEigen::new(to_dmatrix(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, dst]] = sign * col[i];
        }
    }
    Ok((values, vectors))
}

/// Applies `f` to the eigenvalues of a symmetric matrix: `V · diag(f(λ)) · Vᵀ`.
pub(crate) fn symmetric_function(a: &Array2<f64>, f: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let (values, vectors) = symmetric_eigen(a)?;
    let scaled = &vectors * &values.mapv(f).insert_axis(Axis(0));
    Ok(scaled.dot(&vectors.t()))
}

/// Column means and the centered copy of `x`.
pub fn center_columns(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let mean = x
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(x.ncols()));
    let centered = x - &mean.view().insert_axis(Axis(0));
    (mean, centered)
}

/// Sample column covariance (`n − 1` denominator, population form for a single row).
pub fn covariance(x: &Array2<f64>) -> Array2<f64> {
    let (_, centered) = center_columns(x);
    let denom = (x.nrows().max(2) - 1) as f64;
    centered.t().dot(&centered) / denom
}

/// Outcome of an orthogonal Procrustes solve.
#[derive(Debug, Clone)]
pub struct ProcrustesSolution {
    /// Orthogonal `d×d` map minimizing `‖X_S·W − X_T‖_F`.
    pub w: Array2<f64>,
    /// The cross-covariance `X_Sᵀ·X_T` was rank deficient, so `W` is not unique.
    pub rank_deficient: bool,
}

/// Orthogonal Procrustes: `W = U·Vᵀ` with `U·Σ·Vᵀ = SVD(X_Sᵀ·X_T)` (row-vector convention).
pub fn solve_procrustes(xs: &Array2<f64>, xt: &Array2<f64>) -> Result<ProcrustesSolution> {
    if xs.dim() != xt.dim() {
        return Err(Error::DimensionMismatch(format!(
            "procrustes inputs {:?} vs {:?}",
            xs.dim(),
            xt.dim()
        )));
    }
    if xs.nrows() == 0 {
        return Err(Error::Empty("procrustes needs at least one aligned pair".into()));
    }
    let cross = xs.t().dot(xt);
    let dec = svd(&cross)?;
    let smax = dec.s[0];
    let smin = dec.s[dec.s.len() - 1];
    Ok(ProcrustesSolution {
        w: dec.u.dot(&dec.vt),
        rank_deficient: smax == 0.0 || smin <= RANK_TOL * smax,
    })
}

/// Canonical correlation analysis between two aligned views.
#[derive(Debug, Clone)]
pub struct CcaSolution {
    /// `d×k` projection for the source view.
    pub a: Array2<f64>,
    /// `d×k` projection for the target view.
    pub b: Array2<f64>,
    /// Canonical correlations, nonincreasing, in `[0, 1]`.
    pub correlations: Array1<f64>,
    /// Some within-view covariance eigenvalue fell below the regularization floor.
    pub regularized: bool,
}

/// Regularization floor for within-view covariance eigenvalues in [`solve_cca`].
pub const CCA_EPSILON: f64 = 1e-8;

/// CCA by whitening each view with its covariance inverse square root and taking the SVD
/// of the whitened cross-covariance. `keep_dims = None` keeps every dimension.
pub fn solve_cca(xs: &Array2<f64>, xt: &Array2<f64>, keep_dims: Option<usize>) -> Result<CcaSolution> {
    if xs.dim() != xt.dim() {
        return Err(Error::DimensionMismatch(format!("cca inputs {:?} vs {:?}", xs.dim(), xt.dim())));
    }
    let (n, d) = xs.dim();
    if n < 2 {
        return Err(Error::invalid("cca needs at least two aligned pairs"));
    }
    let k = keep_dims.unwrap_or(d);
    if k == 0 || k > d {
        return Err(Error::invalid(format!("cca keep_dims must be in 1..={d}, got {k}")));
    }
    let (_, cs) = center_columns(xs);
    let (_, ct) = center_columns(xt);
    let denom = (n - 1) as f64;
    let css = cs.t().dot(&cs) / denom;
    let ctt = ct.t().dot(&ct) / denom;
    let cst = cs.t().dot(&ct) / denom;

    let mut regularized = false;
    let mut inv_sqrt = |c: &Array2<f64>| -> Result<Array2<f64>> {
        let (values, _) = symmetric_eigen(c)?;
        if values.iter().any(|&v| v < CCA_EPSILON) {
            regularized = true;
        }
        symmetric_function(c, |v| 1.0 / v.max(CCA_EPSILON).sqrt())
    };
    let ws = inv_sqrt(&css)?;
    let wt = inv_sqrt(&ctt)?;
    let dec = svd(&ws.dot(&cst).dot(&wt))?;
    let u = dec.u.slice(ndarray::s![.., ..k]).to_owned();
    let v = dec.vt.t().slice(ndarray::s![.., ..k]).to_owned();
    Ok(CcaSolution {
        a: ws.dot(&u),
        b: wt.dot(&v),
        correlations: dec.s.slice(ndarray::s![..k]).mapv(|c| c.clamp(0.0, 1.0)),
        regularized,
    })
}

/// Mean-centered projection onto the leading principal components.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// `n×k` coordinates.
    pub projected: Array2<f64>,
    /// `d×k` orthonormal basis.
    pub basis: Array2<f64>,
    pub mean: Array1<f64>,
    /// Variance captured by each kept component (covariance eigenvalues).
    pub explained_variance: Array1<f64>,
    /// Number of kept components with numerically zero variance.
    pub degenerate_components: usize,
}

pub fn pca_project(x: &Array2<f64>, out_dim: usize) -> Result<PcaProjection> {
    let (n, d) = x.dim();
    if n == 0 {
        return Err(Error::Empty("pca of an empty matrix".into()));
    }
    if out_dim == 0 || out_dim > d {
        return Err(Error::invalid(format!("pca out_dim must be in 1..={d}, got {out_dim}")));
    }
    let (mean, centered) = center_columns(x);
    let (values, vectors) = symmetric_eigen(&covariance(x))?;
    let basis = vectors.slice(ndarray::s![.., ..out_dim]).to_owned();
    let explained = values.slice(ndarray::s![..out_dim]).mapv(|v| v.max(0.0));
    let top = values[0].max(0.0);
    let degenerate_components = explained.iter().filter(|&&v| v <= RANK_TOL * top.max(f64::MIN_POSITIVE)).count();
    Ok(PcaProjection {
        projected: centered.dot(&basis),
        basis,
        mean,
        explained_variance: explained,
        degenerate_components,
    })
}

/// Scaling vectors produced by [`sinkhorn_scale`].
#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    /// Max-abs deviation of the coupling's row sums from `p` (columns match `q` exactly).
    pub violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SinkhornResult {
    /// The coupling `diag(a)·K·diag(b)`.
    pub fn coupling(&self, kernel: &Array2<f64>) -> Array2<f64> {
        kernel * &self.a.view().insert_axis(Axis(1)) * &self.b.view().insert_axis(Axis(0))
    }
}

pub const SINKHORN_MAX_ITER: usize = 1000;
pub const SINKHORN_TOL: f64 = 1e-9;

/// Alternating Sinkhorn updates `a = p ⊘ K·b`, `b = q ⊘ Kᵀ·a` starting from `b = 1`.
pub fn sinkhorn_scale(
    kernel: &Array2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    let (n, m) = kernel.dim();
    if p.len() != n || q.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "kernel {n}x{m} with marginals of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    if kernel.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::numerical(
            "sinkhorn",
            "kernel must be strictly positive and finite; increase the entropic regularization",
        ));
    }
    for (name, marginal) in [("p", p), ("q", q)] {
        let total: f64 = marginal.sum();
        if marginal.iter().any(|&v| v < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("{name} is not a probability vector")));
        }
    }

    let mut a = Array1::ones(n);
    let mut b = Array1::ones(m);
    let mut violation = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let kb = kernel.dot(&b);
        a = p / &kb;
        let kta = kernel.t().dot(&a);
        b = q / &kta;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                "sinkhorn",
                "scaling vectors overflowed; increase the entropic regularization",
            ));
        }
        let rows = &a * &kernel.dot(&b);
        violation = rows
            .iter()
            .zip(p.iter())
            .map(|(r, t)| (r - t).abs())
            .fold(0.0, f64::max);
        if violation < tol {
            break;
        }
    }
    Ok(SinkhornResult {
        a,
        b,
        violation,
        iterations,
        converged: violation < tol,
    })
}

/// Minimum-norm least-squares solution of `A·X ≈ B` via the pseudo-inverse of `A`.
pub fn least_squares(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!("least squares with {} and {} rows", a.nrows(), b.nrows())));
    }
    let dec = svd(a)?;
    let cutoff = RANK_TOL * dec.s[0];
    let inv = dec.s.mapv(|v| if v > cutoff { 1.0 / v } else { 0.0 });
    let ut_b = dec.u.t().dot(b) * &inv.insert_axis(Axis(1));
    Ok(dec.vt.t().dot(&ut_b))
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array2<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    from_dmatrix(&q)
}

/// Max-abs deviation of `WᵀW` from the identity.
pub fn orthogonality_error(w: &Array2<f64>) -> f64 {
    let gram = w.t().dot(w);
    gram.indexed_iter()
        .map(|((i, j), &v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Rows scaled to unit Euclidean norm; zero rows stay zero.
pub fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}
