//! Complex matrix kernels with the ordering conventions used everywhere else.
//!
//! Singular values and eigenvalues are always returned in ascending order.
//! Backends that produce other orders are re-indexed here, once, so that
//! "rightmost columns" always means "strongest directions".

use nalgebra::linalg::{Cholesky, SymmetricEigen, SVD};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = num_complex::Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

const SVD_MAX_ITER: usize = 10_000;
const HERMITIAN_TOL: f64 = 1e-10;

/// Ascending-order singular value decomposition.
///
/// `sigma` holds the `k = min(rows, cols)` singular values in increasing
/// order. The last `k` columns of `u` and of `v` are the singular vectors
/// paired with `sigma`; any leading columns complete the bases to unitary
/// matrices (they correspond to the null spaces). A thin decomposition
/// (see [`svd_ascending_thin`]) has exactly `k` columns in each factor.
#[derive(Debug, Clone)]
pub struct SvdAscending {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

impl SvdAscending {
    /// The `count` rightmost columns of `u` (the `count` largest singular values).
    pub fn u_right(&self, count: usize) -> CMat {
        let n = self.u.ncols();
        self.u.columns(n - count, count).into_owned()
    }

    /// The `count` rightmost columns of `v`.
    pub fn v_right(&self, count: usize) -> CMat {
        let n = self.v.ncols();
        self.v.columns(n - count, count).into_owned()
    }

    /// The `count` largest singular values, ascending.
    pub fn sigma_right(&self, count: usize) -> &[f64] {
        &self.sigma[self.sigma.len() - count..]
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }

    pub fn min_sigma(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) V^H` using the paired columns only.
    pub fn reconstruct(&self) -> CMat {
        let k = self.rank();
        let u = self.u_right(k);
        let v = self.v_right(k);
        let mut us = u;
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * v.adjoint()
    }
}

fn ensure_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::contract(format!("{what}: matrix has non-finite entries")))
    }
}

/// Thin SVD, ascending. `u` is `rows x k`, `v` is `cols x k`.
pub fn svd_ascending_thin(m: &CMat) -> Result<SvdAscending> {
    ensure_finite(m, "svd")?;
    if m.is_empty() {
        return Err(Error::contract("svd of an empty matrix"));
    }
    let svd = SVD::try_new_unordered(m.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::numeric("SVD did not converge"))?;
    let u = svd.u.ok_or_else(|| Error::numeric("SVD returned no left vectors"))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::numeric("SVD returned no right vectors"))?;
    let values = svd.singular_values;

    // Stable sort keeps backend order among ties.
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let k = order.len();
    let mut u_sorted = CMat::zeros(m.nrows(), k);
    let mut v_sorted = CMat::zeros(m.ncols(), k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).adjoint());
        sigma.push(values[src]);
    }
    Ok(SvdAscending {
        u: u_sorted,
        sigma,
        v: v_sorted,
    })
}

/// Full SVD, ascending: `u` is `rows x rows` and `v` is `cols x cols`, both unitary.
pub fn svd_ascending(m: &CMat) -> Result<SvdAscending> {
    let thin = svd_ascending_thin(m)?;
    Ok(SvdAscending {
        u: complete_unitary(&thin.u),
        sigma: thin.sigma,
        v: complete_unitary(&thin.v),
    })
}

/// Extends a matrix with orthonormal columns to a square unitary matrix.
/// The given columns end up as the rightmost columns of the result.
///
/// The complement is built by pivoted Gram-Schmidt on the columns of the
/// projector `I - Q Q^H`, which is deterministic.
pub fn complete_unitary(q: &CMat) -> CMat {
    let (m, k) = q.shape();
    if k >= m {
        return q.clone();
    }
    let mut residual = CMat::identity(m, m) - q * q.adjoint();
    let mut basis: Vec<CVec> = Vec::with_capacity(m - k);
    for _ in 0..(m - k) {
        let (best, _) = (0..m)
            .map(|j| (j, residual.column(j).norm()))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let mut col: CVec = residual.column(best).into_owned();
        // Re-orthogonalize once against everything accepted so far.
        for b in basis.iter() {
            let proj = b.dotc(&col);
            col -= b * proj;
        }
        let qcol_proj = q.adjoint() * &col;
        col -= q * qcol_proj;
        let norm = col.norm();
        col /= C64::new(norm, 0.0);
        // Deflate the residual projector.
        let outer = &col * col.adjoint();
        residual -= &outer * &residual;
        basis.push(col);
    }
    let mut out = CMat::zeros(m, m);
    for (j, b) in basis.iter().enumerate() {
        out.set_column(j, b);
    }
    for j in 0..k {
        out.set_column(m - k + j, &q.column(j));
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix with real eigenvalues ascending.
pub fn evd_hermitian_ascending(a: &CMat) -> Result<(CMat, Vec<f64>)> {
    ensure_finite(a, "evd")?;
    if !a.is_square() {
        return Err(Error::contract("evd of a non-square matrix"));
    }
    let skew = (a - a.adjoint()).norm();
    if skew > HERMITIAN_TOL * a.norm().max(1.0) {
        return Err(Error::contract(format!(
            "evd input is not Hermitian (|A - A^H|_F = {skew:e})"
        )));
    }
    let sym = hermitian_part(a);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::numeric("Hermitian eigendecomposition did not converge"))?;
    let values = eig.eigenvalues;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let n = order.len();
    let mut u = CMat::zeros(n, n);
    let mut lambda = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &eig.eigenvectors.column(src));
        lambda.push(values[src]);
    }
    Ok((u, lambda))
}

/// Default numerical-rank tolerance factor: `1e-12 * max(rows, cols)`.
/// Singular values below `factor * max_sigma` count as zero.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    1e-12 * rows.max(cols) as f64
}

/// Moore-Penrose pseudoinverse. Singular values below `rank_tol * max_sigma`
/// are treated as zero.
pub fn pinv(m: &CMat, rank_tol: f64) -> Result<CMat> {
    if !(rank_tol > 0.0) {
        return Err(Error::contract("pinv rank_tol must be positive"));
    }
    let svd = svd_ascending_thin(m)?;
    Ok(pinv_from_svd(&svd, rank_tol))
}

pub fn pinv_default(m: &CMat) -> Result<CMat> {
    pinv(m, default_rank_tol(m.nrows(), m.ncols()))
}

pub fn pinv_from_svd(svd: &SvdAscending, rank_tol: f64) -> CMat {
    let k = svd.rank();
    let threshold = rank_tol * svd.max_sigma();
    let mut v = svd.v_right(k);
    for (j, s) in svd.sigma.iter().enumerate() {
        let inv = if *s > threshold { 1.0 / s } else { 0.0 };
        v.column_mut(j).scale_mut(inv);
    }
    v * svd.u_right(k).adjoint()
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Solves `A X = B` for Hermitian positive-definite `A` (symmetrized first).
pub fn hpd_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let chol = Cholesky::new(hermitian_part(a))
        .ok_or_else(|| Error::numeric("matrix is not positive definite"))?;
    Ok(chol.solve(b))
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(a: &CMat) -> Result<CMat> {
    let chol = Cholesky::new(hermitian_part(a))
        .ok_or_else(|| Error::numeric("matrix is not positive definite"))?;
    Ok(chol.inverse())
}

/// Lower Cholesky factor `L` with `A = L L^H`.
pub fn hpd_cholesky(a: &CMat) -> Result<CMat> {
    let chol = Cholesky::new(hermitian_part(a))
        .ok_or_else(|| Error::numeric("matrix is not positive definite"))?;
    Ok(chol.unpack())
}

pub fn trace_re(a: &CMat) -> f64 {
    a.trace().re
}

/// `tr(A A^H)`.
pub fn energy(a: &CMat) -> f64 {
    a.norm_squared()
}

/// Complex matrix with real-diagonal `d` (`rows x cols`, extra entries zero).
pub fn real_diag(d: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(
        d.len(),
        d.iter().map(|x| C64::new(*x, 0.0)),
    ))
}

/// Scales column `j` of `m` by `d[j]`, i.e. `m * diag(d)`.
pub fn scale_columns(m: &CMat, d: &[f64]) -> CMat {
    let mut out = m.clone();
    for (j, s) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(*s);
    }
    out
}

/// ZMCSC Gaussian matrix: real and imaginary parts each `N(0, variance / 2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMat {
    let sd = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(sd * re, sd * im)
    })
}

/// Haar-distributed unitary matrix (QR of a Gaussian matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    random_semi_unitary(n, n, rng)
}

/// Random `rows x cols` matrix with orthonormal columns (`rows >= cols`).
pub fn random_semi_unitary<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    assert!(rows >= cols, "semi-unitary needs rows >= cols");
    let g = complex_gaussian(rows, cols, 1.0, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        let col = q.column(j) * phase;
        q.set_column(j, &col);
    }
    q
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn svd_invariants_hold(seed in any::<u64>(), rows in 1usize..9, cols in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = complex_gaussian(rows, cols, 1.0, &mut rng);
            let s = svd_ascending(&m).unwrap();
            prop_assert!(s.sigma.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(s.sigma.iter().all(|x| *x >= 0.0));
            let eye_u = CMat::identity(rows, rows);
            let eye_v = CMat::identity(cols, cols);
            prop_assert!((s.u.adjoint() * &s.u - eye_u).norm() < 1e-10);
            prop_assert!((s.v.adjoint() * &s.v - eye_v).norm() < 1e-10);
            prop_assert!((s.reconstruct() - &m).norm() / m.norm() < 1e-10);
        }
    }
}
