//! Thin wrappers over the `faer` dense factorizations.
//!
//! faer's intra-factorization parallelism is switched to sequential on first
//! use: results must not depend on the worker count, and sweeps parallelize
//! over samples instead.

use std::sync::Once;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};
use crate::matrix::CMatrix;
use crate::scalar::{Real, C};

static SEQ: Once = Once::new();

fn init() {
    SEQ.call_once(|| faer::set_global_parallelism(Par::Seq));
}

fn backend<E: std::fmt::Debug>(what: &str) -> impl FnOnce(E) -> Error + '_ {
    move |e| Error::Linalg(format!("{what}: {e:?}"))
}

fn square<T: Real>(a: &CMatrix<T>, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )))
    }
}

/// Eigenvalues and unit right eigenvectors (columns) of a general matrix.
pub fn eig<T: Real>(a: &CMatrix<T>) -> Result<(Vec<C<T>>, CMatrix<T>)> {
    init();
    square(a, "eig")?;
    let e = a.as_faer().eigen().map_err(backend("eigen"))?;
    let vals: Vec<C<T>> = (0..a.rows()).map(|i| e.S()[i]).collect();
    let mut vecs = CMatrix::from_faer(e.U());
    for j in 0..vecs.cols() {
        crate::scalar::normalize(vecs.col_mut(j));
    }
    Ok((vals, vecs))
}

pub fn eigenvalues<T: Real>(a: &CMatrix<T>) -> Result<Vec<C<T>>> {
    init();
    square(a, "eigenvalues")?;
    a.as_faer().eigenvalues().map_err(backend("eigenvalues"))
}

/// `A = U diag(s) V^*` with `s` nonincreasing.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: CMatrix<T>,
    pub s: Vec<T>,
    pub v: CMatrix<T>,
}

pub fn svd<T: Real>(a: &CMatrix<T>) -> Result<Svd<T>> {
    init();
    let d = a.as_faer().thin_svd().map_err(backend("svd"))?;
    let k = a.rows().min(a.cols());
    Ok(Svd {
        u: CMatrix::from_faer(d.U()),
        s: (0..k).map(|i| d.S()[i].re).collect(),
        v: CMatrix::from_faer(d.V()),
    })
}

/// Singular values in nondecreasing order.
pub fn singular_values<T: Real>(a: &CMatrix<T>) -> Result<Vec<T>> {
    init();
    let mut s = a.as_faer().singular_values().map_err(backend("singular values"))?;
    s.reverse();
    Ok(s)
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues nondecreasing.
pub fn herm_eig<T: Real>(a: &CMatrix<T>) -> Result<(Vec<T>, CMatrix<T>)> {
    init();
    square(a, "herm_eig")?;
    let e = a
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(backend("self-adjoint eigen"))?;
    let vals = (0..a.rows()).map(|i| e.S()[i].re).collect();
    Ok((vals, CMatrix::from_faer(e.U())))
}

pub fn herm_eigenvalues<T: Real>(a: &CMatrix<T>) -> Result<Vec<T>> {
    init();
    square(a, "herm_eigenvalues")?;
    a.as_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(backend("self-adjoint eigenvalues"))
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hpd_inverse<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    init();
    square(a, "hpd_inverse")?;
    let llt = a
        .as_faer()
        .llt(Side::Lower)
        .map_err(|e| Error::PositivityLost(format!("{e:?}")))?;
    Ok(CMatrix::from_faer(llt.inverse().as_ref()))
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn hpd_solve<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<CMatrix<T>> {
    init();
    square(a, "hpd_solve")?;
    let llt = a
        .as_faer()
        .llt(Side::Lower)
        .map_err(|e| Error::PositivityLost(format!("{e:?}")))?;
    let mut x: Mat<C<T>> = b.as_faer().to_owned();
    llt.solve_in_place(x.as_mut());
    Ok(CMatrix::from_faer(x.as_ref()))
}

/// Whether a Hermitian matrix admits a Cholesky factorization.
pub fn is_positive_definite<T: Real>(a: &CMatrix<T>) -> bool {
    init();
    a.is_square() && a.as_faer().llt(Side::Lower).is_ok()
}

/// Solves `A X = B` with partial-pivoting LU.
pub fn solve<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<CMatrix<T>> {
    init();
    square(a, "solve")?;
    let lu = a.as_faer().partial_piv_lu();
    let mut x: Mat<C<T>> = b.as_faer().to_owned();
    lu.solve_in_place(x.as_mut());
    let x = CMatrix::from_faer(x.as_ref());
    if !x.is_finite() {
        return Err(Error::Linalg("singular system".into()));
    }
    Ok(x)
}

pub fn inverse<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    init();
    square(a, "inverse")?;
    let inv = CMatrix::from_faer(a.as_faer().partial_piv_lu().inverse().as_ref());
    if !inv.is_finite() {
        return Err(Error::Linalg("singular matrix".into()));
    }
    Ok(inv)
}

pub fn determinant<T: Real>(a: &CMatrix<T>) -> Result<C<T>> {
    init();
    square(a, "determinant")?;
    Ok(a.as_faer().determinant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;

    fn test_matrix(n: usize) -> CMatrix<f64> {
        CMatrix::from_fn(n, n, |i, j| {
            let x = (i * 7 + j * 3) as f64;
            cplx((x * 0.37).sin(), (x * 0.11 + 0.3).cos())
        })
    }

    #[test]
    fn eig_residuals_small() {
        let a = test_matrix(12);
        let (vals, vecs) = eig(&a).unwrap();
        for (k, &l) in vals.iter().enumerate() {
            let u = vecs.col(k);
            let r = a.matvec(u);
            let res: f64 = r
                .iter()
                .zip(u)
                .map(|(x, y)| (x - l * y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-12 * a.frobenius_norm(), "residual {res}");
        }
    }

    #[test]
    fn svd_reconstructs() {
        let a = test_matrix(9);
        let d = svd(&a).unwrap();
        let us = CMatrix::from_fn(9, 9, |i, j| d.u[(i, j)].scale(d.s[j]));
        let back = us.matmul(&d.v.adjoint());
        assert!(back.sub(&a).max_abs() < 1e-12);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let sv = singular_values(&a).unwrap();
        assert!(sv.windows(2).all(|w| w[0] <= w[1]));
        assert!((sv[8] - d.s[0]).abs() < 1e-12);
    }

    #[test]
    fn hpd_inverse_is_inverse() {
        let a = test_matrix(8);
        let h = a.adjoint().matmul(&a).add(&CMatrix::identity(8));
        let inv = hpd_inverse(&h).unwrap();
        assert!(inv.matmul(&h).sub(&CMatrix::identity(8)).max_abs() < 1e-12);
        let x = hpd_solve(&h, &CMatrix::identity(8)).unwrap();
        assert!(x.sub(&inv).max_abs() < 1e-12);
    }

    #[test]
    fn f32_backend_works() {
        let a: CMatrix<f32> = test_matrix(6).cast();
        let (vals, _) = eig(&a).unwrap();
        let tr: C<f32> = vals.iter().sum();
        assert!((tr - a.trace()).norm() < 1e-4);
    }
}
