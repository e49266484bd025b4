//! Paired left/right eigenvectors of non-Hermitian matrices.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::CMatrix;
use crate::scalar::{abs2, creal, dotc, normalize, Real, C};

pub const TOL_EIG: f64 = 1e-8;
pub const TOL_BIORTH_PER_N: f64 = 1e-10;

/// Eigenvalue with unit right (`u`) and left (`v`) eigenvectors, phased so
/// that `v^* u` is real and nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenTriple<T> {
    pub lambda: C<T>,
    pub u: Vec<C<T>>,
    pub v: Vec<C<T>>,
    pub biorth: C<T>,
}

impl<T: Real> EigenTriple<T> {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Diagonal overlap `O_ii = 1 / |v^* u|^2` for unit vectors.
    pub fn self_overlap(&self) -> T {
        abs2(self.biorth).recip()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralSet<T> {
    pub digest: String,
    pub triples: Vec<EigenTriple<T>>,
}

/// Hex SHA-256 of the matrix in its binary dump format.
pub fn matrix_digest<T: Real>(a: &CMatrix<T>) -> String {
    let mut buf = Vec::new();
    a.write_cmat(&mut buf).expect("in-memory write");
    let h = Sha256::digest(&buf);
    h.iter().map(|b| format!("{b:02x}")).collect()
}

fn residual<T: Real>(a: &CMatrix<T>, lambda: C<T>, x: &[C<T>], adjoint: bool) -> T {
    let y = if adjoint {
        a.adjoint_matvec(x)
    } else {
        a.matvec(x)
    };
    let l = if adjoint { lambda.conj() } else { lambda };
    y.iter()
        .zip(x)
        .fold(T::zero(), |acc, (yi, xi)| acc + abs2(*yi - l * *xi))
        .sqrt()
}

/// Makes the largest-modulus entry of `u` real positive.
fn gauge_right<T: Real>(u: &mut [C<T>]) {
    let k = (0..u.len())
        .max_by(|&i, &j| abs2(u[i]).partial_cmp(&abs2(u[j])).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    if u.is_empty() || u[k].norm() == T::zero() {
        return;
    }
    let ph = u[k].conj() / u[k].norm();
    u.iter_mut().for_each(|x| *x *= ph);
}

/// Builds a triple from raw vectors: normalizes, gauges, checks residuals.
fn make_triple<T: Real>(a: &CMatrix<T>, lambda: C<T>, mut u: Vec<C<T>>, mut v: Vec<C<T>>) -> Result<EigenTriple<T>> {
    let n = a.rows();
    normalize(&mut u);
    normalize(&mut v);
    gauge_right(&mut u);
    let b = dotc(&v, &u);
    if b.norm() > T::zero() {
        // (v e^{iθ})^* u = e^{-iθ} v^* u: choose θ = arg(v^* u)
        let ph = b / b.norm();
        v.iter_mut().for_each(|x| *x *= ph);
    }
    let biorth = creal(dotc(&v, &u).re);
    let scale = a.frobenius_norm().max(T::min_positive_value());
    let tol = T::lit(TOL_EIG) * scale;
    let (ru, rv) = (residual(a, lambda, &u, false), residual(a, lambda, &v, true));
    if ru > tol || rv > tol {
        return Err(Error::DefectivePair(format!(
            "residuals {ru:e}, {rv:e} at lambda = {lambda}"
        )));
    }
    if biorth.re < T::lit(TOL_BIORTH_PER_N) * T::from_usize_lossy(n) {
        return Err(Error::DefectivePair(format!("|v*u| = {:e}", biorth.re)));
    }
    Ok(EigenTriple { lambda, u, v, biorth })
}

fn sort_triples<T: Real>(t: &mut [EigenTriple<T>]) {
    t.sort_by(|x, y| {
        (x.lambda.re, x.lambda.im)
            .partial_cmp(&(y.lambda.re, y.lambda.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Full eigendecomposition with paired left vectors. Left vectors are right
/// eigenvectors of `A^*` matched to `λ` by nearest `conj(μ)`.
pub fn eig_pairs<T: Real>(a: &CMatrix<T>) -> Result<SpectralSet<T>> {
    let n = a.rows();
    let (lr, ur) = linalg::eig(a)?;
    let (ll, vl) = linalg::eig(&a.adjoint())?;
    let mut cand: Vec<(T, usize, usize)> = Vec::with_capacity(n * n);
    for (i, &l) in lr.iter().enumerate() {
        for (j, &m) in ll.iter().enumerate() {
            cand.push(((l - m.conj()).norm(), i, j));
        }
    }
    cand.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut right_used = vec![false; n];
    let mut left_of = vec![usize::MAX; n];
    let mut left_used = vec![false; n];
    for (_, i, j) in cand {
        if !right_used[i] && !left_used[j] {
            right_used[i] = true;
            left_used[j] = true;
            left_of[i] = j;
        }
    }
    let mut triples = (0..n)
        .map(|i| make_triple(a, lr[i], ur.col(i).to_vec(), vl.col(left_of[i]).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    sort_triples(&mut triples);
    Ok(SpectralSet {
        digest: matrix_digest(a),
        triples,
    })
}

fn check_targets<T: Real>(targets: &[C<T>]) -> Result<()> {
    if let Some(z) = targets.iter().find(|z| z.norm() >= T::one()) {
        return Err(Error::InvalidArgument(format!("target {z} outside the unit disk")));
    }
    Ok(())
}

fn nearest_indices<T: Real>(lambdas: &[C<T>], targets: &[C<T>], epsilon: T) -> Result<Vec<usize>> {
    check_targets(targets)?;
    let n = lambdas.len();
    let idx: Vec<usize> = targets
        .iter()
        .map(|&z| {
            (0..n)
                .min_by(|&i, &j| {
                    (lambdas[i] - z)
                        .norm()
                        .partial_cmp(&(lambdas[j] - z).norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(i.cmp(&j))
                })
                .expect("nonempty spectrum")
        })
        .collect();
    let min_sep = T::from_usize_lossy(n).powf(T::lit(-0.5) + epsilon);
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            if idx[a] == idx[b] {
                return Err(Error::SeparationViolated(format!(
                    "targets {a} and {b} select the same eigenvalue"
                )));
            }
            let d = (lambdas[idx[a]] - lambdas[idx[b]]).norm();
            if d < min_sep {
                return Err(Error::SeparationViolated(format!(
                    "selected eigenvalues {d:e} apart, need {min_sep:e}"
                )));
            }
        }
    }
    Ok(idx)
}

/// Nearest eigenvalue per target, enforcing pairwise separation
/// `N^{-1/2+ε}` among the selected eigenvalues.
pub fn select_near<T: Real>(s: &SpectralSet<T>, targets: &[C<T>], epsilon: T) -> Result<Vec<EigenTriple<T>>> {
    let lambdas: Vec<C<T>> = s.triples.iter().map(|t| t.lambda).collect();
    let idx = nearest_indices(&lambdas, targets, epsilon)?;
    Ok(idx.into_iter().map(|i| s.triples[i].clone()).collect())
}

/// Left eigenvector for a known eigenvalue by inverse iteration on `(A - λ)^*`.
pub fn left_vector<T: Real>(a: &CMatrix<T>, lambda: C<T>, start: &[C<T>]) -> Result<Vec<C<T>>> {
    let n = a.rows();
    // a tiny shift keeps the factorization nonsingular without hurting accuracy
    let nudge = a.frobenius_norm().max(T::one()) * T::epsilon() * T::lit(16.0);
    let b = a.shift(lambda + C::new(nudge, nudge)).adjoint();
    let mut x = start.to_vec();
    normalize(&mut x);
    for _ in 0..3 {
        let rhs = CMatrix::from_col_major(n, 1, x.clone())?;
        let y = linalg::solve(&b, &rhs)?;
        x = y.col(0).to_vec();
        if normalize(&mut x) == T::zero() {
            return Err(Error::DefectivePair("inverse iteration collapsed".into()));
        }
    }
    Ok(x)
}

/// Selected triples from a single eigendecomposition of `A`: right vectors
/// come from the decomposition, left vectors by inverse iteration. Selection
/// and separation rules are those of [`select_near`].
pub fn select_targets<T: Real>(a: &CMatrix<T>, targets: &[C<T>], epsilon: T) -> Result<Vec<EigenTriple<T>>> {
    let (lambdas, vecs) = linalg::eig(a)?;
    let idx = nearest_indices(&lambdas, targets, epsilon)?;
    idx.into_iter()
        .map(|i| {
            let u = vecs.col(i).to_vec();
            let v = left_vector(a, lambdas[i], &u)?;
            make_triple(a, lambdas[i], u, v)
        })
        .collect()
}

/// Overlap matrix `O_ij = (u_j^* u_i)(v_i^* v_j)` with `v` rescaled so that
/// `v_i^* u_j = δ_ij`.
pub fn overlap_matrix<T: Real>(s: &SpectralSet<T>) -> Result<CMatrix<T>> {
    let n = s.triples.len();
    let ucols: Vec<Vec<C<T>>> = s.triples.iter().map(|t| t.u.clone()).collect();
    let vcols: Vec<Vec<C<T>>> = s
        .triples
        .iter()
        .map(|t| {
            if t.biorth.re <= T::zero() {
                return Err(Error::DefectivePair("zero biorthogonality".into()));
            }
            Ok(t.v.iter().map(|x| x.unscale(t.biorth.re)).collect())
        })
        .collect::<Result<_>>()?;
    let u = CMatrix::from_columns(&ucols);
    let v = CMatrix::from_columns(&vcols);
    let vu = v.adjoint().matmul(&u);
    let dev = vu.sub(&CMatrix::identity(n)).max_abs();
    if dev > T::lit(1e-8) {
        return Err(Error::DefectivePair(format!("biorthogonality defect {dev:e}")));
    }
    let gu = u.adjoint().matmul(&u);
    let gv = v.adjoint().matmul(&v);
    Ok(CMatrix::from_fn(n, n, |i, j| gu[(j, i)] * gv[(i, j)]))
}

/// Finite-rank observable with `T^*T = Σ_k q_k w_k w_k^*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionObservable<T> {
    pub weights: Vec<T>,
    pub vectors: Vec<Vec<C<T>>>,
}

impl<T: Real> ProjectionObservable<T> {
    pub fn new(weights: Vec<T>, vectors: Vec<Vec<C<T>>>) -> Result<Self> {
        if weights.len() != vectors.len() || weights.is_empty() {
            return Err(Error::DimensionMismatch("weights and vectors must pair up".into()));
        }
        if weights.iter().any(|&q| !(q > T::zero())) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        let n = vectors[0].len();
        if vectors.iter().any(|w| w.len() != n) {
            return Err(Error::DimensionMismatch("vectors of unequal length".into()));
        }
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        for a in 0..vectors.len() {
            for b in 0..vectors.len() {
                let g = dotc(&vectors[a], &vectors[b]);
                let target = if a == b { T::one() } else { T::zero() };
                if (g - creal(target)).norm() > tol {
                    return Err(Error::InvalidArgument("vectors not orthonormal".into()));
                }
            }
        }
        Ok(Self { weights, vectors })
    }

    /// Weights on the first standard basis vectors of `C^n`.
    pub fn standard(n: usize, weights: &[T]) -> Result<Self> {
        if weights.len() > n {
            return Err(Error::DimensionMismatch("rank exceeds dimension".into()));
        }
        let vectors = (0..weights.len())
            .map(|k| {
                let mut e = vec![C::new(T::zero(), T::zero()); n];
                e[k] = creal(T::one());
                e
            })
            .collect();
        Self::new(weights.to_vec(), vectors)
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn frobenius_sq(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &q| a + q)
    }

    /// `‖T x‖^2 = Σ_k q_k |w_k^* x|^2`.
    pub fn norm_sq(&self, x: &[C<T>]) -> T {
        self.weights
            .iter()
            .zip(&self.vectors)
            .fold(T::zero(), |acc, (&q, w)| acc + q * abs2(dotc(w, x)))
    }

    /// An explicit `ℓ x N` matrix with `T^*T` as above: rows `sqrt(q_k) w_k^*`.
    pub fn dense(&self) -> CMatrix<T> {
        CMatrix::from_fn(self.rank(), self.dim(), |k, j| {
            self.vectors[k][j].conj().scale(self.weights[k].sqrt())
        })
    }

    /// `T^*T` as an `N x N` matrix.
    pub fn gram(&self) -> CMatrix<T> {
        let t = self.dense();
        t.adjoint().matmul(&t)
    }
}

/// The statistic `N ‖T x‖^2` for unit `x`.
pub fn projection_stat<T: Real>(t: &ProjectionObservable<T>, x: &[C<T>]) -> T {
    T::from_usize_lossy(x.len()) * t.norm_sq(x)
}
