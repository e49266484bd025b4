//! Householder change of variables for selected eigenvectors.
//!
//! A right step conjugates `[[λ, w^*], [0, M]]` by the reflector `R(u)`, a
//! left step conjugates `[[λ, 0], [w, M]]` by `R(v)`. Chaining steps maps
//! `(λ_j, u^{(j-1)} or v^{(j-1)}, w_j, M^{(m)})` to a full matrix, and
//! [`deflate`] inverts that map. Unit vectors live on the phase-fixed sphere
//! (first coordinate real and nonnegative), the gauge in which `R(u) e_1 = u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::CMatrix;
use crate::scalar::{abs2, cone, creal, czero, dotc, norm2, normalize, Real, C};
use crate::spectral::{EigenTriple, ProjectionObservable};

const REFLECTOR_DEGENERATE: f64 = 1e-14;
const COLLISION: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

/// `R(u) = I - 2 (e_1 - u)(e_1 - u)^* / ‖e_1 - u‖^2`, with `R = I` when
/// `‖e_1 - u‖ < 1e-14`. Maps `e_1` to `u` whenever `u_1` is real.
pub fn householder<T: Real>(u: &[C<T>]) -> CMatrix<T> {
    let n = u.len();
    let d = reflector_direction(u);
    let mut r = CMatrix::identity(n);
    if let Some((d, scale)) = d {
        for j in 0..n {
            for i in 0..n {
                r[(i, j)] -= d[i] * d[j].conj() * scale;
            }
        }
    }
    r
}

/// `(e_1 - u, 2 / ‖e_1 - u‖^2)`, or `None` for the identity reflector.
fn reflector_direction<T: Real>(u: &[C<T>]) -> Option<(Vec<C<T>>, T)> {
    let mut d: Vec<C<T>> = u.iter().map(|x| -*x).collect();
    d[0] += cone();
    let nd2 = d.iter().fold(T::zero(), |acc, x| acc + abs2(*x));
    if nd2.sqrt() < T::lit(REFLECTOR_DEGENERATE) {
        None
    } else {
        Some((d, T::lit(2.0) / nd2))
    }
}

/// `R X R` without forming `R`.
fn conjugate_by_reflector<T: Real>(u: &[C<T>], x: &CMatrix<T>) -> CMatrix<T> {
    let Some((d, s)) = reflector_direction(u) else {
        return x.clone();
    };
    let n = u.len();
    let mut y = x.clone();
    // left: Y = X - s d (d^* X)
    for j in 0..n {
        let p = dotc(&d, y.col(j)) * s;
        for (yi, di) in y.col_mut(j).iter_mut().zip(&d) {
            *yi -= *di * p;
        }
    }
    // right: Y = Y - s (Y d) d^*
    let yd = y.matvec(&d);
    for j in 0..n {
        let c = d[j].conj() * s;
        for (yi, ydi) in y.col_mut(j).iter_mut().zip(&yd) {
            *yi -= *ydi * c;
        }
    }
    y
}

fn apply_reflector<T: Real>(u: &[C<T>], x: &[C<T>]) -> Vec<C<T>> {
    match reflector_direction(u) {
        None => x.to_vec(),
        Some((d, s)) => {
            let p = dotc(&d, x) * s;
            x.iter().zip(&d).map(|(xi, di)| *xi - *di * p).collect()
        }
    }
}

/// Rotates a vector into the phase-fixed gauge `x_1 ≥ 0`.
pub fn fix_phase<T: Real>(x: &mut [C<T>]) {
    let a = x[0].norm();
    if a > T::zero() {
        let ph = (x[0] / creal(a)).conj();
        for xi in x.iter_mut() {
            *xi *= ph;
        }
        x[0] = creal(x[0].re);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeflationStep<T> {
    pub side: Side,
    pub lambda: C<T>,
    /// `u^{(j-1)}` for right steps, `v^{(j-1)}` for left steps.
    pub vector: Vec<C<T>>,
    pub w: Vec<C<T>>,
    /// `b_j` (right) or `c_j` (left) of the reference matrix.
    pub offblock: Vec<C<T>>,
    pub a: C<T>,
}

impl<T: Real> DeflationStep<T> {
    /// Size of the matrix this step produces.
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// `Φ_j(λ, vector, w, M)`.
    pub fn apply(&self, m: &CMatrix<T>) -> Result<CMatrix<T>> {
        let n = self.dim();
        if m.rows() + 1 != n || !m.is_square() || self.w.len() + 1 != n {
            return Err(Error::DimensionMismatch(format!(
                "step of size {n} got block {}x{} and w of length {}",
                m.rows(),
                m.cols(),
                self.w.len()
            )));
        }
        let mut t = CMatrix::zeros(n, n);
        t[(0, 0)] = self.lambda;
        t.set_block(1, 1, m);
        for (k, wk) in self.w.iter().enumerate() {
            match self.side {
                Side::Right => t[(0, k + 1)] = wk.conj(),
                Side::Left => t[(k + 1, 0)] = *wk,
            }
        }
        Ok(conjugate_by_reflector(&self.vector, &t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeflationChain<T> {
    pub steps: Vec<DeflationStep<T>>,
    /// `M^{(m)}`.
    pub residual: CMatrix<T>,
    /// `A^{(0)}, …, A^{(m)}` for the reference matrix.
    pub reference: Vec<CMatrix<T>>,
}

impl<T: Real> DeflationChain<T> {
    pub fn dim(&self) -> usize {
        self.residual.rows() + self.steps.len()
    }

    pub fn lambdas(&self) -> Vec<C<T>> {
        self.steps.iter().map(|s| s.lambda).collect()
    }

    /// `M^{(j)}`, rebuilt from the residual by the steps after `j`.
    pub fn level(&self, j: usize) -> Result<CMatrix<T>> {
        let mut m = self.residual.clone();
        for step in self.steps[j..].iter().rev() {
            m = step.apply(&m)?;
        }
        Ok(m)
    }
}

/// `Φ = Φ_1 ∘ (Id × Φ_2) ∘ …`, applied from the innermost step outward.
pub fn phi_forward<T: Real>(chain: &DeflationChain<T>) -> Result<CMatrix<T>> {
    chain.level(0)
}

/// [`deflate_against`] with the matrix as its own reference.
pub fn deflate<T: Real>(a: &CMatrix<T>, selected: &[EigenTriple<T>], sides: &[Side]) -> Result<DeflationChain<T>> {
    deflate_against(a, a, selected, sides)
}

/// Successive Householder deflation of `m` along the selected eigenvectors,
/// with the same reflectors applied to `reference` to produce `A^{(j)}`,
/// `a_j`, `b_j`, `c_j`.
pub fn deflate_against<T: Real>(
    m: &CMatrix<T>,
    reference: &CMatrix<T>,
    selected: &[EigenTriple<T>],
    sides: &[Side],
) -> Result<DeflationChain<T>> {
    if !m.is_square() || m.rows() != reference.rows() || !reference.is_square() {
        return Err(Error::DimensionMismatch("deflation needs equal square matrices".into()));
    }
    if selected.len() != sides.len() || selected.len() >= m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} triples, {} sides for dimension {}",
            selected.len(),
            sides.len(),
            m.rows()
        )));
    }
    for (i, a) in selected.iter().enumerate() {
        if a.dim() != m.rows() {
            return Err(Error::DimensionMismatch("eigenvector length differs from matrix size".into()));
        }
        for b in &selected[..i] {
            if (a.lambda - b.lambda).norm() < T::lit(COLLISION) {
                return Err(Error::DefectivePair(format!("repeated eigenvalue {}", a.lambda)));
            }
        }
    }
    let scale = m.frobenius_norm().max(T::one());
    let mut vecs: Vec<Vec<C<T>>> = selected
        .iter()
        .zip(sides)
        .map(|(t, s)| match s {
            Side::Right => t.u.clone(),
            Side::Left => t.v.clone(),
        })
        .collect();
    let mut cur = m.clone();
    let mut cur_ref = reference.clone();
    let mut refs = vec![reference.clone()];
    let mut steps = Vec::with_capacity(selected.len());
    for j in 0..selected.len() {
        let mut x = vecs[j].clone();
        if normalize(&mut x) == T::zero() {
            return Err(Error::DefectivePair("zero eigenvector".into()));
        }
        fix_phase(&mut x);
        let n = cur.rows();
        let t = conjugate_by_reflector(&x, &cur);
        let tr = conjugate_by_reflector(&x, &cur_ref);
        let row: Vec<C<T>> = (1..n).map(|k| t[(0, k)]).collect();
        let col: Vec<C<T>> = (1..n).map(|k| t[(k, 0)]).collect();
        let (w, leak) = match sides[j] {
            Side::Right => (row.iter().map(|x| x.conj()).collect::<Vec<_>>(), norm2(&col)),
            Side::Left => (col, norm2(&row)),
        };
        let lambda = selected[j].lambda;
        let off = leak + (t[(0, 0)] - lambda).norm();
        if off > T::lit(1e-6) * scale {
            return Err(Error::DefectivePair(format!(
                "step {} is not an eigen-direction (leak {off:e})",
                j + 1
            )));
        }
        let offblock: Vec<C<T>> = match sides[j] {
            Side::Right => (1..n).map(|k| tr[(0, k)].conj()).collect(),
            Side::Left => (1..n).map(|k| tr[(k, 0)]).collect(),
        };
        steps.push(DeflationStep {
            side: sides[j],
            lambda,
            vector: x.clone(),
            w,
            offblock,
            a: tr[(0, 0)],
        });
        cur = t.block(1, 1, n - 1, n - 1);
        cur_ref = tr.block(1, 1, n - 1, n - 1);
        refs.push(cur_ref.clone());
        // later eigenvectors of M^{(j)} are the tails of the reflected ones
        for v in vecs.iter_mut().skip(j + 1) {
            let rv = apply_reflector(&x, v);
            let mut tail = rv[1..].to_vec();
            if normalize(&mut tail) < T::lit(1e-8) {
                return Err(Error::DefectivePair(format!("eigenvector lost at step {}", j + 1)));
            }
            *v = tail;
        }
    }
    Ok(DeflationChain { steps, residual: cur, reference: refs })
}

/// Lifts an eigenvector of `M^{(j)}` (eigenvalue `λ`) through step `j` to
/// one of `M^{(j-1)}`. `kind` says whether `vec` is a right or a left vector.
pub fn evec_lift<T: Real>(step: &DeflationStep<T>, lambda: C<T>, vec: &[C<T>], kind: Side) -> Result<Vec<C<T>>> {
    if vec.len() + 1 != step.dim() {
        return Err(Error::DimensionMismatch("eigenvector length does not match step".into()));
    }
    let gap = lambda - step.lambda;
    if gap.norm() < T::lit(COLLISION) {
        return Err(Error::EigenvalueCollision(gap.norm().to_f64_lossy()));
    }
    let head = match (step.side, kind) {
        (Side::Right, Side::Right) => dotc(&step.w, vec) / gap,
        (Side::Left, Side::Left) => dotc(&step.w, vec) / gap.conj(),
        _ => czero(),
    };
    let mut x = Vec::with_capacity(step.dim());
    x.push(head);
    x.extend_from_slice(vec);
    let mut y = apply_reflector(&step.vector, &x);
    normalize(&mut y);
    Ok(y)
}

/// Lifts an eigenvector of `M^{(level)}` all the way to `M^{(0)}`.
pub fn evec_reconstruct<T: Real>(
    chain: &DeflationChain<T>,
    level: usize,
    lambda: C<T>,
    vec: &[C<T>],
    kind: Side,
) -> Result<Vec<C<T>>> {
    if level > chain.steps.len() {
        return Err(Error::InvalidArgument(format!("level {level} beyond chain length")));
    }
    let mut x = vec.to_vec();
    for step in chain.steps[..level].iter().rev() {
        x = evec_lift(step, lambda, &x, kind)?;
    }
    Ok(x)
}

/// `log exp[c_1, …, c_n]`, the divided difference of `exp` at real nodes.
///
/// Opitz: the divided difference is the `(1, n)` entry of `exp(J)` for the
/// bidiagonal `J = diag(c) + superdiag(1)`. Nodes are shifted by their
/// minimum so the matrix is entrywise nonnegative and every stage (Taylor,
/// squaring) adds nonnegative terms. The superdiagonal is rescaled by
/// `2^s` to keep the corner entry away from underflow, and the squaring
/// phase renormalizes into a running log scale.
pub fn log_exp_divided_difference<T: Real>(nodes: &[T]) -> T {
    let n = nodes.len();
    assert!(n >= 1, "divided difference needs at least one node");
    let cmin = nodes.iter().copied().fold(T::infinity(), T::min);
    if n == 1 {
        return nodes[0];
    }
    let d: Vec<T> = nodes.iter().map(|&c| c - cmin).collect();
    let dmax = d.iter().copied().fold(T::zero(), T::max);
    let s = if dmax > T::one() {
        dmax.log2().ceil().to_f64_lossy() as i32
    } else {
        0
    };
    let inv = T::lit(2f64.powi(-s));
    // Y = diag(d) / 2^s + superdiag(1), stored row-major upper triangular
    let mut y = vec![T::zero(); n * n];
    for i in 0..n {
        y[i * n + i] = d[i] * inv;
        if i + 1 < n {
            y[i * n + i + 1] = T::one();
        }
    }
    let terms = n + 30;
    let mut p = identity_rm::<T>(n);
    for k in (1..=terms).rev() {
        let mut yp = upper_mul(&y, &p, n);
        let kk = T::from_usize_lossy(k);
        for (i, v) in yp.iter_mut().enumerate() {
            *v /= kk;
            if i % (n + 1) == 0 {
                *v += T::one();
            }
        }
        p = yp;
    }
    let mut log_scale = T::zero();
    for _ in 0..s {
        p = upper_mul(&p, &p, n);
        let m = p.iter().copied().fold(T::zero(), T::max);
        for v in p.iter_mut() {
            *v /= m;
        }
        log_scale = log_scale * T::lit(2.0) + m.ln();
    }
    let corner = p[n - 1];
    let s_t = T::lit(s as f64);
    cmin + log_scale + corner.ln() - T::from_usize_lossy(n - 1) * s_t * T::LN_2()
}

fn identity_rm<T: Real>(n: usize) -> Vec<T> {
    let mut p = vec![T::zero(); n * n];
    for i in 0..n {
        p[i * n + i] = T::one();
    }
    p
}

fn upper_mul<T: Real>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); n * n];
    for i in 0..n {
        for k in i..n {
            let aik = a[i * n + k];
            if aik == T::zero() {
                continue;
            }
            for j in k..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

pub(crate) fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `log E[exp(-u^* B u)]` for `u` uniform on the unit sphere of `C^n`, equal
/// to `(n-1)! · exp[-b_1, …, -b_n]` over the eigenvalues `b_k` of `B`.
pub fn sphere_exp_integral<T: Real>(b: &CMatrix<T>) -> Result<T> {
    if !b.is_square() || b.rows() == 0 {
        return Err(Error::DimensionMismatch("sphere integral needs a nonempty square matrix".into()));
    }
    let ev = linalg::herm_eigenvalues(b)?;
    Ok(sphere_exp_integral_from_eigenvalues(&ev))
}

pub fn sphere_exp_integral_from_eigenvalues<T: Real>(b: &[T]) -> T {
    let nodes: Vec<T> = b.iter().map(|&x| -x).collect();
    T::lit(ln_factorial(b.len() - 1)) + log_exp_divided_difference(&nodes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KqCheck<T> {
    pub lambda: C<T>,
    pub eta: T,
    pub q: T,
    /// `log K_q - log K_0` from the exact sphere integrals.
    pub log_ratio: T,
    /// `-log det[I - t q H_λ(η_{λ,t}) T^*T]`.
    pub log_det: T,
    pub gap: T,
}

/// `B_q = (N/t)[(A-λ)^*(A-λ) + η^2 - t q T^*T]`.
fn b_matrix<T: Real>(gram: &CMatrix<T>, tt: &CMatrix<T>, n: usize, t: T, q: T, eta: T) -> CMatrix<T> {
    let nn = T::from_usize_lossy(n);
    gram.add(&CMatrix::identity(n).scale_real(eta * eta))
        .axpy(creal(-t * q), tt)
        .scale_real(nn / t)
}

/// Compares the exact spherical integrals `K_q` with the determinant
/// `det[I - t q H_λ T^*T]^{-1}` for the right-vector measure at `λ`.
pub fn kq_ratio_check<T: Real>(
    a: &CMatrix<T>,
    lambda: C<T>,
    t: T,
    q: T,
    obs: &ProjectionObservable<T>,
) -> Result<KqCheck<T>> {
    let n = a.rows();
    if obs.dim() != n {
        return Err(Error::DimensionMismatch("observable and matrix sizes differ".into()));
    }
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    let x = a.shift(lambda);
    let gram = x.adjoint().matmul(&x);
    let sv = linalg::singular_values(&x)?;
    let eta = crate::dse::eta_from_singular_values(&sv, t)?;
    let tt = obs.gram();
    let b0 = b_matrix(&gram, &tt, n, t, T::zero(), eta);
    let bq = b_matrix(&gram, &tt, n, t, q, eta);
    let ev_q = linalg::herm_eigenvalues(&bq)?;
    if ev_q[0] <= T::zero() {
        return Err(Error::PositivityLost(format!("q = {q}: smallest eigenvalue {}", ev_q[0])));
    }
    let log_ratio = if q == T::zero() {
        T::zero()
    } else {
        sphere_exp_integral_from_eigenvalues(&ev_q) - sphere_exp_integral(&b0)?
    };
    let log_det = -log_det_projection(&x, eta, t, q, obs)?;
    let gap = if q == T::zero() { T::zero() } else { log_ratio - log_det };
    Ok(KqCheck { lambda, eta, q, log_ratio, log_det, gap })
}

/// `log det[I - t q H T^*T]` through the `ℓ x ℓ` Sylvester form
/// `det[I - t q D W^* H W]`.
pub fn log_det_projection<T: Real>(x: &CMatrix<T>, eta: T, t: T, q: T, obs: &ProjectionObservable<T>) -> Result<T> {
    let n = x.rows();
    let l = obs.rank();
    let m = x.adjoint().matmul(x).add(&CMatrix::identity(n).scale_real(eta * eta));
    let w = CMatrix::from_columns(&obs.vectors);
    let hw = linalg::hpd_solve(&m, &w)?;
    let mut s = CMatrix::<T>::identity(l);
    for j in 0..l {
        for i in 0..l {
            let v = dotc(&obs.vectors[i], hw.col(j)) * creal(t * q * obs.weights[i]);
            s[(i, j)] -= v;
        }
    }
    let d = linalg::determinant(&s)?;
    if !(d.re > T::zero()) {
        return Err(Error::PositivityLost(format!("determinant {d} not positive")));
    }
    Ok(d.norm().ln())
}

/// Largest `q` keeping `(A-λ)^*(A-λ) + η^2 - t q T^*T` positive definite,
/// by bisection on `[0, q_max]`.
pub fn probe_qt<T: Real>(a: &CMatrix<T>, lambda: C<T>, t: T, obs: &ProjectionObservable<T>, q_max: T) -> Result<T> {
    let n = a.rows();
    let x = a.shift(lambda);
    let gram = x.adjoint().matmul(&x);
    let eta = crate::dse::eta_from_singular_values(&linalg::singular_values(&x)?, t)?;
    let tt = obs.gram();
    let pd = |q: T| linalg::is_positive_definite(&b_matrix(&gram, &tt, n, t, q, eta));
    if pd(q_max) {
        return Ok(q_max);
    }
    let (mut lo, mut hi) = (T::zero(), q_max);
    for _ in 0..60 {
        let mid = (lo + hi) / T::lit(2.0);
        if pd(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianCheck {
    pub numeric: f64,
    pub formula: f64,
    pub rel_error: f64,
    /// Numeric value at the halved step, used for the stability test.
    pub numeric_half: f64,
}

/// `|Δ(λ)|^2 ∏_j |det(λ_j - M^{(m)})|^2`.
pub fn jacobian_formula<T: Real>(chain: &DeflationChain<T>) -> Result<T> {
    let lambdas = chain.lambdas();
    let mut f = T::one();
    for (i, a) in lambdas.iter().enumerate() {
        for b in &lambdas[i + 1..] {
            f *= abs2(*a - *b);
        }
        if chain.residual.rows() > 0 {
            let d = linalg::determinant(&chain.residual.shift(*a))?;
            f *= abs2(d);
        }
    }
    Ok(f)
}

/// Real coordinates of a chain point: per step `λ` (2), a horizontal chart
/// of the phase-fixed sphere (`2(n_j - 1)`), `w_j` (`2(n_j - 1)`); then the
/// residual block. The chart `x ↦ fix_phase(normalize(u + Σ x_k e_k))` uses
/// an orthonormal basis of `u^⊥ ⊗ {1, i}`, so its volume density is one at
/// the origin and no chart factor survives.
struct Chart<T> {
    base: DeflationChain<T>,
    bases: Vec<Vec<Vec<C<T>>>>,
}

impl<T: Real> Chart<T> {
    fn new(chain: &DeflationChain<T>) -> Self {
        let bases = chain
            .steps
            .iter()
            .map(|s| {
                // columns 2..n of R(u) span u^⊥ orthonormally
                let r = householder(&s.vector);
                let i = C::new(T::zero(), T::one());
                (1..s.dim())
                    .flat_map(|k| {
                        let c = r.col(k).to_vec();
                        let ci = c.iter().map(|x| *x * i).collect();
                        [c, ci]
                    })
                    .collect()
            })
            .collect();
        Chart { base: chain.clone(), bases }
    }

    fn dim(&self) -> usize {
        let n = self.base.dim();
        2 * n * n
    }

    fn point(&self, p: &[T]) -> DeflationChain<T> {
        let mut c = self.base.clone();
        let mut i = 0;
        for (step, basis) in c.steps.iter_mut().zip(&self.bases) {
            step.lambda += C::new(p[i], p[i + 1]);
            i += 2;
            let mut u = step.vector.clone();
            for b in basis {
                for (uk, bk) in u.iter_mut().zip(b) {
                    *uk += bk.scale(p[i]);
                }
                i += 1;
            }
            normalize(&mut u);
            fix_phase(&mut u);
            step.vector = u;
            for wk in step.w.iter_mut() {
                *wk += C::new(p[i], p[i + 1]);
                i += 2;
            }
        }
        for v in c.residual.data_mut() {
            *v += C::new(p[i], p[i + 1]);
            i += 2;
        }
        debug_assert_eq!(i, self.dim());
        c
    }

    fn eval(&self, p: &[T]) -> Result<Vec<T>> {
        let m = phi_forward(&self.point(p))?;
        Ok(m.data().iter().flat_map(|z| [z.re, z.im]).collect())
    }

    /// `|det|` of the Jacobian by the fourth-order central stencil.
    fn fd_determinant(&self, h: T) -> Result<T> {
        let d = self.dim();
        let mut jac = CMatrix::<T>::zeros(d, d);
        let twelve_h = T::lit(12.0) * h;
        for k in 0..d {
            let at = |s: T| {
                let mut p = vec![T::zero(); d];
                p[k] = s;
                self.eval(&p)
            };
            let (p1, m1) = (at(h)?, at(-h)?);
            let (p2, m2) = (at(h + h)?, at(-h - h)?);
            for r in 0..d {
                let v = (-p2[r] + T::lit(8.0) * (p1[r] - m1[r]) + m2[r]) / twelve_h;
                jac[(r, k)] = creal(v);
            }
        }
        Ok(linalg::determinant(&jac)?.norm())
    }
}

/// Finite-difference Jacobian of `Φ` at a chain point against
/// [`jacobian_formula`]. Fails with `FdInstability` when the estimates at
/// `h` and `h/2` disagree beyond `1e-6` relative (plus `1e-9` absolute).
pub fn jacobian_fd_check<T: Real>(chain: &DeflationChain<T>, h: T) -> Result<JacobianCheck> {
    let n = chain.dim();
    if n > 6 || chain.steps.len() > 2 {
        return Err(Error::InvalidArgument(format!(
            "finite-difference Jacobian limited to N ≤ 6 and m ≤ 2 (got N = {n}, m = {})",
            chain.steps.len()
        )));
    }
    let chart = Chart::new(chain);
    let numeric = chart.fd_determinant(h)?.to_f64_lossy();
    let numeric_half = chart.fd_determinant(h / T::lit(2.0))?.to_f64_lossy();
    if (numeric - numeric_half).abs() > 1e-6 * numeric.abs().max(numeric_half.abs()) + 1e-9 {
        return Err(Error::FdInstability(format!("|det J| = {numeric:e} at h, {numeric_half:e} at h/2")));
    }
    let formula = jacobian_formula(chain)?.to_f64_lossy();
    let rel_error = (numeric - formula).abs() / formula.abs().max(f64::MIN_POSITIVE);
    Ok(JacobianCheck { numeric, formula, rel_error, numeric_half })
}

/// A chain with the given step sides at random parameters: standard complex
/// Gaussian `λ_j`, `w_j`, residual entries and uniformly random phase-fixed
/// unit vectors.
pub fn random_chain(n: usize, sides: &[Side], rng: &mut crate::ensemble::Stream) -> Result<DeflationChain<f64>> {
    use rand::RngExt;
    use rand_distr::StandardNormal;
    if sides.len() >= n {
        return Err(Error::InvalidArgument(format!("{} steps for dimension {n}", sides.len())));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = || -> C<f64> {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C::new(re * s, im * s)
    };
    let mut steps = Vec::new();
    for (j, &side) in sides.iter().enumerate() {
        let nj = n - j;
        let lambda = g();
        let mut vector: Vec<C<f64>> = (0..nj).map(|_| g()).collect();
        normalize(&mut vector);
        fix_phase(&mut vector);
        let w: Vec<C<f64>> = (0..nj - 1).map(|_| g()).collect();
        steps.push(DeflationStep { side, lambda, vector, offblock: w.clone(), w, a: lambda });
    }
    let k = n - sides.len();
    let residual = CMatrix::from_fn(k, k, |_, _| g());
    let mut chain = DeflationChain { steps, residual, reference: Vec::new() };
    chain.reference = (0..=sides.len()).map(|j| chain.level(j)).collect::<Result<_>>()?;
    Ok(chain)
}
