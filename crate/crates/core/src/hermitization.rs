//! Hermitization `H_z = [[0, A - z], [(A - z)^*, 0]]` and its resolvent.
//!
//! Normalized traces follow one convention throughout: `⟨X⟩ = Tr X / N` for
//! `N x N` operators (`H`, `H̃`, products of them) and `Tr X / 2N` for
//! operators on the doubled space (expressions in `G`).
//!
//! With the SVD `A - z = U Σ V^*`, the eigenpairs of `H_z` are
//! `ξ_{±k} = ±σ_k` with `u_{±k} = (U_k, ±V_k) / sqrt(2)`. Every quantity here
//! has a spectral form in terms of `σ`, `U`, `V`, which is exact at any `η`;
//! the dense resolvent route exists as a cross-check and for moderate `η`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::CMatrix;
use crate::scalar::{abs2, cplx, creal, czero, dotc, pairwise_sum, Real, C};
use crate::spectral::ProjectionObservable;

pub const MAX_CONDITION: f64 = 1e14;

/// `[[0, A - z], [(A - z)^*, 0]]`.
pub fn hermitize<T: Real>(a: &CMatrix<T>, z: C<T>) -> CMatrix<T> {
    assert!(a.is_square(), "hermitize needs a square matrix");
    let n = a.rows();
    let x = a.shift(z);
    let mut h = CMatrix::zeros(2 * n, 2 * n);
    h.set_block(0, n, &x);
    h.set_block(n, 0, &x.adjoint());
    h
}

/// Chiral spectrum of `H_z`; index `k ∈ [-N,-1] ∪ [1,N]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymSpectrum<T> {
    pub z: C<T>,
    /// `ξ_k` for `k = 1..=N`, nondecreasing (the singular values of `A - z`).
    pub xi: Vec<T>,
    /// Left singular vectors `U_k` (upper half), same order as `xi`.
    pub upper: CMatrix<T>,
    /// Right singular vectors `V_k` (lower half), same order as `xi`.
    pub lower: CMatrix<T>,
}

impl<T: Real> SymSpectrum<T> {
    pub fn n(&self) -> usize {
        self.xi.len()
    }

    pub fn xi_at(&self, k: isize) -> T {
        assert!(k != 0 && k.unsigned_abs() <= self.n(), "index out of range");
        let v = self.xi[k.unsigned_abs() - 1];
        if k > 0 {
            v
        } else {
            -v
        }
    }

    /// Eigenvector `u_k` of the Hermitization (length `2N`).
    pub fn vector(&self, k: isize) -> Vec<C<T>> {
        assert!(k != 0 && k.unsigned_abs() <= self.n(), "index out of range");
        let j = k.unsigned_abs() - 1;
        let s = T::FRAC_1_SQRT_2();
        let sign = if k > 0 { s } else { -s };
        self.upper
            .col(j)
            .iter()
            .map(|x| x.scale(s))
            .chain(self.lower.col(j).iter().map(|x| x.scale(sign)))
            .collect()
    }

    /// All `2N` eigenvalues, nondecreasing: `ξ_{-N}, …, ξ_{-1}, ξ_1, …, ξ_N`.
    pub fn eigenvalues(&self) -> Vec<T> {
        self.xi.iter().rev().map(|&x| -x).chain(self.xi.iter().copied()).collect()
    }

    pub fn indices(&self) -> Vec<isize> {
        let n = self.n() as isize;
        (-n..=-1).chain(1..=n).collect()
    }

    /// Eigenvectors as columns in the order of [`Self::eigenvalues`].
    pub fn dense_vectors(&self) -> CMatrix<T> {
        let cols: Vec<Vec<C<T>>> = self.indices().into_iter().map(|k| self.vector(k)).collect();
        CMatrix::from_columns(&cols)
    }

    /// `P = V^* U`, the overlap between lower and upper halves.
    pub fn half_overlap(&self) -> CMatrix<T> {
        self.lower.adjoint().matmul(&self.upper)
    }

    /// `⟨H_z(η)⟩`.
    pub fn mean_h(&self, eta: T) -> T {
        crate::dse::mean_h(&self.xi, eta)
    }
}

pub fn sym_spectrum<T: Real>(a: &CMatrix<T>, z: C<T>) -> Result<SymSpectrum<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("sym_spectrum needs a square matrix".into()));
    }
    let n = a.rows();
    let d = linalg::svd(&a.shift(z))?;
    // faer returns nonincreasing values; a stable sort on the reversed order
    // keeps ties in a fixed order
    let mut order: Vec<usize> = (0..n).rev().collect();
    order.sort_by(|&i, &j| d.s[i].partial_cmp(&d.s[j]).unwrap_or(std::cmp::Ordering::Equal));
    let xi = order.iter().map(|&i| d.s[i]).collect();
    let upper = CMatrix::from_columns(&order.iter().map(|&i| d.u.col(i).to_vec()).collect::<Vec<_>>());
    let lower = CMatrix::from_columns(&order.iter().map(|&i| d.v.col(i).to_vec()).collect::<Vec<_>>());
    Ok(SymSpectrum { z, xi, upper, lower })
}

/// Block selector for `E_12`/`E_21`-type observables on the doubled space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    E12,
    E21,
}

impl Block {
    fn ab(self) -> (usize, usize) {
        match self {
            Block::E12 => (0, 1),
            Block::E21 => (1, 0),
        }
    }
}

/// `H = ((A-z)^*(A-z) + η^2)^{-1}`, `H̃ = ((A-z)(A-z)^* + η^2)^{-1}`.
#[derive(Clone, Debug)]
pub struct ResolventBundle<T> {
    pub z: C<T>,
    pub eta: T,
    pub x: CMatrix<T>,
    pub h: CMatrix<T>,
    pub htilde: CMatrix<T>,
}

impl<T: Real> ResolventBundle<T> {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// Block `(a, b)` of `G_z(iη)`, zero-based: `G11 = iηH̃`, `G12 = H̃X`,
    /// `G21 = X^*H̃`, `G22 = iηH`.
    pub fn g_block(&self, a: usize, b: usize) -> CMatrix<T> {
        let ie = cplx(T::zero(), self.eta);
        match (a, b) {
            (0, 0) => self.htilde.scale(ie),
            (0, 1) => self.htilde.matmul(&self.x),
            (1, 0) => self.x.adjoint().matmul(&self.htilde),
            (1, 1) => self.h.scale(ie),
            _ => panic!("block index out of range"),
        }
    }

    pub fn g(&self) -> CMatrix<T> {
        let n = self.n();
        let mut g = CMatrix::zeros(2 * n, 2 * n);
        for a in 0..2 {
            for b in 0..2 {
                g.set_block(a * n, b * n, &self.g_block(a, b));
            }
        }
        g
    }
}

pub fn resolvents<T: Real>(a: &CMatrix<T>, z: C<T>, eta: T) -> Result<ResolventBundle<T>> {
    if !(eta > T::zero()) {
        return Err(Error::InvalidArgument(format!("eta = {eta} must be positive")));
    }
    if !a.is_square() {
        return Err(Error::DimensionMismatch("resolvents need a square matrix".into()));
    }
    let x = a.shift(z);
    let eta2 = eta * eta;
    let fro2 = {
        let f = x.frobenius_norm();
        f * f
    };
    let cond = ((fro2 + eta2) / eta2).to_f64_lossy();
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    let n = a.rows();
    let shifted = |m: CMatrix<T>| m.add(&CMatrix::identity(n).scale_real(eta2));
    let h = linalg::hpd_inverse(&shifted(x.adjoint().matmul(&x)))?;
    let htilde = linalg::hpd_inverse(&shifted(x.matmul(&x.adjoint())))?;
    Ok(ResolventBundle { z, eta, x, h, htilde })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleTraces<T> {
    pub h: T,
    pub h_htilde: T,
    pub h2: T,
    pub h2_x: C<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTraces<T> {
    pub h_h: T,
    pub ht_ht: T,
    pub h_ht: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbgbEntry<T> {
    pub b1: Block,
    pub b2: Block,
    pub value: C<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord<T> {
    pub single: SingleTraces<T>,
    pub gbgb: Vec<GbgbEntry<T>>,
    pub cross: Option<CrossTraces<T>>,
}

fn n_of<T: Real>(n: usize) -> T {
    T::from_usize_lossy(n)
}

pub fn single_traces<T: Real>(b: &ResolventBundle<T>) -> SingleTraces<T> {
    let nn = n_of::<T>(b.n());
    let h2 = b.h.matmul(&b.h);
    SingleTraces {
        h: b.h.trace().re / nn,
        h_htilde: b.h.trace_of_product(&b.htilde).re / nn,
        h2: h2.trace().re / nn,
        h2_x: h2.trace_of_product(&b.x) / cplx(nn, T::zero()),
    }
}

/// `⟨G_z(η1) B1 G_z(η2) B2⟩` on the doubled space. For block units
/// `E_ab`, `E_cd`: `Tr(G E_ab G' E_cd) = Tr(G_da G'_bc)`.
pub fn gbgb<T: Real>(b1: &ResolventBundle<T>, b2: &ResolventBundle<T>, p: Block, q: Block) -> Result<C<T>> {
    if b1.n() != b2.n() {
        return Err(Error::DimensionMismatch("bundles of different size".into()));
    }
    if b1.z != b2.z {
        return Err(Error::InvalidArgument("gbgb needs a common shift z".into()));
    }
    let (a, bb) = p.ab();
    let (c, d) = q.ab();
    let tr = b1.g_block(d, a).trace_of_product(&b2.g_block(bb, c));
    Ok(tr / cplx(n_of::<T>(2 * b1.n()), T::zero()))
}

pub fn cross_traces<T: Real>(b1: &ResolventBundle<T>, b2: &ResolventBundle<T>) -> Result<CrossTraces<T>> {
    if b1.n() != b2.n() {
        return Err(Error::DimensionMismatch("bundles of different size".into()));
    }
    let nn = n_of::<T>(b1.n());
    Ok(CrossTraces {
        h_h: b1.h.trace_of_product(&b2.h).re / nn,
        ht_ht: b1.htilde.trace_of_product(&b2.htilde).re / nn,
        h_ht: b1.h.trace_of_product(&b2.htilde).re / nn,
    })
}

/// Single-resolvent traces of `primary`; with a `secondary` bundle also the
/// cross-shift traces and, if it shares `z`, all four `⟨G B1 G B2⟩`.
pub fn trace_functionals<T: Real>(
    primary: &ResolventBundle<T>,
    secondary: Option<&ResolventBundle<T>>,
) -> Result<TraceRecord<T>> {
    let single = single_traces(primary);
    let (mut gb, mut cross) = (Vec::new(), None);
    if let Some(s) = secondary {
        cross = Some(cross_traces(primary, s)?);
        if s.z == primary.z {
            for p in [Block::E12, Block::E21] {
                for q in [Block::E12, Block::E21] {
                    gb.push(GbgbEntry { b1: p, b2: q, value: gbgb(primary, s, p, q)? });
                }
            }
        }
    }
    Ok(TraceRecord { single, gbgb: gb, cross })
}

/// Exact trace functionals evaluated from a [`SymSpectrum`]; valid at any `η`.
pub struct SpectralTraces<'a, T> {
    pub spec: &'a SymSpectrum<T>,
    /// `P = V^* U`.
    pub p: CMatrix<T>,
}

impl<'a, T: Real> SpectralTraces<'a, T> {
    pub fn new(spec: &'a SymSpectrum<T>) -> Self {
        Self { p: spec.half_overlap(), spec }
    }

    fn d(&self, eta: T) -> Vec<T> {
        let e2 = eta * eta;
        self.spec.xi.iter().map(|&s| (s * s + e2).recip()).collect()
    }

    pub fn single(&self, eta: T) -> SingleTraces<T> {
        let n = self.spec.n();
        let nn = n_of::<T>(n);
        let d = self.d(eta);
        let h = pairwise_sum(&d) / nn;
        let h2 = pairwise_sum(&d.iter().map(|x| *x * *x).collect::<Vec<_>>()) / nn;
        let mut rows = Vec::with_capacity(n);
        for l in 0..n {
            let col = self.p.col(l);
            let s = (0..n).fold(T::zero(), |acc, k| acc + d[k] * abs2(col[k]));
            rows.push(s * d[l]);
        }
        let hht = pairwise_sum(&rows) / nn;
        let h2x = (0..n).fold(czero::<T>(), |acc, k| acc + self.p[(k, k)].scale(d[k] * d[k] * self.spec.xi[k]));
        SingleTraces {
            h,
            h_htilde: hht,
            h2,
            h2_x: h2x / cplx(nn, T::zero()),
        }
    }

    /// Spectral form of [`gbgb`] at `(η1, η2)`.
    pub fn gbgb(&self, eta1: T, eta2: T, p: Block, q: Block) -> C<T> {
        let n = self.spec.n();
        let (d1, d2) = (self.d(eta1), self.d(eta2));
        let s = &self.spec.xi;
        let pm = &self.p;
        let mut acc = czero();
        match (p, q) {
            (Block::E12, Block::E21) | (Block::E21, Block::E12) => {
                // -η1η2 Tr(H̃(η1) H(η2)) resp. -η1η2 Tr(H(η1) H̃(η2))
                let swap = p == Block::E21;
                for k in 0..n {
                    for l in 0..n {
                        let w = if swap { abs2(pm[(k, l)]) } else { abs2(pm[(l, k)]) };
                        acc += creal(d1[k] * d2[l] * w);
                    }
                }
                acc = acc.scale(-eta1 * eta2);
            }
            (Block::E12, Block::E12) => {
                // Tr(Σ D1 Q Σ D2 Q), Q = U^*V = P^*
                for k in 0..n {
                    for l in 0..n {
                        acc += pm[(l, k)].conj() * pm[(k, l)].conj() * (s[k] * d1[k] * s[l] * d2[l]);
                    }
                }
            }
            (Block::E21, Block::E21) => {
                for k in 0..n {
                    for l in 0..n {
                        acc += pm[(k, l)] * pm[(l, k)] * (s[k] * d1[k] * s[l] * d2[l]);
                    }
                }
            }
        }
        acc / cplx(n_of::<T>(2 * n), T::zero())
    }

    /// `w1^* H w2` via `H = V D V^*`.
    pub fn quad_h(&self, eta: T, w1: &[C<T>], w2: &[C<T>]) -> C<T> {
        quad_form(&self.spec.lower, &self.d(eta), w1, w2)
    }

    /// `w1^* H̃ w2` via `H̃ = U D U^*`.
    pub fn quad_htilde(&self, eta: T, w1: &[C<T>], w2: &[C<T>]) -> C<T> {
        quad_form(&self.spec.upper, &self.d(eta), w1, w2)
    }
}

fn quad_form<T: Real>(basis: &CMatrix<T>, d: &[T], w1: &[C<T>], w2: &[C<T>]) -> C<T> {
    let a = basis.adjoint_matvec(w1);
    let b = basis.adjoint_matvec(w2);
    a.iter()
        .zip(&b)
        .zip(d)
        .fold(czero(), |acc, ((x, y), &dk)| acc + x.conj() * *y * dk)
}

/// Which half of a doubled-space vector an observable reads: `Lower`
/// (`F12 ⊗ T`, right vectors) or `Upper` (`F21 ⊗ T`, left vectors).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VFunctional<T> {
    pub eta: T,
    pub value: T,
    pub eigen_sum: T,
    /// `N η Tr[T^*T Im G]` from a direct solve; `None` when too ill-conditioned.
    pub trace_form: Option<T>,
}

/// `V(z, T) = N η_V Tr[T^*T Im G_z(η_V)]`, `η_V = N^{-1-δ_V}`, from a spectrum.
pub fn v_from_spectrum<T: Real>(spec: &SymSpectrum<T>, t: &ProjectionObservable<T>, half: Half, eta: T) -> T {
    let n = spec.n();
    let nn = n_of::<T>(n);
    let basis = match half {
        Half::Lower => &spec.lower,
        Half::Upper => &spec.upper,
    };
    let e2 = eta * eta;
    let terms: Vec<T> = (0..n)
        .map(|k| nn * e2 / (spec.xi[k] * spec.xi[k] + e2) * t.norm_sq(basis.col(k)))
        .collect();
    pairwise_sum(&terms)
}

pub fn v_functional<T: Real>(
    a: &CMatrix<T>,
    z: C<T>,
    t: &ProjectionObservable<T>,
    half: Half,
    delta_v: T,
) -> Result<VFunctional<T>> {
    if !(delta_v > T::zero() && delta_v < T::lit(0.5)) {
        return Err(Error::InvalidArgument(format!("delta_V = {delta_v} outside (0, 1/2)")));
    }
    if t.dim() != a.rows() {
        return Err(Error::DimensionMismatch("observable and matrix sizes differ".into()));
    }
    let n = a.rows();
    let nn = n_of::<T>(n);
    let eta = nn.powf(-T::one() - delta_v);
    let spec = sym_spectrum(a, z)?;
    let eigen_sum = v_from_spectrum(&spec, t, half, eta);
    let x = a.shift(z);
    let e2 = eta * eta;
    let fro = x.frobenius_norm();
    let cond = ((fro * fro + e2) / e2).to_f64_lossy();
    let trace_form = if cond > MAX_CONDITION {
        None
    } else {
        let gram = match half {
            Half::Lower => x.adjoint().matmul(&x),
            Half::Upper => x.matmul(&x.adjoint()),
        };
        let m = gram.add(&CMatrix::identity(n).scale_real(e2));
        let w = CMatrix::from_columns(&t.vectors);
        let y = linalg::hpd_solve(&m, &w)?;
        let s = t
            .weights
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, &q)| acc + q * dotc(&t.vectors[k], y.col(k)).re);
        Some(nn * e2 * s)
    };
    if let Some(tf) = trace_form {
        let scale = eigen_sum.abs().max(tf.abs()).max(T::min_positive_value());
        if (tf - eigen_sum).abs() > T::lit(1e-8) * scale {
            return Err(Error::IllConditioned(cond));
        }
    }
    Ok(VFunctional {
        eta,
        value: eigen_sum,
        eigen_sum,
        trace_form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_iid, EnsembleSpec};

    fn c(re: f64, im: f64) -> C<f64> {
        cplx(re, im)
    }

    fn ginibre(n: usize, idx: u64) -> CMatrix<f64> {
        sample_iid(&EnsembleSpec::ginibre(n, 31), idx)
    }

    #[test]
    fn scalar_hermitization() {
        let a = CMatrix::from_rows(&[vec![c(0.3, -0.4)]]);
        let z = c(0.1, 0.2);
        let ev = linalg::herm_eigenvalues(&hermitize(&a, z)).unwrap();
        let r = (c(0.3, -0.4) - z).norm();
        assert!((ev[0] + r).abs() < 1e-14 && (ev[1] - r).abs() < 1e-14);
    }

    #[test]
    fn spectrum_matches_dense_eigensolver() {
        let a = ginibre(64, 0);
        let z = c(0.3, -0.2);
        let spec = sym_spectrum(&a, z).unwrap();
        let ev = linalg::herm_eigenvalues(&hermitize(&a, z)).unwrap();
        let mine = spec.eigenvalues();
        for (x, y) in ev.iter().zip(&mine) {
            assert!((x - y).abs() < 1e-10);
        }
        let sv = linalg::singular_values(&a.shift(z)).unwrap();
        for (x, y) in sv.iter().zip(&spec.xi) {
            assert!((x - y).abs() < 1e-10);
        }
        for k in 1..=64 {
            assert!((spec.xi_at(k) + spec.xi_at(-k)).abs() <= 1e-10);
        }
        let u = spec.dense_vectors();
        assert!(u.adjoint().matmul(&u).sub(&CMatrix::identity(128)).max_abs() < 1e-8);
        let h = hermitize(&a, z);
        for k in [-64isize, -3, 1, 40] {
            let v = spec.vector(k);
            let hv = h.matvec(&v);
            let err: f64 = hv.iter().zip(&v).map(|(p, q)| (p - q * spec.xi_at(k)).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn zero_matrix_resolvent() {
        let a = CMatrix::<f64>::zeros(5, 5);
        let eta = 0.3;
        let b = resolvents(&a, c(0.0, 0.0), eta).unwrap();
        assert!(b.h.sub(&CMatrix::identity(5).scale_real(eta.powi(-2))).max_abs() < 1e-12);
        let t = single_traces(&b);
        assert!((t.h - eta.powi(-2)).abs() < 1e-10);
        assert!((t.h2 - eta.powi(-4)).abs() < 1e-8);
        assert!((t.h_htilde - eta.powi(-4)).abs() < 1e-8);
    }

    #[test]
    fn h2x_scalar_case() {
        let a = CMatrix::<f64>::zeros(4, 4);
        let eta = 0.5;
        let b = resolvents(&a, c(1.0, 0.0), eta).unwrap();
        let t = single_traces(&b);
        assert!((t.h2_x - c(-(1.0 + eta * eta).powi(-2), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn assembled_g_matches_dense_inverse() {
        let a = ginibre(64, 1);
        let z = c(0.2, 0.1);
        let eta = 0.1;
        let b = resolvents(&a, z, eta).unwrap();
        let h = hermitize(&a, z);
        let shifted = h.shift(c(0.0, eta));
        let g = linalg::inverse(&shifted).unwrap();
        assert!(g.sub(&b.g()).max_abs() < 1e-9);
        let spec = sym_spectrum(&a, z).unwrap();
        assert!((single_traces(&b).h - spec.mean_h(eta)).abs() < 1e-10);
    }

    #[test]
    fn spectral_traces_match_dense() {
        let a = ginibre(48, 2);
        let z = c(0.3, 0.0);
        let (e1, e2) = (0.2, 0.35);
        let b1 = resolvents(&a, z, e1).unwrap();
        let b2 = resolvents(&a, z, e2).unwrap();
        let spec = sym_spectrum(&a, z).unwrap();
        let st = SpectralTraces::new(&spec);
        let (d, s) = (single_traces(&b1), st.single(e1));
        assert!((d.h - s.h).abs() < 1e-9 * d.h);
        assert!((d.h2 - s.h2).abs() < 1e-9 * d.h2);
        assert!((d.h_htilde - s.h_htilde).abs() < 1e-9 * d.h_htilde);
        assert!((d.h2_x - s.h2_x).norm() < 1e-9 * d.h2);
        for p in [Block::E12, Block::E21] {
            for q in [Block::E12, Block::E21] {
                let dense = gbgb(&b1, &b2, p, q).unwrap();
                let spectral = st.gbgb(e1, e2, p, q);
                assert!((dense - spectral).norm() < 1e-9, "{p:?}{q:?}: {dense} vs {spectral}");
            }
        }
        let w1 = a.col(0).to_vec();
        let w2 = a.col(1).to_vec();
        let qd = dotc(&w1, &b1.h.matvec(&w2));
        assert!((qd - st.quad_h(e1, &w1, &w2)).norm() < 1e-9);
        let qd = dotc(&w1, &b1.htilde.matvec(&w2));
        assert!((qd - st.quad_htilde(e1, &w1, &w2)).norm() < 1e-9);
    }

    #[test]
    fn gbgb_via_full_matrices() {
        let a = ginibre(12, 3);
        let z = c(-0.1, 0.2);
        let b1 = resolvents(&a, z, 0.4).unwrap();
        let b2 = resolvents(&a, z, 0.7).unwrap();
        let n = 12;
        let unit = |blk: Block| {
            let mut e = CMatrix::<f64>::zeros(2 * n, 2 * n);
            let (r, cc) = blk.ab();
            e.set_block(r * n, cc * n, &CMatrix::identity(n));
            e
        };
        for p in [Block::E12, Block::E21] {
            for q in [Block::E12, Block::E21] {
                let full = b1.g().matmul(&unit(p)).matmul(&b2.g()).matmul(&unit(q)).trace() / (2.0 * n as f64);
                assert!((full - gbgb(&b1, &b2, p, q).unwrap()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn cross_traces_symmetry() {
        let a = ginibre(32, 4);
        let b1 = resolvents(&a, c(0.0, 0.0), 0.3).unwrap();
        let b2 = resolvents(&a, c(0.5, 0.0), 0.2).unwrap();
        let x = cross_traces(&b1, &b2).unwrap();
        let y = cross_traces(&b2, &b1).unwrap();
        assert!((x.h_h - y.h_h).abs() < 1e-10);
        assert!((x.ht_ht - y.ht_ht).abs() < 1e-10);
        let rec = trace_functionals(&b1, Some(&b2)).unwrap();
        assert!(rec.gbgb.is_empty() && rec.cross.is_some());
    }

    #[test]
    fn h_decreasing_in_eta() {
        let a = ginibre(32, 5);
        let spec = sym_spectrum(&a, c(0.1, 0.0)).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let h = spec.mean_h(10f64.powf(-4.0 + 0.1 * k as f64));
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn v_functional_forms_agree() {
        let a = ginibre(64, 6);
        let t = ProjectionObservable::standard(64, &[1.0, 0.5]).unwrap();
        for half in [Half::Lower, Half::Upper] {
            let v = v_functional(&a, c(0.2, 0.1), &t, half, 0.1).unwrap();
            assert!(v.value >= 0.0);
            let tf = v.trace_form.unwrap();
            assert!((tf - v.eigen_sum).abs() <= 1e-8 * v.eigen_sum);
        }
    }

    #[test]
    fn ill_conditioned_rejected() {
        let a = ginibre(8, 7);
        assert!(matches!(resolvents(&a, c(0.0, 0.0), 1e-9), Err(Error::IllConditioned(_))));
    }
}
