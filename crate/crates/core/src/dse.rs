//! Deterministic equivalents of the Hermitized resolvent.
//!
//! `m = m_z(w)` solves `-1/m = w + m - |z|^2 / (w + m)`. Multiplying through by
//! `m (w + m)` gives the cubic
//!
//! ```text
//! m^3 + 2 w m^2 + (w^2 + 1 - |z|^2) m + w = 0,
//! ```
//!
//! which is solved in closed form; the physical root is the one with
//! `Im m · Im w > 0` (the Stieltjes branch). For `z = 0` the cubic factors as
//! `(m + w)(m^2 + w m + 1)` and reduces to the semicircle law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{abs2, cplx, czero, Real, C};

/// Imaginary offset used for boundary values on the real axis.
pub const BOUNDARY_ETA: f64 = 1e-10;
const AMBIGUITY_TOL: f64 = 1e-10;
const CONTINUATION_STEPS: usize = 256;

/// `m_z(w)` together with `u_z(w)` and the 2x2 matrix `M_z(w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetEquivalent<T> {
    pub z: C<T>,
    pub w: C<T>,
    pub m: C<T>,
    pub u: C<T>,
    /// Row-major `[[m, -z u], [-conj(z) u, m]]`.
    pub mmat: [[C<T>; 2]; 2],
}

impl<T: Real> DetEquivalent<T> {
    fn new(z: C<T>, w: C<T>, m: C<T>) -> Self {
        let u = m / (w + m);
        Self {
            z,
            w,
            m,
            u,
            mmat: [[m, -z * u], [-z.conj() * u, m]],
        }
    }

    /// Residual of the defining (non-polynomial) equation.
    pub fn residual(&self) -> T {
        self_consistent_residual(self.z, self.w, self.m)
    }
}

pub fn self_consistent_residual<T: Real>(z: C<T>, w: C<T>, m: C<T>) -> T {
    let lhs = -m.inv();
    let rhs = w + m - (w + m).inv().scale(abs2(z));
    (lhs - rhs).norm()
}

fn cubic_coeffs<T: Real>(z: C<T>, w: C<T>) -> [C<T>; 3] {
    let two = T::lit(2.0);
    [w.scale(two), w * w + cplx(T::one() - abs2(z), T::zero()), w]
}

fn cubic_eval<T: Real>(c: &[C<T>; 3], m: C<T>) -> (C<T>, C<T>) {
    let p = ((m + c[0]) * m + c[1]) * m + c[2];
    let dp = (m.scale(T::lit(3.0)) + c[0].scale(T::lit(2.0))) * m + c[1];
    (p, dp)
}

fn newton_polish<T: Real>(c: &[C<T>; 3], mut m: C<T>, steps: usize) -> C<T> {
    for _ in 0..steps {
        let (p, dp) = cubic_eval(c, m);
        if dp.norm() == T::zero() {
            break;
        }
        let next = m - p / dp;
        if !(next.re.is_finite() && next.im.is_finite()) {
            break;
        }
        if cubic_eval(c, next).0.norm() > p.norm() {
            break;
        }
        m = next;
    }
    m
}

/// All three roots of the monic cubic `m^3 + c0 m^2 + c1 m + c2` (Cardano,
/// then Newton-polished).
pub fn cubic_roots<T: Real>(c: &[C<T>; 3]) -> [C<T>; 3] {
    let three = T::lit(3.0);
    let b = c[0];
    let shift = b.unscale(three);
    let p = c[1] - b * b.unscale(three);
    let q = b * b * b.scale(T::lit(2.0 / 27.0)) - b * c[1].unscale(three) + c[2];
    let disc = (q * q).unscale(T::lit(4.0)) + p * p * p.unscale(T::lit(27.0));
    let sq = disc.sqrt();
    let half_q = q.unscale(T::lit(2.0));
    // pick the larger cube argument to avoid cancellation
    let a1 = -half_q + sq;
    let a2 = -half_q - sq;
    let big = if a1.norm() >= a2.norm() { a1 } else { a2 };
    let omega = cplx(T::lit(-0.5), T::lit(0.75f64.sqrt()));
    let omega2 = omega.conj();
    let mut roots = [czero(); 3];
    if big.norm() == T::zero() {
        // p = q = 0: triple root
        roots = [-shift; 3];
    } else {
        let u = big.powf(T::one() / three);
        let v = -p / (u.scale(three));
        roots[0] = u + v - shift;
        roots[1] = omega * u + omega2 * v - shift;
        roots[2] = omega2 * u + omega * v - shift;
    }
    for r in roots.iter_mut() {
        *r = newton_polish(c, *r, 4);
    }
    roots
}

fn admissible_upper<T: Real>(roots: &[C<T>; 3]) -> Vec<C<T>> {
    roots.iter().copied().filter(|r| r.im > T::zero()).collect()
}

fn nearest<T: Real>(roots: &[C<T>; 3], target: C<T>) -> Result<C<T>> {
    let mut idx: Vec<usize> = (0..3).collect();
    idx.sort_by(|&a, &b| {
        (roots[a] - target)
            .norm()
            .partial_cmp(&(roots[b] - target).norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let (best, second) = (roots[idx[0]], roots[idx[1]]);
    if (best - second).norm() < T::lit(AMBIGUITY_TOL) && (best - target).norm() > T::zero() {
        return Err(Error::BranchAmbiguity(format!("{target:?}")));
    }
    Ok(best)
}

/// Upper half-plane solve (`Im w > 0`).
fn solve_upper<T: Real>(z: C<T>, w: C<T>) -> Result<C<T>> {
    let c = cubic_coeffs(z, w);
    let roots = cubic_roots(&c);
    let adm = admissible_upper(&roots);
    if adm.len() == 1 {
        return Ok(adm[0]);
    }
    // Several (or, from rounding, no) roots in the upper half-plane:
    // continue the branch from w = i, where it is unambiguous.
    let start = cplx(T::zero(), T::one());
    let c0 = cubic_coeffs(z, start);
    let r0 = cubic_roots(&c0);
    let adm0 = admissible_upper(&r0);
    if adm0.len() != 1 {
        return Err(Error::BranchAmbiguity(format!("{start:?}")));
    }
    let mut m = adm0[0];
    for s in 1..=CONTINUATION_STEPS {
        let frac = T::from_usize_lossy(s) / T::from_usize_lossy(CONTINUATION_STEPS);
        let ws = start + (w - start).scale(frac);
        let rs = cubic_roots(&cubic_coeffs(z, ws));
        m = nearest(&rs, m)?;
    }
    let m = newton_polish(&c, m, 3);
    let others = roots.iter().filter(|r| (**r - m).norm() > T::lit(AMBIGUITY_TOL));
    if others.clone().count() < 2 {
        return Err(Error::BranchAmbiguity(format!("{w:?}")));
    }
    Ok(m)
}

/// Boundary value `m_z(E + i0)`.
fn solve_real<T: Real>(z: C<T>, e: T) -> Result<C<T>> {
    let w = cplx(e, T::zero());
    let c = cubic_coeffs(z, w);
    let roots = cubic_roots(&c);
    // real coefficients: either a conjugate pair (inside the support) or
    // three real roots (outside)
    let scale = roots.iter().fold(T::one(), |a, r| a.max(r.norm()));
    let tiny = T::lit(1e-7) * scale;
    if let Some(r) = roots
        .iter()
        .copied()
        .filter(|r| r.im > tiny)
        .max_by(|a, b| a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    {
        return Ok(r);
    }
    // Near or outside the edge: take the limit from above and snap to the
    // nearby root of the real cubic.
    let lifted = solve_upper(z, cplx(e, T::lit(BOUNDARY_ETA)))?;
    let m = newton_polish(&c, lifted, 1);
    let best = roots
        .iter()
        .copied()
        .min_by(|a, b| {
            (*a - m)
                .norm()
                .partial_cmp(&(*b - m).norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(m);
    if best.im.abs() <= tiny {
        Ok(cplx(best.re, T::zero()))
    } else {
        Ok(cplx(best.re, best.im.abs()))
    }
}

/// Solves for `m_z(w)`. Real `w` returns the boundary value from the upper
/// half-plane; `Im w < 0` uses `m(conj w) = conj m(w)`.
pub fn solve_mz<T: Real>(z: C<T>, w: C<T>) -> Result<DetEquivalent<T>> {
    let m = if w.im > T::zero() {
        solve_upper(z, w)?
    } else if w.im < T::zero() {
        solve_upper(z, w.conj())?.conj()
    } else {
        solve_real(z, w.re)?
    };
    Ok(DetEquivalent::new(z, w, m))
}

/// Limiting density `ρ_z(E) = |Im m_z(E + i0)| / π`.
pub fn rho_z<T: Real>(z: C<T>, e: T) -> T {
    match solve_real(z, e) {
        Ok(m) => m.im.abs() / T::PI(),
        Err(_) => T::zero(),
    }
}

fn inside_support<T: Real>(z: C<T>, e: T) -> bool {
    rho_z(z, e) > T::zero()
}

/// Right edge of the (single-interval) support `[-E+, E+]`, `|z| < 1`.
pub fn support_edge<T: Real>(z: C<T>) -> T {
    let mut lo = T::zero();
    let mut hi = T::lit(1.0);
    while inside_support(z, hi) {
        hi = hi + hi;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if inside_support(z, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Adaptive Simpson with an absolute tolerance.
pub fn adaptive_simpson<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, tol: T, max_depth: usize) -> Result<T> {
    let two = T::lit(2.0);
    let fa = f(a);
    let fb = f(b);
    let mid = (a + b) / two;
    let fm = f(mid);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    #[allow(clippy::too_many_arguments)]
    fn rec<T: Real>(
        f: &impl Fn(T) -> T,
        a: T,
        b: T,
        fa: T,
        fm: T,
        fb: T,
        whole: T,
        tol: T,
        depth: usize,
    ) -> Result<T> {
        let two = T::lit(2.0);
        let m = (a + b) / two;
        let lm = (a + m) / two;
        let rm = (m + b) / two;
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / T::lit(6.0) * (fa + T::lit(4.0) * flm + fm);
        let right = (b - m) / T::lit(6.0) * (fm + T::lit(4.0) * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= T::lit(15.0) * tol {
            return Ok(left + right + delta / T::lit(15.0));
        }
        if depth == 0 {
            // interval below resolution: accept if the interval is tiny
            if (b - a).abs() <= T::epsilon() * (a.abs() + b.abs()) * T::lit(64.0) {
                return Ok(left + right);
            }
            return Err(Error::QuadratureFailure(format!(
                "no convergence on [{a}, {b}]"
            )));
        }
        Ok(rec(f, a, m, fa, flm, fm, left, tol / two, depth - 1)?
            + rec(f, m, b, fm, frm, fb, right, tol / two, depth - 1)?)
    }
    rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

const QUAD_TOL: f64 = 1e-10;
const QUAD_DEPTH: usize = 48;
const QUANTILE_TOL: f64 = 1e-12;
const PANELS: usize = 64;

/// Limiting density, quantiles and κ-bulk for one shift `z`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityProfile<T> {
    pub z: C<T>,
    pub n: usize,
    pub edge: T,
    pub grid: Vec<T>,
    pub rho: Vec<T>,
    /// `quantiles[j + N] = γ_{j,z}` for `j ∈ [-N, N]`.
    pub quantiles: Vec<T>,
    pub total_mass: T,
}

impl<T: Real> DensityProfile<T> {
    pub fn gamma(&self, j: isize) -> T {
        self.quantiles[(j + self.n as isize) as usize]
    }
}

/// Cumulative mass of `ρ_z` on `[0, x]` organized by panels.
struct Cumulative<T> {
    z: C<T>,
    knots: Vec<T>,
    mass: Vec<T>,
}

impl<T: Real> Cumulative<T> {
    fn new(z: C<T>, edge: T) -> Result<Self> {
        let knots: Vec<T> = (0..=PANELS)
            .map(|k| edge * T::from_usize_lossy(k) / T::from_usize_lossy(PANELS))
            .collect();
        let f = |e: T| rho_z(z, e);
        let tol = T::lit(QUAD_TOL) / T::from_usize_lossy(PANELS);
        let mut mass = vec![T::zero()];
        for w in knots.windows(2) {
            let piece = adaptive_simpson(&f, w[0], w[1], tol, QUAD_DEPTH)?;
            mass.push(*mass.last().unwrap() + piece);
        }
        Ok(Self { z, knots, mass })
    }

    fn at(&self, x: T) -> Result<T> {
        let k = self
            .knots
            .partition_point(|&kn| kn <= x)
            .saturating_sub(1)
            .min(PANELS - 1);
        let f = |e: T| rho_z(self.z, e);
        let tol = T::lit(QUAD_TOL) / T::from_usize_lossy(PANELS);
        Ok(self.mass[k] + adaptive_simpson(&f, self.knots[k], x, tol, QUAD_DEPTH)?)
    }

    fn total(&self) -> T {
        *self.mass.last().unwrap()
    }

    /// Smallest `x ≥ 0` with cumulative mass `target` (bisection).
    fn invert(&self, target: T) -> Result<T> {
        if target <= T::zero() {
            return Ok(T::zero());
        }
        if target >= self.total() {
            return Ok(*self.knots.last().unwrap());
        }
        let k = self.mass.partition_point(|&m| m < target).max(1) - 1;
        let (mut lo, mut hi) = (self.knots[k], self.knots[k + 1]);
        while hi - lo > T::lit(QUANTILE_TOL) {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.at(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo + hi) / T::lit(2.0))
    }
}

/// Builds the density profile and quantiles `γ_{j,z}`, `|j| ≤ N`, defined by
/// `(j + N) / 2N = ∫_{-∞}^{γ_j} ρ_z`.
pub fn quantiles<T: Real>(z: C<T>, n: usize) -> Result<DensityProfile<T>> {
    if z.norm() >= T::one() {
        return Err(Error::InvalidArgument(format!("|z| = {} must be < 1", z.norm())));
    }
    let edge = support_edge(z);
    let cum = Cumulative::new(z, edge)?;
    let total_mass = cum.total() * T::lit(2.0);
    if (total_mass - T::one()).abs() > T::lit(1e-8) {
        return Err(Error::QuadratureFailure(format!("mass {total_mass} != 1")));
    }
    let nn = T::from_usize_lossy(n);
    let half = (1..=n)
        .map(|j| cum.invert(T::from_usize_lossy(j) / (nn * T::lit(2.0))))
        .collect::<Result<Vec<T>>>()?;
    let mut q = Vec::with_capacity(2 * n + 1);
    q.extend(half.iter().rev().map(|&g| -g));
    q.push(T::zero());
    q.extend(half.iter().copied());
    let grid_n = 401;
    let grid: Vec<T> = (0..grid_n)
        .map(|i| -edge + edge * T::lit(2.0) * T::from_usize_lossy(i) / T::from_usize_lossy(grid_n - 1))
        .collect();
    let rho = grid.iter().map(|&e| rho_z(z, e)).collect();
    Ok(DensityProfile {
        z,
        n,
        edge,
        grid,
        rho,
        quantiles: q,
        total_mass,
    })
}

/// Closed intervals where `ρ_z(E) ≥ κ^{1/3}`.
pub fn kappa_bulk<T: Real>(z: C<T>, kappa: T) -> Vec<(T, T)> {
    let level = kappa.cbrt();
    let edge = support_edge(z);
    let g = |e: T| rho_z(z, e) - level;
    let pts = 2001;
    let xs: Vec<T> = (0..pts)
        .map(|i| -edge + edge * T::lit(2.0) * T::from_usize_lossy(i) / T::from_usize_lossy(pts - 1))
        .collect();
    let vals: Vec<T> = xs.iter().map(|&x| g(x)).collect();
    // bisection between a point inside the bulk and one outside
    let refine = |mut inside: T, mut outside: T| {
        for _ in 0..200 {
            let m = (inside + outside) / T::lit(2.0);
            if m == inside || m == outside {
                break;
            }
            if g(m) >= T::zero() {
                inside = m;
            } else {
                outside = m;
            }
        }
        inside
    };
    let mut out = Vec::new();
    let mut start: Option<T> = if vals[0] >= T::zero() { Some(xs[0]) } else { None };
    for i in 1..pts {
        let (inside_prev, inside) = (vals[i - 1] >= T::zero(), vals[i] >= T::zero());
        if !inside_prev && inside {
            start = Some(refine(xs[i], xs[i - 1]));
        } else if inside_prev && !inside {
            let end = refine(xs[i - 1], xs[i]);
            out.push((start.take().unwrap(), end));
        }
    }
    if let Some(s) = start {
        out.push((s, xs[pts - 1]));
    }
    out
}

pub fn in_bulk<T: Real>(bulk: &[(T, T)], e: T) -> bool {
    bulk.iter().any(|&(a, b)| a <= e && e <= b)
}

/// `⟨H_z(η)⟩ = N^{-1} Σ_k (σ_k^2 + η^2)^{-1}` from the singular values of `A - z`.
pub fn mean_h<T: Real>(singular_values: &[T], eta: T) -> T {
    let n = T::from_usize_lossy(singular_values.len());
    let eta2 = eta * eta;
    let terms: Vec<T> = singular_values.iter().map(|&s| (s * s + eta2).recip()).collect();
    crate::scalar::pairwise_sum(&terms) / n
}

/// The scale `η_{z,t}` solving `t ⟨H_z(η)⟩ = 1`, by bisection in `log η`
/// on `[1e-8, 1e2]`.
pub fn eta_from_singular_values<T: Real>(singular_values: &[T], t: T) -> Result<T> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    let f = |eta: T| t * mean_h(singular_values, eta) - T::one();
    let (mut lo, mut hi) = (T::lit(1e-8).ln(), T::lit(1e2).ln());
    if !(f(lo.exp()) > T::zero() && f(hi.exp()) < T::zero()) {
        return Err(Error::BracketFailure(format!("t = {t}")));
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid.exp()) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (lo.exp(), hi.exp());
    let eta = if f(a).abs() <= f(b).abs() { a } else { b };
    Ok(eta)
}

pub fn eta_zt<T: Real>(spectrum: &crate::hermitization::SymSpectrum<T>, t: T) -> Result<T> {
    eta_from_singular_values(&spectrum.xi, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C<f64> {
        cplx(re, im)
    }

    #[test]
    fn golden_ratio_at_i() {
        let d = solve_mz(c(0.0, 0.0), c(0.0, 1.0)).unwrap();
        assert!((d.m - c(0.0, (5f64.sqrt() - 1.0) / 2.0)).norm() < 1e-14);
        assert!(d.residual() < 1e-12);
    }

    #[test]
    fn semicircle_at_zero_shift() {
        for k in 0..=40 {
            let e = -1.95 + 3.9 * k as f64 / 40.0;
            let rho = rho_z(c(0.0, 0.0), e);
            let sc = (4.0 - e * e).sqrt() / (2.0 * std::f64::consts::PI);
            assert!((rho - sc).abs() < 1e-10, "E={e}: {rho} vs {sc}");
        }
    }

    #[test]
    fn imaginary_part_at_origin() {
        for r in [0.0, 0.3, 0.6, 0.855] {
            let z = c(r * 0.6, r * 0.8);
            let d = solve_mz(z, c(0.0, 0.0)).unwrap();
            assert!((d.m.im - (1.0 - r * r).sqrt()).abs() < 1e-8);
            let d = solve_mz(z, c(0.0, 1e-9)).unwrap();
            assert!((d.m.im - (1.0 - r * r).sqrt()).abs() < 1e-8);
        }
        assert!((rho_z(c(0.0, 0.0), 0.0) - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        assert!((rho_z(c(0.6, 0.0), 0.0) - 0.8 / std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn zero_outside_support() {
        for z in [c(0.0, 0.0), c(0.3, 0.1), c(0.6, 0.0)] {
            assert!(rho_z(z, 5.0) <= 1e-12);
            assert!(rho_z(z, -5.0) <= 1e-12);
            let d = solve_mz(z, c(5.0, 0.0)).unwrap();
            assert!(d.residual() < 1e-12);
        }
    }

    #[test]
    fn residual_and_branch_on_grid() {
        for i in 0..10 {
            for j in 0..10 {
                let z = c(0.08 * i as f64, 0.03 * j as f64);
                for k in 0..10 {
                    let w = c(-3.0 + 0.6 * k as f64, 10f64.powf(-3.0 + 0.5 * j as f64));
                    let d = solve_mz(z, w).unwrap();
                    assert!(d.residual() < 1e-12, "z={z} w={w} res={}", d.residual());
                    assert!(d.m.im > 0.0);
                }
            }
        }
    }

    #[test]
    fn lower_half_plane_by_conjugation() {
        let z = c(0.2, -0.1);
        let up = solve_mz(z, c(0.4, 0.3)).unwrap();
        let down = solve_mz(z, c(0.4, -0.3)).unwrap();
        assert!((up.m.conj() - down.m).norm() < 1e-14);
        assert!(down.m.im < 0.0);
    }

    #[test]
    fn boundary_branch_is_continuous() {
        // On a 1e-3 grid the selected root must always be the continuation of
        // the previous one (nearest root of the new cubic), with steps of the
        // size set by |dm/dE|.
        let z = c(0.3, 0.1);
        let edge = support_edge(z);
        let mut prev: Option<C<f64>> = None;
        let mut e = -edge + 1e-2;
        while e < edge - 1e-2 {
            let m = solve_mz(z, c(e, 0.0)).unwrap().m;
            if let Some(p) = prev {
                assert!((m - p).norm() < 1e-2, "jump at E={e}");
                let roots = cubic_roots(&cubic_coeffs(z, c(e, 0.0)));
                let nearest = roots
                    .iter()
                    .min_by(|a, b| (**a - p).norm().partial_cmp(&(**b - p).norm()).unwrap())
                    .unwrap();
                assert!((nearest - m).norm() < 1e-12, "branch swap at E={e}");
            }
            prev = Some(m);
            e += 1e-3;
        }
    }

    #[test]
    fn semicircle_quantile() {
        let p = quantiles(c(0.0, 0.0), 2).unwrap();
        assert_eq!(p.gamma(0), 0.0);
        // ∫_0^γ sqrt(4-x²)/(2π) dx = 1/4
        let cdf = |g: f64| (g * (4.0 - g * g).sqrt() / 2.0 + 2.0 * (g / 2.0).asin()) / (2.0 * std::f64::consts::PI);
        let g = p.gamma(1);
        assert!((cdf(g) - 0.25).abs() < 1e-10);
        assert!((g - 0.8079).abs() < 1e-4);
        assert!((p.gamma(-1) + g).abs() == 0.0);
        assert!((p.total_mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quantiles_strictly_increasing() {
        let p = quantiles(c(0.3, 0.1), 32).unwrap();
        assert!(p.quantiles.windows(2).all(|w| w[0] < w[1]));
        for j in 0..=32 {
            assert_eq!(p.gamma(j), -p.gamma(-j));
        }
        for (&e, &r) in p.grid.iter().zip(&p.rho) {
            assert!((r - rho_z(c(0.3, 0.1), -e)).abs() < 1e-10);
        }
    }

    #[test]
    fn kappa_bulk_intervals() {
        let z = c(0.0, 0.0);
        assert!(kappa_bulk(z, 1.0).is_empty());
        let b = kappa_bulk(z, 1e-3);
        assert_eq!(b.len(), 1);
        assert!(in_bulk(&b, 0.0));
        for (a, e) in b {
            assert!((rho_z(z, a) - 0.1).abs() < 1e-8);
            assert!((rho_z(z, e) - 0.1).abs() < 1e-8);
        }
    }

    #[test]
    fn eta_closed_form_at_zero_matrix() {
        let sv = vec![0.0f64; 10];
        for t in [0.01f64, 0.3, 2.0] {
            let eta = eta_from_singular_values(&sv, t).unwrap();
            assert!((eta - t.sqrt()).abs() < 1e-12);
            assert!((t * mean_h(&sv, eta) - 1.0).abs() < 1e-10);
        }
        assert!(eta_from_singular_values(&sv, 1e-20).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let d = solve_mz(cplx(0.0f32, 0.0), cplx(0.0, 1.0)).unwrap();
        assert!((d.m.im - 0.618034).abs() < 1e-5);
    }
}
