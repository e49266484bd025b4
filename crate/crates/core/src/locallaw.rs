//! Empirical checks of the local-law inputs: scaling of resolvent traces in
//! `η`, isotropic fluctuations, rigidity, delocalization, eigenstate
//! thermalization, level repulsion and gradient bounds.
//!
//! Reports carry the measured numbers; pass flags compare them against the
//! explicit thresholds stored in the report itself.

use serde::{Deserialize, Serialize};

use crate::dse::{self, DensityProfile};
use crate::ensemble::{sample_iid, EnsembleSpec};
use crate::error::{Error, Result};
use crate::hermitization::{resolvents, sym_spectrum, v_from_spectrum, Block, Half, SpectralTraces, SymSpectrum};
use crate::linalg;
use crate::matrix::CMatrix;
use crate::scalar::{cplx, creal, czero, dotc, Real, C};
use crate::spectral::ProjectionObservable;

pub const SLOPE_TOL: f64 = 0.15;
pub const BOUND_C: f64 = 10.0;
pub const KAPPA: f64 = 1e-3;

/// Measured values of one quantity over a grid, with a log-log fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub quantity: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Expected exponent, if the check is a slope check.
    pub target: Option<f64>,
    pub slope_tol: f64,
    /// Smallest and largest `value · x^{-target}` (or `value` itself for
    /// bound checks).
    pub c: f64,
    #[serde(rename = "C")]
    pub cap_c: f64,
    /// Upper bound on `C` for bound checks.
    pub bound: Option<f64>,
    pub pass: bool,
}

/// Least-squares fit of `ln y = slope · ln x + intercept`; returns
/// `(slope, intercept, R^2)`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().max(f64::MIN_POSITIVE).ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

impl ScalingReport {
    /// Slope check: passes when `|slope - target| ≤ tol`.
    pub fn slope_check(quantity: &str, grid: &[f64], values: &[f64], target: f64, tol: f64) -> Self {
        let (slope, intercept, r2) = loglog_fit(grid, values);
        let consts: Vec<f64> = grid.iter().zip(values).map(|(x, v)| v.abs() * x.powf(-target)).collect();
        Self {
            quantity: quantity.into(),
            grid: grid.to_vec(),
            values: values.to_vec(),
            slope,
            intercept,
            r2,
            target: Some(target),
            slope_tol: tol,
            c: consts.iter().copied().fold(f64::INFINITY, f64::min),
            cap_c: consts.iter().copied().fold(0.0, f64::max),
            bound: None,
            pass: (slope - target).abs() <= tol,
        }
    }

    /// Bound check on already normalized values: passes when `max ≤ bound`.
    pub fn bound_check(quantity: &str, grid: &[f64], values: &[f64], bound: f64) -> Self {
        let (slope, intercept, r2) = loglog_fit(grid, values);
        let cap = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        Self {
            quantity: quantity.into(),
            grid: grid.to_vec(),
            values: values.to_vec(),
            slope,
            intercept,
            r2,
            target: None,
            slope_tol: SLOPE_TOL,
            c: values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min),
            cap_c: cap,
            bound: Some(bound),
            pass: cap <= bound,
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) || grid[0] <= 0.0 {
        return Err(Error::InvalidArgument("grid must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Raw single-matrix trace functionals over an `η` grid, used by
/// [`check_a1`] and by multi-sample averaging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A1Values {
    pub grid: Vec<f64>,
    pub h: Vec<f64>,
    pub h_htilde: Vec<f64>,
    pub h2_x: Vec<f64>,
    pub h2: Vec<f64>,
    /// `max_{B1,B2 ∈ {E12,E21}} |⟨G B1 G B2⟩|`.
    pub gbgb: Vec<f64>,
}

pub fn a1_values<T: Real>(a: &CMatrix<T>, z: C<T>, eta_grid: &[f64]) -> Result<A1Values> {
    check_grid(eta_grid)?;
    let spec = sym_spectrum(a, z)?;
    let st = SpectralTraces::new(&spec);
    let mut out = A1Values { grid: eta_grid.to_vec(), h: vec![], h_htilde: vec![], h2_x: vec![], h2: vec![], gbgb: vec![] };
    for &eta in eta_grid {
        let e = T::lit(eta);
        let s = st.single(e);
        out.h.push(s.h.to_f64_lossy());
        out.h_htilde.push(s.h_htilde.to_f64_lossy());
        out.h2_x.push(s.h2_x.norm().to_f64_lossy());
        out.h2.push(s.h2.to_f64_lossy());
        let g = [Block::E12, Block::E21]
            .iter()
            .flat_map(|&p| [Block::E12, Block::E21].map(|q| st.gbgb(e, e, p, q).norm().to_f64_lossy()))
            .fold(0.0, f64::max);
        out.gbgb.push(g);
    }
    Ok(out)
}

impl A1Values {
    /// Entrywise mean of several samples on a common grid.
    pub fn mean(samples: &[A1Values]) -> Result<A1Values> {
        let first = samples.first().ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
        let k = samples.len() as f64;
        let avg = |f: &dyn Fn(&A1Values) -> &Vec<f64>| -> Vec<f64> {
            (0..first.grid.len())
                .map(|i| {
                    let xs: Vec<f64> = samples.iter().map(|s| f(s)[i]).collect();
                    crate::scalar::pairwise_sum(&xs) / k
                })
                .collect()
        };
        Ok(A1Values {
            grid: first.grid.clone(),
            h: avg(&|s| &s.h),
            h_htilde: avg(&|s| &s.h_htilde),
            h2_x: avg(&|s| &s.h2_x),
            h2: avg(&|s| &s.h2),
            gbgb: avg(&|s| &s.gbgb),
        })
    }

    /// Slope checks for `⟨H⟩`, `⟨HH̃⟩`, `⟨H^2⟩` and bound checks for
    /// `η|⟨H^2(A-z)⟩|` and `|⟨GBGB⟩|`.
    pub fn reports(&self, slope_tol: f64, bound: f64) -> Vec<ScalingReport> {
        let g = &self.grid;
        let h2x: Vec<f64> = self.h2_x.iter().zip(g).map(|(v, e)| v * e).collect();
        vec![
            ScalingReport::slope_check("<H>", g, &self.h, -1.0, slope_tol),
            ScalingReport::slope_check("<H Ht>", g, &self.h_htilde, -2.0, slope_tol),
            ScalingReport::bound_check("eta |<H^2 (A-z)>|", g, &h2x, bound),
            ScalingReport::slope_check("<H^2>", g, &self.h2, -3.0, slope_tol),
            ScalingReport::bound_check("|<G B1 G B2>|", g, &self.gbgb, bound),
        ]
    }
}

/// Scaling of the single-resolvent traces over `eta_grid`.
pub fn check_a1<T: Real>(a: &CMatrix<T>, z: C<T>, eta_grid: &[f64]) -> Result<Vec<ScalingReport>> {
    Ok(a1_values(a, z, eta_grid)?.reports(SLOPE_TOL, BOUND_C))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2Report {
    pub eta_star: f64,
    pub h_h: f64,
    pub ht_ht: f64,
    pub h_ht: f64,
    /// `⟨H_{z1} H_{z2}⟩ η*^2`.
    pub c_hh: f64,
    /// `⟨H̃_{z1} H̃_{z2}⟩ η*^2`.
    pub c_htht: f64,
    /// `⟨H_{z1} H̃_{z2}⟩ η*(η* + |z1 - z2|^2)`.
    pub c_hht: f64,
    /// Smallest admissible lower-bound constant.
    pub c: f64,
}

/// Lower bounds for products of resolvents at two shifts.
pub fn check_a2<T: Real>(a: &CMatrix<T>, z1: C<T>, z2: C<T>, eta1: T, eta2: T) -> Result<A2Report> {
    let b1 = resolvents(a, z1, eta1)?;
    let b2 = resolvents(a, z2, eta2)?;
    let c = crate::hermitization::cross_traces(&b1, &b2)?;
    let es = eta1.max(eta2).to_f64_lossy();
    let dz = (z1 - z2).norm_sqr().to_f64_lossy();
    let (hh, tt, ht) = (c.h_h.to_f64_lossy(), c.ht_ht.to_f64_lossy(), c.h_ht.to_f64_lossy());
    let (c1, c2, c3) = (hh * es * es, tt * es * es, ht * es * (es + dz));
    Ok(A2Report { eta_star: es, h_h: hh, ht_ht: tt, h_ht: ht, c_hh: c1, c_htht: c2, c_hht: c3, c: c1.min(c2).min(c3) })
}

/// Test vectors for the isotropic law: `e1`, `e2`, `(e1 ± e2)/√2`,
/// `(e1 + i e2)/√2` and the flat vector.
pub fn a3_vectors<T: Real>(n: usize) -> Vec<Vec<C<T>>> {
    let s = T::FRAC_1_SQRT_2();
    let unit = |k: usize| {
        let mut e = vec![czero::<T>(); n];
        e[k] = creal(T::one());
        e
    };
    let combo = |b: C<T>| {
        let mut e = vec![czero::<T>(); n];
        e[0] = creal(s);
        e[1] = b.scale(s);
        e
    };
    let flat = vec![creal(T::from_usize_lossy(n).sqrt().recip()); n];
    vec![
        unit(0),
        unit(1),
        combo(creal(T::one())),
        combo(creal(-T::one())),
        combo(cplx(T::zero(), T::one())),
        flat,
    ]
}

/// `max_{w1,w2} |w1^* H w2 - ⟨H⟩ w1^* w2| N^{1/2} η^{3/2}` per grid point,
/// for `H` and for `H̃`, each bounded by [`BOUND_C`].
pub fn check_a3_isotropic<T: Real>(
    a: &CMatrix<T>,
    z: C<T>,
    eta_grid: &[f64],
    vectors: &[Vec<C<T>>],
) -> Result<Vec<ScalingReport>> {
    check_grid(eta_grid)?;
    let n = a.rows();
    if vectors.iter().any(|w| w.len() != n) {
        return Err(Error::DimensionMismatch("test vectors must have length N".into()));
    }
    let spec = sym_spectrum(a, z)?;
    let st = SpectralTraces::new(&spec);
    let sn = (n as f64).sqrt();
    let mut dev_h = Vec::new();
    let mut dev_ht = Vec::new();
    for &eta in eta_grid {
        let e = T::lit(eta);
        let mh = spec.mean_h(e);
        let scale = sn * eta.powf(1.5);
        let (mut mh_dev, mut mt_dev) = (0.0f64, 0.0f64);
        for w1 in vectors {
            for w2 in vectors {
                let ip = dotc(w1, w2);
                let dh = (st.quad_h(e, w1, w2) - ip.scale(mh)).norm().to_f64_lossy();
                let dt = (st.quad_htilde(e, w1, w2) - ip.scale(mh)).norm().to_f64_lossy();
                mh_dev = mh_dev.max(dh * scale);
                mt_dev = mt_dev.max(dt * scale);
            }
        }
        dev_h.push(mh_dev);
        dev_ht.push(mt_dev);
    }
    Ok(vec![
        ScalingReport::bound_check("isotropic H", eta_grid, &dev_h, BOUND_C),
        ScalingReport::bound_check("isotropic Ht", eta_grid, &dev_ht, BOUND_C),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub n: usize,
    pub bulk_count: usize,
    /// `max_{bulk k} N |ξ_k - γ_{k,z}|`.
    pub rigidity: f64,
    pub rigidity_threshold: f64,
    /// `max_{bulk k} √N ‖u_k‖_∞`.
    pub delocalization: f64,
    pub delocalization_threshold: f64,
    pub rigidity_pass: bool,
    pub delocalization_pass: bool,
    pub note: Option<String>,
}

/// Rigidity against the quantiles and delocalization of the Hermitization's
/// eigenvectors, over positive indices `k` with `γ_{k,z}` in the κ-bulk.
/// Thresholds are `log^2 N` and `log N`.
pub fn rigidity_deloc<T: Real>(spec: &SymSpectrum<T>, profile: &DensityProfile<T>, kappa: T) -> Result<RigidityReport> {
    let n = spec.n();
    if profile.n != n || profile.z != spec.z {
        return Err(Error::DimensionMismatch("profile and spectrum differ in N or z".into()));
    }
    let ln = (n as f64).ln();
    let bulk = dse::kappa_bulk(spec.z, kappa);
    let ks: Vec<usize> = (1..=n).filter(|&k| dse::in_bulk(&bulk, profile.gamma(k as isize))).collect();
    let mut rep = RigidityReport {
        n,
        bulk_count: ks.len(),
        rigidity: 0.0,
        rigidity_threshold: ln * ln,
        delocalization: 0.0,
        delocalization_threshold: ln,
        rigidity_pass: true,
        delocalization_pass: true,
        note: None,
    };
    let spread = spec.xi[n - 1] - spec.xi[0];
    if spread <= T::lit(1e-12) * spec.xi[n - 1].max(T::one()) {
        rep.note = Some("DegenerateSpectrum: all singular values coincide; rigidity skipped".into());
    } else {
        rep.rigidity = ks
            .iter()
            .map(|&k| (n as f64) * (spec.xi_at(k as isize) - profile.gamma(k as isize)).abs().to_f64_lossy())
            .fold(0.0, f64::max);
    }
    let sn = (n as f64).sqrt();
    rep.delocalization = ks
        .iter()
        .map(|&k| {
            let u = spec.vector(k as isize);
            sn * u.iter().map(|x| x.norm().to_f64_lossy()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    rep.rigidity_pass = rep.rigidity <= rep.rigidity_threshold;
    rep.delocalization_pass = rep.delocalization <= rep.delocalization_threshold;
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EthReport {
    pub n: usize,
    pub bulk_count: usize,
    /// `max_{|i| ≠ |j|} |u_i^* Y u_j| √N` over bulk indices.
    pub off_diagonal: f64,
    /// `max_{|i| = |j|} |u_i^* Y u_j - prediction| √N` over bulk indices.
    pub diagonal: f64,
    pub threshold: f64,
    /// Whether `|u_i^* Y u_i| ≤ N^{-1/2} log N + |i|/N` holds for the ten
    /// bulk indices closest to zero.
    pub small_index_bound: bool,
    pub pass: bool,
}

/// `⟨(M ⊗ I) Y⟩` on the doubled space from the block traces of `Y`.
fn block_pairing<T: Real>(m: &[[C<T>; 2]; 2], blocks: &[[C<T>; 2]; 2]) -> C<T> {
    let mut acc = czero();
    for a in 0..2 {
        for b in 0..2 {
            acc += m[a][b] * blocks[b][a];
        }
    }
    acc
}

/// Eigenstate thermalization for a `2N x 2N` observable with traceless
/// diagonal blocks. The deterministic value of `u_i^* Y u_j` for
/// `|i| = |j|` is `⟨Im M(ξ_i) Y S⟩ / Im m(ξ_i)`, with `S = I` when `i = j`
/// and `S = diag(I, -I)` when `i = -j` (chiral partner).
pub fn eth_check<T: Real>(spec: &SymSpectrum<T>, y: &CMatrix<T>, kappa: T) -> Result<EthReport> {
    let n = spec.n();
    if y.rows() != 2 * n || y.cols() != 2 * n {
        return Err(Error::DimensionMismatch("observable must be 2N x 2N".into()));
    }
    let nn = T::from_usize_lossy(2 * n);
    let mut blocks = [[czero::<T>(); 2]; 2];
    for (a, row) in blocks.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = y.block(a * n, b * n, n, n).trace() / creal(nn);
        }
    }
    let scale = y.max_abs().max(T::one());
    if blocks[0][0].norm() > T::lit(1e-10) * scale || blocks[1][1].norm() > T::lit(1e-10) * scale {
        return Err(Error::InvalidArgument("observable must have traceless diagonal blocks".into()));
    }
    let q = spec.dense_vectors();
    let w = q.adjoint().matmul(&y.matmul(&q));
    let idx = spec.indices();
    let evs = spec.eigenvalues();
    let bulk = dse::kappa_bulk(spec.z, kappa);
    let in_b: Vec<usize> = (0..2 * n).filter(|&p| dse::in_bulk(&bulk, evs[p])).collect();
    // predictions for i = j and i = -j at each bulk position
    let mut pred_same = vec![czero::<T>(); 2 * n];
    let mut pred_flip = vec![czero::<T>(); 2 * n];
    for &p in &in_b {
        let d = dse::solve_mz(spec.z, cplx(evs[p], T::zero()))?;
        let im = |x: C<T>, y: C<T>| (x - y.conj()) / cplx(T::zero(), T::lit(2.0));
        let mm = &d.mmat;
        let im_m = [[im(mm[0][0], mm[0][0]), im(mm[0][1], mm[1][0])], [im(mm[1][0], mm[0][1]), im(mm[1][1], mm[1][1])]];
        let denom = d.m.im;
        if denom > T::zero() {
            pred_same[p] = block_pairing(&im_m, &blocks) / creal(denom);
            // Y S: the second block column changes sign
            let flipped = [[blocks[0][0], -blocks[0][1]], [blocks[1][0], -blocks[1][1]]];
            pred_flip[p] = block_pairing(&im_m, &flipped) / creal(denom);
        }
    }
    let sn = (n as f64).sqrt();
    let (mut off, mut diag) = (0.0f64, 0.0f64);
    for &pi in &in_b {
        for &pj in &in_b {
            let v = w[(pi, pj)];
            let (i, j) = (idx[pi], idx[pj]);
            if i.abs() != j.abs() {
                off = off.max(v.norm().to_f64_lossy() * sn);
            } else {
                let p = if i == j { pred_same[pi] } else { pred_flip[pi] };
                diag = diag.max((v - p).norm().to_f64_lossy() * sn);
            }
        }
    }
    let ln = (n as f64).ln();
    let mut near_zero: Vec<usize> = in_b.clone();
    near_zero.sort_by_key(|&p| idx[p].abs());
    let small_index_bound = near_zero.iter().take(10).all(|&p| {
        let i = idx[p].unsigned_abs() as f64;
        w[(p, p)].norm().to_f64_lossy() <= ln / sn + i / n as f64
    });
    Ok(EthReport {
        n,
        bulk_count: in_b.len(),
        off_diagonal: off,
        diagonal: diag,
        threshold: ln,
        small_index_bound,
        pass: off <= ln && diag <= ln && small_index_bound,
    })
}

/// `F_12 ⊗ I_N`: the upper-right identity block.
pub fn f12_observable<T: Real>(n: usize) -> CMatrix<T> {
    let mut y = CMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        y[(k, n + k)] = creal(T::one());
    }
    y
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRepulsionReport {
    pub n: usize,
    pub n_samples: usize,
    pub deltas: Vec<f64>,
    pub counts: Vec<usize>,
    pub frequencies: Vec<f64>,
    /// `N^{-2.1 δ}`.
    pub bounds: Vec<f64>,
    /// Binomial standard error at the bound, `sqrt(p0 (1 - p0) / n)`.
    pub standard_errors: Vec<f64>,
    pub monotone: bool,
    pub pass: bool,
}

/// Frequency of `ξ_2^z ≤ N^{-1-δ}` over i.i.d. samples, for each `δ`.
pub fn level_repulsion(spec: &EnsembleSpec, z: C<f64>, deltas: &[f64], n_samples: usize) -> Result<LevelRepulsionReport> {
    let xi2 = (0..n_samples as u64).map(|i| second_singular_value(spec, z, i)).collect::<Result<Vec<_>>>()?;
    level_repulsion_report(spec.dim, &xi2, deltas)
}

/// `ξ_2^z` of sample `sample_index`.
pub fn second_singular_value(spec: &EnsembleSpec, z: C<f64>, sample_index: u64) -> Result<f64> {
    if spec.dim < 2 {
        return Err(Error::InvalidArgument("level repulsion needs N ≥ 2".into()));
    }
    let a = sample_iid::<f64>(spec, sample_index);
    Ok(linalg::singular_values(&a.shift(z))?[1])
}

/// Level-repulsion frequencies from precomputed `ξ_2` values.
pub fn level_repulsion_report(n: usize, xi2: &[f64], deltas: &[f64]) -> Result<LevelRepulsionReport> {
    if n < 2 {
        return Err(Error::InvalidArgument("level repulsion needs N ≥ 2".into()));
    }
    let n_samples = xi2.len();
    let nf = n as f64;
    let counts: Vec<usize> = deltas
        .iter()
        .map(|&d| {
            let cut = nf.powf(-1.0 - d);
            xi2.iter().filter(|&&x| x <= cut).count()
        })
        .collect();
    let ns = n_samples.max(1) as f64;
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / ns).collect();
    let bounds: Vec<f64> = deltas.iter().map(|&d| nf.powf(-2.1 * d)).collect();
    let standard_errors: Vec<f64> = bounds.iter().map(|&p| (p * (1.0 - p) / ns).sqrt()).collect();
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&a, &b| deltas[a].total_cmp(&deltas[b]));
    let monotone = order.windows(2).all(|w| frequencies[w[1]] <= frequencies[w[0]]);
    let pass = monotone && frequencies.iter().zip(&bounds).zip(&standard_errors).all(|((f, b), s)| *f <= b + 3.0 * s);
    Ok(LevelRepulsionReport { n, n_samples, deltas: deltas.to_vec(), counts, frequencies, bounds, standard_errors, monotone, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub eta: f64,
    pub grad_norm: f64,
    pub hess_norm: f64,
    pub grad_bound: f64,
    pub hess_bound: f64,
    pub grad_ratio: f64,
    pub hess_ratio: f64,
    /// Relative disagreement of the estimates at `h` and `h/2`.
    pub grad_fd_disagreement: f64,
    pub hess_fd_disagreement: f64,
}

/// Gradient (fourth-order stencil) and Hessian (second-order stencil) of a
/// complex function of `z = x + iy`, each at step `h` and `h/2`.
fn fd_derivatives(
    f: &dyn Fn(C<f64>) -> Result<C<f64>>,
    z: C<f64>,
    h: f64,
    h2: f64,
) -> Result<([C<f64>; 2], [C<f64>; 2], [[C<f64>; 2]; 2], [[C<f64>; 2]; 2])> {
    let dirs = [cplx(1.0, 0.0), cplx(0.0, 1.0)];
    let grad = |h: f64| -> Result<[C<f64>; 2]> {
        let mut g = [czero(); 2];
        for (k, d) in dirs.iter().enumerate() {
            let at = |s: f64| f(z + d.scale(s));
            g[k] = (at(-2.0 * h)? - at(2.0 * h)? + (at(h)? - at(-h)?).scale(8.0)).unscale(12.0 * h);
        }
        Ok(g)
    };
    let hess = |h: f64| -> Result<[[C<f64>; 2]; 2]> {
        let f0 = f(z)?;
        let mut m = [[czero(); 2]; 2];
        for a in 0..2 {
            let da = dirs[a];
            m[a][a] = (f(z + da.scale(h))? - f0.scale(2.0) + f(z - da.scale(h))?).unscale(h * h);
        }
        let (dx, dy) = (dirs[0], dirs[1]);
        let mixed = (f(z + (dx + dy).scale(h))? - f(z + (dx - dy).scale(h))? - f(z + (dy - dx).scale(h))?
            + f(z - (dx + dy).scale(h))?)
            .unscale(4.0 * h * h);
        m[0][1] = mixed;
        m[1][0] = mixed;
        Ok(m)
    };
    Ok((grad(h)?, grad(h / 2.0)?, hess(h2)?, hess(h2 / 2.0)?))
}

fn vnorm(g: &[C<f64>; 2]) -> f64 {
    (g[0].norm_sqr() + g[1].norm_sqr()).sqrt()
}

fn mnorm(m: &[[C<f64>; 2]; 2]) -> f64 {
    m.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Trace norm `Tr sqrt(T^*T)` of a Hermitian matrix.
pub fn trace_norm(t: &CMatrix<f64>) -> Result<f64> {
    Ok(linalg::herm_eigenvalues(t)?.iter().map(|x| x.abs()).sum())
}

fn grad_report(
    f: &dyn Fn(C<f64>) -> Result<C<f64>>,
    z: C<f64>,
    n: usize,
    eta: f64,
    tnorm: f64,
    scale: f64,
) -> Result<GradReport> {
    let nf = n as f64;
    let h = 1e-6 / nf.sqrt();
    let h2 = 1e-3 / nf.sqrt();
    let (g1, g2, m1, m2) = fd_derivatives(f, z, h, h2)?;
    let (gn, gn2, hn, hn2) = (vnorm(&g1), vnorm(&g2), mnorm(&m1), mnorm(&m2));
    let (dg, dh) = (rel_diff(gn, gn2), rel_diff(hn, hn2));
    if dg > 0.1 || dh > 0.1 {
        return Err(Error::FdInstability(format!(
            "gradient {gn:e} vs {gn2:e}, Hessian {hn:e} vs {hn2:e}"
        )));
    }
    let grad_bound = scale * nf.powf(-1.5) * eta.powi(-2) * tnorm;
    let hess_bound = scale * nf.powi(-2) * eta.powi(-3) * tnorm;
    Ok(GradReport {
        eta,
        grad_norm: gn,
        hess_norm: hn,
        grad_bound,
        hess_bound,
        grad_ratio: gn / grad_bound,
        hess_ratio: hn / hess_bound,
        grad_fd_disagreement: dg,
        hess_fd_disagreement: dh,
    })
}

/// Finite-difference `∇_z` and `∇_z^2` of `Tr T G_z(iη)` against
/// `N^{-3/2} η^{-2} Tr|T|` and `N^{-2} η^{-3} Tr|T|`. The gradient step is
/// `1e-6 N^{-1/2}`; the Hessian uses `1e-3 N^{-1/2}`.
pub fn grad_scaling(a: &CMatrix<f64>, z: C<f64>, t: &CMatrix<f64>, eta: f64) -> Result<GradReport> {
    let n = a.rows();
    if t.rows() != 2 * n || t.cols() != 2 * n {
        return Err(Error::DimensionMismatch("T must be 2N x 2N".into()));
    }
    let f = |w: C<f64>| -> Result<C<f64>> {
        let g = resolvents(a, w, eta)?.g();
        Ok(t.trace_of_product(&g))
    };
    grad_report(&f, z, n, eta, trace_norm(t)?, 1.0)
}

/// The same derivatives for `V(z, T) = N η Tr[T^*T Im G_z(η)]` read from
/// one half, normalized by `N^{-3/2} η^{-2}` and `N^{-2} η^{-3}`.
pub fn grad_v_scaling(a: &CMatrix<f64>, z: C<f64>, obs: &ProjectionObservable<f64>, half: Half, eta: f64) -> Result<GradReport> {
    let n = a.rows();
    let f = |w: C<f64>| -> Result<C<f64>> {
        let spec = sym_spectrum(a, w)?;
        Ok(creal(v_from_spectrum(&spec, obs, half, eta)))
    };
    grad_report(&f, z, n, eta, 1.0, 1.0)
}
