//! Experiment configuration, deterministic parallel sweeps and report
//! emission.
//!
//! Samples are processed on the ambient rayon pool, one task per sample
//! index. Results are collected into an index-ordered buffer before any
//! reduction, so aggregates do not depend on the number of workers.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::changevar::{jacobian_fd_check, kq_ratio_check, log_det_projection, random_chain, Side};
use crate::dse;
use crate::ensemble::{derive_stream, sample_iid, sample_pair, EnsembleSpec, Family};
use crate::error::{Error, Result};
use crate::hermitization::sym_spectrum;
use crate::linalg;
use crate::locallaw::{self, A1Values, ScalingReport};
use crate::scalar::{cplx, pairwise_sum, C};
use crate::spectral::{eig_pairs, matrix_digest, projection_stat, select_targets, ProjectionObservable};
use crate::stats::{self, ecdf, LimitLaw, SampleSet, TestResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sample,
    Spectrum,
    VerifyA1,
    VerifyA2,
    VerifyA3,
    Rigidity,
    Eth,
    LevelRepulsion,
    JacobianCheck,
    KqRatio,
    EvecStats,
    Mgf,
    Independence,
    DseTable,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 14] = [
        Self::Sample,
        Self::Spectrum,
        Self::VerifyA1,
        Self::VerifyA2,
        Self::VerifyA3,
        Self::Rigidity,
        Self::Eth,
        Self::LevelRepulsion,
        Self::JacobianCheck,
        Self::KqRatio,
        Self::EvecStats,
        Self::Mgf,
        Self::Independence,
        Self::DseTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sample => "sample",
            Self::Spectrum => "spectrum",
            Self::VerifyA1 => "verify-a1",
            Self::VerifyA2 => "verify-a2",
            Self::VerifyA3 => "verify-a3",
            Self::Rigidity => "rigidity",
            Self::Eth => "eth",
            Self::LevelRepulsion => "level-repulsion",
            Self::JacobianCheck => "jacobian-check",
            Self::KqRatio => "kq-ratio",
            Self::EvecStats => "evec-stats",
            Self::Mgf => "mgf",
            Self::Independence => "independence",
            Self::DseTable => "dse-table",
        }
    }
}

/// Deformation time as a function of `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum TRule {
    Zero,
    Fixed { t: f64 },
    /// `t = N^exponent`.
    Power { exponent: f64 },
}

impl TRule {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            TRule::Zero => 0.0,
            TRule::Fixed { t } => t,
            TRule::Power { exponent } => (n as f64).powf(exponent),
        }
    }
}

/// A spectral target `z⁰` and which eigenvector to read there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub z: C<f64>,
    pub side: Side,
}

/// Log-spaced `η` grid on `[N^lo_exponent, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaGrid {
    pub lo_exponent: f64,
    pub hi: f64,
    pub points: usize,
}

impl EtaGrid {
    pub fn at(&self, n: usize) -> Vec<f64> {
        locallaw::log_grid((n as f64).powf(self.lo_exponent), self.hi, self.points)
    }
}

/// Scalar parameters of the sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Separation exponent `ε` in `N^{-1/2+ε}`.
    pub epsilon: f64,
    pub kappa: f64,
    pub delta_v: f64,
    /// Level-repulsion exponents.
    pub deltas: Vec<f64>,
    pub eta_grid: EtaGrid,
    /// `q` of the determinant and `K_q` checks.
    pub q: f64,
    /// MGF arguments (all ≤ 0).
    pub s_grid: Vec<f64>,
    /// Finite-difference step of the Jacobian check.
    pub fd_h: f64,
    /// `(η1, η2)` of the two-resolvent check.
    pub a2_etas: [f64; 2],
    /// Energy grid of the density table: points on `[0, E_+]`.
    pub dse_points: usize,
}

/// Every pass/fail threshold used by the harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Upper bound on the KS distance to the predicted law.
    pub ks: f64,
    /// Lower bound on the KS distance to the Gaussian-squared alternative.
    pub ks_alternative: f64,
    pub slope_tol: f64,
    pub bound_c: f64,
    pub a2_c: f64,
    pub corr: f64,
    pub p_value: f64,
    /// Gap, in pooled standard errors, for mean comparisons.
    pub mean_gap_se: f64,
    pub kq_gap: f64,
    pub jacobian_rel: f64,
    pub jacobian_degenerate_abs: f64,
    /// Fraction of samples that must satisfy per-sample polylog bounds.
    pub sample_fraction: f64,
    /// Largest tolerated fraction of discarded samples.
    pub discard_cap: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ks: 0.05,
            ks_alternative: 0.1,
            slope_tol: locallaw::SLOPE_TOL,
            bound_c: locallaw::BOUND_C,
            a2_c: 0.01,
            corr: 0.05,
            p_value: 0.01,
            mean_gap_se: 3.0,
            kq_gap: 0.1,
            jacobian_rel: 1e-4,
            jacobian_degenerate_abs: 1e-6,
            sample_fraction: 0.95,
            discard_cap: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Family and deformation flags; `dim` and `master_seed` are taken from
    /// `n_list` and `master_seed`.
    pub ensemble: EnsembleSpec,
    pub n_list: Vec<usize>,
    pub t_rule: TRule,
    pub targets: Vec<Target>,
    /// Weights of standard-basis projection observables `T`.
    pub observables: Vec<Vec<f64>>,
    /// Step sides for the Jacobian check.
    pub sides: Vec<Side>,
    pub params: Params,
    pub n_samples: usize,
    pub thresholds: Thresholds,
    pub out_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::EvecStats,
            ensemble: EnsembleSpec::new(Family::GinibreComplex, 0, 0),
            n_list: vec![128],
            t_rule: TRule::Zero,
            targets: vec![Target { z: cplx(0.0, 0.0), side: Side::Right }],
            observables: vec![vec![1.0]],
            sides: vec![Side::Right],
            params: Params {
                epsilon: 0.05,
                kappa: locallaw::KAPPA,
                delta_v: 0.1,
                deltas: vec![0.05, 0.1, 0.2],
                eta_grid: EtaGrid { lo_exponent: -1.0 / 3.0, hi: 1.0, points: 12 },
                q: -1.0,
                s_grid: vec![-0.25, -0.5, -1.0, -2.0],
                fd_h: 1e-4,
                a2_etas: [0.1, 0.1],
                dse_points: 201,
            },
            n_samples: 500,
            thresholds: Thresholds::default(),
            out_dir: PathBuf::from("out"),
            master_seed: 20240901,
        }
    }
}

impl ExperimentConfig {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        Self { kind, ..Self::default() }
    }

    /// Ensemble for dimension `n`, with the deformation time of `t_rule`.
    pub fn ensemble_at(&self, n: usize) -> EnsembleSpec {
        let mut e = self.ensemble.clone();
        e.dim = n;
        e.master_seed = self.master_seed;
        e.t = self.t_rule.at(n);
        e
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != ExperimentKind::DseTable && self.n_list.is_empty() {
            return Err(Error::InvalidArgument("n_list is empty".into()));
        }
        if self.n_list.contains(&0) {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.thresholds.discard_cap) {
            return Err(Error::InvalidArgument("discard cap must lie in [0, 1)".into()));
        }
        if self.params.s_grid.iter().any(|&s| s > 0.0) {
            return Err(Error::InvalidArgument("MGF arguments must be ≤ 0".into()));
        }
        if self.observables.iter().any(|w| w.is_empty()) {
            return Err(Error::InvalidArgument("empty observable".into()));
        }
        Ok(())
    }
}

/// Everything in a run that must be reproducible bit for bit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub kind: String,
    pub n_samples: usize,
    pub used: usize,
    pub discarded: usize,
    pub discard_reasons: BTreeMap<String, usize>,
    pub samples: Vec<SampleSet>,
    pub tests: Vec<TestResult>,
    pub scaling: Vec<ScalingReport>,
    pub details: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub code_version: String,
    pub wall_clock_s: f64,
    pub aggregate: Aggregate,
}

impl RunRecord {
    /// The deterministic part of the record as pretty JSON.
    pub fn aggregate_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.aggregate)?)
    }
}

/// Outcome of a per-sample sweep: index-ordered successes and discard
/// accounting.
struct Sweep<R> {
    results: Vec<(u64, R)>,
    discarded: usize,
    reasons: BTreeMap<String, usize>,
}

fn reason(e: &Error) -> String {
    match e {
        Error::SeparationViolated(_) => "SeparationViolated",
        Error::DefectivePair(_) => "DefectivePair",
        Error::IllConditioned(_) => "IllConditioned",
        _ => "other",
    }
    .to_string()
}

fn sweep<R: Send>(n_samples: usize, cap: f64, f: impl Fn(u64) -> Result<R> + Sync) -> Result<Sweep<R>> {
    let raw: Vec<Result<R>> = (0..n_samples as u64).into_par_iter().map(&f).collect();
    let mut out = Sweep { results: Vec::with_capacity(n_samples), discarded: 0, reasons: BTreeMap::new() };
    for (i, r) in raw.into_iter().enumerate() {
        match r {
            Ok(v) => out.results.push((i as u64, v)),
            Err(e) if e.is_discardable() => {
                out.discarded += 1;
                *out.reasons.entry(reason(&e)).or_default() += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if out.discarded as f64 > cap * n_samples as f64 {
        return Err(Error::DiscardCapExceeded { discarded: out.discarded, total: n_samples });
    }
    Ok(out)
}

struct Acc {
    agg: Aggregate,
}

impl Acc {
    fn absorb<R>(&mut self, s: &Sweep<R>) {
        self.agg.n_samples += s.results.len() + s.discarded;
        self.agg.used += s.results.len();
        self.agg.discarded += s.discarded;
        for (k, v) in &s.reasons {
            *self.agg.discard_reasons.entry(k.clone()).or_default() += v;
        }
    }

    fn detail(&mut self, key: String, v: impl Serialize) -> Result<()> {
        self.agg.details.insert(key, serde_json::to_value(v)?);
        Ok(())
    }
}

fn fraction_test(name: String, passed: usize, total: usize, threshold: f64) -> TestResult {
    let frac = if total == 0 { 0.0 } else { passed as f64 / total as f64 };
    TestResult {
        name,
        statistic: frac,
        threshold,
        pass: total > 0 && frac >= threshold,
        n: total,
        standard_error: None,
        p_value: None,
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(v) / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn zlabel(z: C<f64>) -> String {
    format!("{}{:+}i", z.re, z.im)
}

fn first_target(cfg: &ExperimentConfig) -> Result<Target> {
    cfg.targets.first().copied().ok_or_else(|| Error::InvalidArgument("no target".into()))
}

fn observable(n: usize, w: &[f64]) -> Result<ProjectionObservable<f64>> {
    ProjectionObservable::standard(n, w)
}

fn law_for(weights: &[f64]) -> Result<LimitLaw> {
    LimitLaw::hypoexponential(weights)
}

/// Runs the configured experiment on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let mut acc = Acc { agg: Aggregate { kind: cfg.kind.name().into(), ..Aggregate::default() } };
    if cfg.n_samples == 0 && cfg.kind != ExperimentKind::DseTable {
        acc.agg.warnings.push("n_samples = 0: nothing to run".into());
        acc.agg.pass = true;
    } else {
        for &n in &cfg.n_list {
            run_for_n(cfg, n, &mut acc)?;
        }
        if cfg.kind == ExperimentKind::DseTable {
            dse_table(cfg, &mut acc)?;
        }
        let a = &acc.agg;
        acc.agg.pass = a.tests.iter().all(|t| t.pass) && a.scaling.iter().all(|s| s.pass);
    }
    Ok(RunRecord {
        config_digest: cfg.digest(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        aggregate: acc.agg,
    })
}

/// [`run_experiment`] on a dedicated pool with `threads` workers.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<RunRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

fn run_for_n(cfg: &ExperimentConfig, n: usize, acc: &mut Acc) -> Result<()> {
    let ens = cfg.ensemble_at(n);
    let cap = cfg.thresholds.discard_cap;
    let th = &cfg.thresholds;
    let p = &cfg.params;
    let ns = cfg.n_samples;
    let tag = format!("N={n}");
    match cfg.kind {
        ExperimentKind::Sample => {
            let s = sweep(ns, cap, |i| {
                let m = crate::ensemble::sample_matrix::<f64>(&ens, i)?;
                Ok((m.frobenius_norm().powi(2) / n as f64, matrix_digest(&m)))
            })?;
            acc.absorb(&s);
            let vals = s.results.iter().map(|(_, r)| r.0).collect();
            acc.agg.samples.push(SampleSet::new(format!("{tag} mean |a_ij|^2 N"), vals)?.with_meta("N", n));
            let digests: Vec<&String> = s.results.iter().map(|(_, r)| &r.1).collect();
            acc.detail(format!("{tag} digests"), digests)?;
        }
        ExperimentKind::Spectrum => {
            let s = sweep(ns, cap, |i| {
                let m = crate::ensemble::sample_matrix::<f64>(&ens, i)?;
                let set = eig_pairs(&m)?;
                Ok(set.triples.iter().map(|t| (t.lambda.re, t.lambda.im, t.self_overlap())).collect::<Vec<_>>())
            })?;
            acc.absorb(&s);
            let mut ev = SampleSet::new(format!("{tag} eigenvalues"), vec![])?.with_meta("N", n);
            ev.pairs = s.results.iter().flat_map(|(_, r)| r.iter().map(|x| (x.0, x.1))).collect();
            let ov = s.results.iter().flat_map(|(_, r)| r.iter().map(|x| x.2 / n as f64)).collect();
            acc.agg.samples.push(ev);
            acc.agg.samples.push(SampleSet::new(format!("{tag} O_ii / N"), ov)?.with_meta("N", n));
        }
        ExperimentKind::VerifyA1 => {
            let z = first_target(cfg)?.z;
            let grid = p.eta_grid.at(n);
            let s = sweep(ns, cap, |i| locallaw::a1_values(&sample_iid::<f64>(&ens, i), z, &grid))?;
            acc.absorb(&s);
            let vals: Vec<A1Values> = s.results.into_iter().map(|(_, r)| r).collect();
            if !vals.is_empty() {
                let m = A1Values::mean(&vals)?;
                for mut r in m.reports(th.slope_tol, th.bound_c) {
                    r.quantity = format!("{tag} {}", r.quantity);
                    acc.agg.scaling.push(r);
                }
            }
        }
        ExperimentKind::VerifyA2 => {
            if cfg.targets.len() < 2 {
                return Err(Error::InvalidArgument("verify-a2 needs two targets".into()));
            }
            let (z1, z2) = (cfg.targets[0].z, cfg.targets[1].z);
            let [e1, e2] = p.a2_etas;
            let s = sweep(ns, cap, |i| locallaw::check_a2(&sample_iid::<f64>(&ens, i), z1, z2, e1, e2))?;
            acc.absorb(&s);
            let cs: Vec<f64> = s.results.iter().map(|(_, r)| r.c).collect();
            let cmin = cs.iter().copied().fold(f64::INFINITY, f64::min);
            acc.agg.tests.push(TestResult {
                name: format!("{tag} smallest A2 constant"),
                statistic: cmin,
                threshold: th.a2_c,
                pass: cmin >= th.a2_c,
                n: cs.len(),
                standard_error: None,
                p_value: None,
            });
            let reps: Vec<_> = s.results.into_iter().map(|(_, r)| r).collect();
            acc.detail(format!("{tag} A2"), reps)?;
        }
        ExperimentKind::VerifyA3 => {
            let z = first_target(cfg)?.z;
            let grid = p.eta_grid.at(n);
            let vecs = locallaw::a3_vectors::<f64>(n);
            let s = sweep(ns, cap, |i| locallaw::check_a3_isotropic(&sample_iid::<f64>(&ens, i), z, &grid, &vecs))?;
            acc.absorb(&s);
            for k in 0..2 {
                let per_eta: Vec<f64> = (0..grid.len())
                    .map(|g| s.results.iter().map(|(_, r)| r[k].values[g]).fold(0.0, f64::max))
                    .collect();
                let name = if k == 0 { "isotropic H (max over samples)" } else { "isotropic Ht (max over samples)" };
                if !s.results.is_empty() {
                    acc.agg.scaling.push(ScalingReport::bound_check(&format!("{tag} {name}"), &grid, &per_eta, th.bound_c));
                }
            }
        }
        ExperimentKind::Rigidity => {
            let z = first_target(cfg)?.z;
            let prof = dse::quantiles(z, n)?;
            let s = sweep(ns, cap, |i| {
                let spec = sym_spectrum(&sample_iid::<f64>(&ens, i), z)?;
                locallaw::rigidity_deloc(&spec, &prof, p.kappa)
            })?;
            acc.absorb(&s);
            let total = s.results.len();
            let rig = s.results.iter().filter(|(_, r)| r.rigidity_pass).count();
            let del = s.results.iter().filter(|(_, r)| r.delocalization_pass).count();
            acc.agg.tests.push(fraction_test(format!("{tag} rigidity ≤ log^2 N"), rig, total, th.sample_fraction));
            acc.agg.tests.push(fraction_test(format!("{tag} delocalization ≤ log N"), del, total, th.sample_fraction));
            let mut set = SampleSet::new(format!("{tag} rigidity, delocalization"), vec![])?.with_meta("N", n);
            set.pairs = s.results.iter().map(|(_, r)| (r.rigidity, r.delocalization)).collect();
            acc.agg.samples.push(set);
        }
        ExperimentKind::Eth => {
            let z = first_target(cfg)?.z;
            let y = locallaw::f12_observable::<f64>(n);
            let s = sweep(ns, cap, |i| locallaw::eth_check(&sym_spectrum(&sample_iid::<f64>(&ens, i), z)?, &y, p.kappa))?;
            acc.absorb(&s);
            let ok = s.results.iter().filter(|(_, r)| r.pass).count();
            acc.agg.tests.push(fraction_test(format!("{tag} ETH within log N"), ok, s.results.len(), th.sample_fraction));
            let mut set = SampleSet::new(format!("{tag} ETH off-diagonal, diagonal"), vec![])?.with_meta("N", n);
            set.pairs = s.results.iter().map(|(_, r)| (r.off_diagonal, r.diagonal)).collect();
            acc.agg.samples.push(set);
        }
        ExperimentKind::LevelRepulsion => {
            let z = first_target(cfg)?.z;
            let s = sweep(ns, cap, |i| locallaw::second_singular_value(&ens, z, i))?;
            acc.absorb(&s);
            let xi2: Vec<f64> = s.results.iter().map(|(_, r)| *r).collect();
            let rep = locallaw::level_repulsion_report(n, &xi2, &p.deltas)?;
            for (k, d) in rep.deltas.iter().enumerate() {
                acc.agg.tests.push(TestResult {
                    name: format!("{tag} P(xi_2 ≤ N^(-1-{d}))"),
                    statistic: rep.frequencies[k],
                    threshold: rep.bounds[k] + 3.0 * rep.standard_errors[k],
                    pass: rep.frequencies[k] <= rep.bounds[k] + 3.0 * rep.standard_errors[k],
                    n: rep.n_samples,
                    standard_error: Some(rep.standard_errors[k]),
                    p_value: None,
                });
            }
            acc.agg.tests.push(TestResult {
                name: format!("{tag} frequency monotone in delta"),
                statistic: if rep.monotone { 1.0 } else { 0.0 },
                threshold: 1.0,
                pass: rep.monotone,
                n: rep.n_samples,
                standard_error: None,
                p_value: None,
            });
            acc.agg.samples.push(SampleSet::new(format!("{tag} xi_2"), xi2)?.with_meta("N", n));
            acc.detail(format!("{tag} level repulsion"), rep)?;
        }
        ExperimentKind::JacobianCheck => {
            let s = sweep(ns, cap, |i| {
                let mut rng = derive_stream(cfg.master_seed, i);
                let chain = random_chain(n, &cfg.sides, &mut rng)?;
                jacobian_fd_check(&chain, p.fd_h)
            })?;
            acc.absorb(&s);
            let errs: Vec<f64> = s.results.iter().map(|(_, r)| r.rel_error).collect();
            let worst = errs.iter().copied().fold(0.0, f64::max);
            let sides: Vec<&str> = cfg.sides.iter().map(|s| if *s == Side::Right { "R" } else { "L" }).collect();
            let label = format!("{tag} sides={}", sides.join(""));
            acc.agg.tests.push(TestResult {
                name: format!("{label} max relative Jacobian error"),
                statistic: worst,
                threshold: th.jacobian_rel,
                pass: worst <= th.jacobian_rel,
                n: errs.len(),
                standard_error: None,
                p_value: None,
            });
            acc.agg.samples.push(SampleSet::new(format!("{label} relative error"), errs)?.with_meta("N", n));
            if cfg.sides.len() >= 2 {
                // coinciding eigenvalues: the Vandermonde factor vanishes
                let mut rng = derive_stream(cfg.master_seed, u64::MAX);
                let mut chain = random_chain(n, &cfg.sides, &mut rng)?;
                chain.steps[1].lambda = chain.steps[0].lambda;
                let j = jacobian_fd_check(&chain, p.fd_h)?;
                let dev = (j.numeric - j.formula).abs();
                acc.agg.tests.push(TestResult {
                    name: format!("{label} degenerate |det J| - formula"),
                    statistic: dev,
                    threshold: th.jacobian_degenerate_abs,
                    pass: dev <= th.jacobian_degenerate_abs,
                    n: 1,
                    standard_error: None,
                    p_value: None,
                });
            }
        }
        ExperimentKind::KqRatio => {
            let tgt = first_target(cfg)?;
            let obs = observable(n, &cfg.observables[0])?;
            let t = ens.t;
            let s = sweep(ns, cap, |i| {
                let (a, m) = sample_pair::<f64>(&ens, i)?;
                let lambda = nearest_eigenvalue(&m, tgt.z)?;
                kq_ratio_check(&a, lambda, t, p.q, &obs)
            })?;
            acc.absorb(&s);
            let gaps: Vec<f64> = s.results.iter().map(|(_, r)| r.gap.abs()).collect();
            let med = median(&gaps);
            acc.agg.tests.push(TestResult {
                name: format!("{tag} median |log K_q - log K_0 - log det|"),
                statistic: med,
                threshold: th.kq_gap,
                pass: med <= th.kq_gap,
                n: gaps.len(),
                standard_error: None,
                p_value: None,
            });
            acc.agg.samples.push(SampleSet::new(format!("{tag} K_q gap"), gaps)?.with_meta("N", n).with_meta("t", t));
        }
        ExperimentKind::EvecStats | ExperimentKind::Independence => {
            evec_stats(cfg, n, &ens, acc)?;
        }
        ExperimentKind::Mgf => {
            let tgt = first_target(cfg)?;
            let obs = observable(n, &cfg.observables[0])?;
            let t = ens.t;
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("mgf needs t > 0".into()));
            }
            let eps = p.epsilon;
            let s = sweep(ns, cap, |i| {
                let (a, m) = sample_pair::<f64>(&ens, i)?;
                let tr = select_targets(&m, &[tgt.z], eps)?.remove(0);
                let x = a.shift(tr.lambda);
                let eta = dse::eta_from_singular_values(&linalg::singular_values(&x)?, t)?;
                let predicted = (-log_det_projection(&x, eta, t, p.q, &obs)?).exp();
                let vec = if tgt.side == Side::Right { &tr.u } else { &tr.v };
                let empirical = (p.q * projection_stat(&obs, vec)).exp();
                Ok((empirical, predicted))
            })?;
            acc.absorb(&s);
            let emp: Vec<f64> = s.results.iter().map(|(_, r)| r.0).collect();
            let pred: Vec<f64> = s.results.iter().map(|(_, r)| r.1).collect();
            if emp.len() >= 2 {
                let r = stats::paired_mean_gap(&format!("{tag} mean e^(Nq|Tu|^2) vs det formula"), &emp, &pred, th.mean_gap_se)?;
                acc.agg.tests.push(r);
            }
            acc.detail(format!("{tag} means"), json!({ "empirical": mean(&emp), "predicted": mean(&pred), "t": t }))?;
            let mut set = SampleSet::new(format!("{tag} empirical, predicted"), vec![])?.with_meta("N", n).with_meta("t", t);
            set.pairs = emp.into_iter().zip(pred).collect();
            acc.agg.samples.push(set);
        }
        ExperimentKind::DseTable => {}
    }
    Ok(())
}

fn nearest_eigenvalue(m: &crate::matrix::CMatrix<f64>, z: C<f64>) -> Result<C<f64>> {
    linalg::eigenvalues(m)?
        .into_iter()
        .min_by(|a, b| (a - z).norm().total_cmp(&(b - z).norm()))
        .ok_or_else(|| Error::InvalidArgument("empty spectrum".into()))
}

/// Statistics `N ‖T x‖^2` for every (target, observable) pair, with KS
/// tests against the hypoexponential law, the Gaussian-squared alternative
/// for rank ≥ 2, MGF comparisons and pairwise independence checks.
fn evec_stats(cfg: &ExperimentConfig, n: usize, ens: &EnsembleSpec, acc: &mut Acc) -> Result<()> {
    let th = &cfg.thresholds;
    let p = &cfg.params;
    if cfg.targets.is_empty() || cfg.observables.is_empty() {
        return Err(Error::InvalidArgument("evec-stats needs targets and observables".into()));
    }
    let obs: Vec<ProjectionObservable<f64>> = cfg.observables.iter().map(|w| observable(n, w)).collect::<Result<_>>()?;
    let zs: Vec<C<f64>> = cfg.targets.iter().map(|t| t.z).collect();
    let s = sweep(cfg.n_samples, th.discard_cap, |i| {
        let m = crate::ensemble::sample_matrix::<f64>(ens, i)?;
        let sel = select_targets(&m, &zs, p.epsilon)?;
        Ok(sel
            .iter()
            .zip(&cfg.targets)
            .map(|(tr, tg)| {
                let x = if tg.side == Side::Right { &tr.u } else { &tr.v };
                obs.iter().map(|o| projection_stat(o, x)).collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>())
    })?;
    acc.absorb(&s);
    let tag = format!("N={n}");
    let label = |k: usize, o: usize| {
        let t = &cfg.targets[k];
        format!("{tag} z={} {} T={:?}", zlabel(t.z), if t.side == Side::Right { "right" } else { "left" }, cfg.observables[o])
    };
    let column = |k: usize, o: usize| -> Vec<f64> { s.results.iter().map(|(_, r)| r[k][o]).collect() };
    let enough = s.results.len() >= 100;
    if cfg.kind == ExperimentKind::EvecStats {
        for k in 0..cfg.targets.len() {
            for (o, w) in cfg.observables.iter().enumerate() {
                let set = SampleSet::new(label(k, o), column(k, o))?.with_meta("N", n).with_meta("weights", w);
                if enough {
                    let law = law_for(w)?;
                    let mut r = stats::ks_test(&set, &law, th.ks)?;
                    r.name = format!("{} KS vs hypoexponential", set.label);
                    acc.agg.tests.push(r);
                    let alt = LimitLaw::gaussian_squared(w)?;
                    let d = stats::ks_distance(&set.values, |x| alt.cdf(x));
                    // a rank-1 Gaussian square is not exponential either, but the
                    // discrimination only matters from rank 2 on
                    acc.detail(format!("{} KS vs gaussian-squared", set.label), d)?;
                    if w.len() >= 2 {
                        acc.agg.tests.push(TestResult {
                            name: format!("{} KS vs gaussian-squared (must exceed)", set.label),
                            statistic: d,
                            threshold: th.ks_alternative,
                            pass: d >= th.ks_alternative,
                            n: set.len(),
                            standard_error: None,
                            p_value: None,
                        });
                    }
                    let mg = stats::mgf_compare(&set, &law, &p.s_grid, th.mean_gap_se)?;
                    acc.detail(format!("{} MGF", set.label), &mg)?;
                }
                acc.agg.samples.push(set);
            }
        }
    }
    if cfg.targets.len() >= 2 {
        for k1 in 0..cfg.targets.len() {
            for k2 in k1 + 1..cfg.targets.len() {
                let mut set = SampleSet::new(format!("{} & {}", label(k1, 0), label(k2, 0)), vec![])?.with_meta("N", n);
                set.pairs = column(k1, 0).into_iter().zip(column(k2, 0)).collect();
                if set.pairs.len() >= 2 {
                    let r = stats::independence_check(&set, th.corr, th.p_value)?;
                    acc.agg.tests.push(r.pearson);
                    acc.agg.tests.push(r.chi_square);
                }
                if cfg.kind == ExperimentKind::Independence {
                    acc.agg.samples.push(set);
                }
            }
        }
    } else if cfg.kind == ExperimentKind::Independence {
        return Err(Error::InvalidArgument("independence needs two targets".into()));
    }
    Ok(())
}

/// Tabulates `ρ_z` and `m_z(E)` on `[0, E_+]` for each target `z`.
fn dse_table(cfg: &ExperimentConfig, acc: &mut Acc) -> Result<()> {
    let pts = cfg.params.dse_points.max(2);
    for t in &cfg.targets {
        let z = t.z;
        let edge = dse::support_edge(z);
        let mut set = SampleSet::new(format!("rho z={}", zlabel(z)), vec![])?;
        let mut rows = Vec::with_capacity(pts);
        for k in 0..pts {
            let e = edge * k as f64 / (pts - 1) as f64;
            let rho = dse::rho_z(z, e);
            let m = dse::solve_mz(z, cplx(e, 0.0))?;
            set.pairs.push((e, rho));
            rows.push(json!({ "E": e, "rho": rho, "m": [m.m.re, m.m.im], "residual": m.residual() }));
        }
        acc.detail(format!("dse z={}", zlabel(z)), rows)?;
        acc.agg.samples.push(set.with_meta("edge", edge));
    }
    Ok(())
}

fn file_stem(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

/// Writes `summary.json` (full record), `aggregate.json`, one CSV per sample
/// set, one `.dat` per scaling report and ECDF overlays for one-dimensional
/// sample sets that carry observable weights. Returns the written paths.
pub fn emit_report(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put("summary.json".into(), serde_json::to_vec_pretty(record)?)?;
    put("aggregate.json".into(), record.aggregate_json()?.into_bytes())?;
    for (i, set) in record.aggregate.samples.iter().enumerate() {
        let mut buf = Vec::new();
        set.write_csv(&mut buf)?;
        let stem = file_stem(&set.label);
        put(format!("samples_{i:02}_{stem}.csv"), buf)?;
        if !set.values.is_empty() {
            if let Some(w) = set.metadata.get("weights") {
                let weights: Vec<f64> = serde_json::from_value(w.clone())?;
                let law = law_for(&weights)?;
                let mut buf = Vec::new();
                writeln!(buf, "# x ecdf limit_cdf")?;
                for (x, f) in ecdf(&set.values) {
                    writeln!(buf, "{x:.12e} {f:.12e} {:.12e}", law.cdf(x))?;
                }
                put(format!("ecdf_{i:02}_{stem}.dat"), buf)?;
            }
        }
    }
    for (i, r) in record.aggregate.scaling.iter().enumerate() {
        let mut buf = Vec::new();
        writeln!(buf, "# {} slope={} target={:?}", r.quantity, r.slope, r.target)?;
        for (x, y) in r.grid.iter().zip(&r.values) {
            writeln!(buf, "{x:.12e} {y:.12e}")?;
        }
        put(format!("scaling_{i:02}_{}.dat", file_stem(&r.quantity)), buf)?;
    }
    Ok(written)
}
