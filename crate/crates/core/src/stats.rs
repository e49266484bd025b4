//! Empirical distributions, the candidate limit laws for `N ‖T u‖^2`, and
//! the goodness-of-fit / independence tests run against them.

use std::collections::BTreeMap;
use std::io::Write;

use rand::RngExt;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::changevar::log_exp_divided_difference;
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::CMatrix;
use crate::scalar::{pairwise_sum, C};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub label: String,
    pub values: Vec<f64>,
    /// Joint observations for independence tests.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<(f64, f64)>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample values must be finite".into()));
        }
        Ok(Self { label: label.into(), values, ..Default::default() })
    }

    pub fn len(&self) -> usize {
        self.values.len().max(self.pairs.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_meta(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metadata.insert(key.to_string(), v);
        self
    }

    /// CSV with a `# {metadata}` header line, then one value (or pair) per row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut meta = self.metadata.clone();
        meta.insert("label".into(), self.label.clone().into());
        meta.insert("count".into(), self.len().into());
        writeln!(w, "# {}", serde_json::to_string(&meta)?)?;
        if self.pairs.is_empty() {
            writeln!(w, "value")?;
            for v in &self.values {
                writeln!(w, "{v:e}")?;
            }
        } else {
            writeln!(w, "x,y")?;
            for (x, y) in &self.pairs {
                writeln!(w, "{x:e},{y:e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    /// `Σ_k q_k E_k` with independent standard exponentials.
    Hypoexponential,
    Exponential,
    /// `Z^2` with `Z ~ N(0, Σ_k q_k)` real.
    GaussianSquared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitLaw {
    pub weights: Vec<f64>,
    pub kind: LawKind,
}

impl LimitLaw {
    pub fn hypoexponential(weights: &[f64]) -> Result<Self> {
        Self::checked(weights, LawKind::Hypoexponential)
    }

    pub fn exponential(q: f64) -> Result<Self> {
        Self::checked(&[q], LawKind::Exponential)
    }

    /// The real-Gaussian-squared candidate with variance `Σ_k q_k`.
    pub fn gaussian_squared(weights: &[f64]) -> Result<Self> {
        Self::checked(weights, LawKind::GaussianSquared)
    }

    fn checked(weights: &[f64], kind: LawKind) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
            return Err(Error::InvalidArgument("law weights must be positive and finite".into()));
        }
        Ok(Self { weights: weights.to_vec(), kind })
    }

    pub fn variance_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `E e^{sX}`; infinite past the abscissa of convergence.
    pub fn mgf(&self, s: f64) -> f64 {
        match self.kind {
            LawKind::Hypoexponential | LawKind::Exponential => self
                .weights
                .iter()
                .map(|&q| {
                    let d = 1.0 - s * q;
                    if d > 0.0 {
                        d.recip()
                    } else {
                        f64::INFINITY
                    }
                })
                .product(),
            LawKind::GaussianSquared => {
                let d = 1.0 - 2.0 * s * self.variance_sum();
                if d > 0.0 {
                    d.powf(-0.5)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        limit_law_cdf(self, x)
    }

    pub fn sample(&self, rng: &mut crate::ensemble::Stream) -> f64 {
        match self.kind {
            LawKind::Hypoexponential | LawKind::Exponential => {
                self.weights.iter().map(|&q| q * rng.sample::<f64, _>(Exp1)).sum()
            }
            LawKind::GaussianSquared => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                self.variance_sum() * z * z
            }
        }
    }
}

/// CDF of the law. The hypoexponential case is
/// `F(x) = ∏_k (x/q_k) · exp[0, -x/q_1, …, -x/q_ℓ]` (a divided difference
/// of `exp`), which stays exact for clustered or repeated weights.
pub fn limit_law_cdf(law: &LimitLaw, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    match law.kind {
        LawKind::Exponential => -(-x / law.weights[0]).exp_m1(),
        LawKind::Hypoexponential => {
            let mut nodes = vec![0.0];
            nodes.extend(law.weights.iter().map(|&q| -x / q));
            let log_prod: f64 = law.weights.iter().map(|&q| (x / q).ln()).sum();
            (log_prod + log_exp_divided_difference(&nodes)).exp().clamp(0.0, 1.0)
        }
        LawKind::GaussianSquared => statrs::function::erf::erf((x / (2.0 * law.variance_sum())).sqrt()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub n: usize,
    pub standard_error: Option<f64>,
    pub p_value: Option<f64>,
}

/// Asymptotic 1% critical value of the one-sample KS distance.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k^2λ^2}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// `sup_x |F_n(x) - F(x)|`.
pub fn ks_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Two-sided KS test against `law`; passes when the distance is at most
/// `threshold`. The p-value uses the Stephens finite-n correction.
pub fn ks_test(samples: &SampleSet, law: &LimitLaw, threshold: f64) -> Result<TestResult> {
    let n = samples.values.len();
    if n < 100 {
        return Err(Error::InvalidArgument(format!("KS test needs at least 100 samples, got {n}")));
    }
    let d = ks_distance(&samples.values, |x| law.cdf(x));
    let sn = (n as f64).sqrt();
    let p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok(TestResult {
        name: format!("ks[{}:{:?}]", samples.label, law.kind),
        statistic: d,
        threshold,
        pass: d <= threshold,
        n,
        standard_error: None,
        p_value: Some(p),
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if xs.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfPoint {
    pub s: f64,
    pub empirical: f64,
    pub predicted: f64,
    pub standard_error: f64,
    /// `|empirical - predicted|` in standard errors.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfComparison {
    pub points: Vec<MgfPoint>,
    pub result: TestResult,
}

fn gap_in_se(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff.abs() / se
    } else {
        f64::INFINITY
    }
}

/// Empirical `E e^{sX}` against the law's MGF on a grid of `s ≤ 0`; passes
/// when every gap is within `threshold` standard errors.
pub fn mgf_compare(samples: &SampleSet, law: &LimitLaw, s_grid: &[f64], threshold: f64) -> Result<MgfComparison> {
    if s_grid.iter().any(|&s| s > 0.0) {
        return Err(Error::InvalidArgument("MGF comparison is restricted to s ≤ 0".into()));
    }
    if samples.values.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let points: Vec<MgfPoint> = s_grid
        .iter()
        .map(|&s| {
            let e: Vec<f64> = samples.values.iter().map(|x| (s * x).exp()).collect();
            let (m, se) = mean_and_se(&e);
            let p = law.mgf(s);
            MgfPoint { s, empirical: m, predicted: p, standard_error: se, gap: gap_in_se(m - p, se) }
        })
        .collect();
    let worst = points.iter().map(|p| p.gap).fold(0.0, f64::max);
    let se = points.iter().map(|p| p.standard_error).fold(0.0, f64::max);
    Ok(MgfComparison {
        result: TestResult {
            name: format!("mgf[{}]", samples.label),
            statistic: worst,
            threshold,
            pass: worst <= threshold,
            n: samples.values.len(),
            standard_error: Some(se),
            p_value: None,
        },
        points,
    })
}

/// `|mean a - mean b|` in units of the pooled standard error
/// `sqrt(se_a^2 + se_b^2)`.
pub fn paired_mean_gap(name: &str, a: &[f64], b: &[f64], threshold: f64) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("need at least two values per side".into()));
    }
    let (ma, sa) = mean_and_se(a);
    let (mb, sb) = mean_and_se(b);
    let se = (sa * sa + sb * sb).sqrt();
    let g = gap_in_se(ma - mb, se);
    Ok(TestResult {
        name: name.to_string(),
        statistic: g,
        threshold,
        pass: g <= threshold,
        n: a.len().min(b.len()),
        standard_error: Some(se),
        p_value: None,
    })
}

pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, my) = (pairwise_sum(&xs) / n, pairwise_sum(&ys) / n);
    let sxy: Vec<f64> = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let syy: Vec<f64> = ys.iter().map(|y| (y - my) * (y - my)).collect();
    let d = (pairwise_sum(&sxx) * pairwise_sum(&syy)).sqrt();
    if d > 0.0 {
        pairwise_sum(&sxy) / d
    } else {
        0.0
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Chi-square statistic and p-value (one degree of freedom) of the 2x2
/// table obtained by splitting both coordinates at their medians.
pub fn median_split_chi_square(pairs: &[(f64, f64)]) -> (f64, f64) {
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, my) = (median(&xs), median(&ys));
    let mut table = [[0.0f64; 2]; 2];
    for (x, y) in pairs {
        table[usize::from(*x > mx)][usize::from(*y > my)] += 1.0;
    }
    let n = pairs.len() as f64;
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut chi2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            if e > 0.0 {
                chi2 += (table[i][j] - e).powi(2) / e;
            }
        }
    }
    let p = ChiSquared::new(1.0).expect("one degree of freedom").sf(chi2);
    (chi2, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub pearson: TestResult,
    pub chi_square: TestResult,
    pub pass: bool,
}

/// Passes when `|corr| ≤ corr_threshold` and the median-split chi-square
/// p-value is at least `p_threshold`.
pub fn independence_check(samples: &SampleSet, corr_threshold: f64, p_threshold: f64) -> Result<IndependenceReport> {
    let pairs = &samples.pairs;
    let n = pairs.len();
    if n < 4 {
        return Err(Error::InvalidArgument("independence check needs at least 4 pairs".into()));
    }
    let r = pearson(pairs);
    let (chi2, p) = median_split_chi_square(pairs);
    let pearson = TestResult {
        name: format!("pearson[{}]", samples.label),
        statistic: r,
        threshold: corr_threshold,
        pass: r.abs() <= corr_threshold,
        n,
        standard_error: Some((1.0 - r * r) / ((n as f64) - 1.0).sqrt()),
        p_value: None,
    };
    let chi_square = TestResult {
        name: format!("chi2[{}]", samples.label),
        statistic: chi2,
        threshold: p_threshold,
        pass: p >= p_threshold,
        n,
        standard_error: None,
        p_value: Some(p),
    };
    let pass = pearson.pass && chi_square.pass;
    Ok(IndependenceReport { pearson, chi_square, pass })
}

/// GinUE `m`-point correlation
/// `det[π^{-1} exp(-(|w_j|^2 + |w_l|^2)/2 + w_j conj(w_l))]`.
pub fn ginue_correlation(points: &[C<f64>]) -> Result<f64> {
    let m = points.len();
    if m == 0 || m > 6 {
        return Err(Error::InvalidArgument(format!("correlation defined here for 1 ≤ m ≤ 6, got {m}")));
    }
    let k = CMatrix::from_fn(m, m, |j, l| {
        let (a, b) = (points[j], points[l]);
        (C::new(-(a.norm_sqr() + b.norm_sqr()) / 2.0, 0.0) + a * b.conj()).exp() / std::f64::consts::PI
    });
    Ok(linalg::determinant(&k)?.re)
}

/// Empirical CDF as `n + 1` steps: `(x_min, 0)` then `(x_(i), i/n)`.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push((xs.first().copied().unwrap_or(0.0), 0.0));
    out.extend(xs.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n as f64)));
    out
}
