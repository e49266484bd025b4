//! Random matrix ensembles with i.i.d. entries of variance `1/N`, and the
//! Gaussian-divisible deformation `M_t = A + sqrt(t) B`.
//!
//! Every sample is a pure function of `(master_seed, sample_index)`: the
//! index selects a ChaCha stream, so parallel sweeps do not depend on the
//! order in which workers pick up indices.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CMatrix;
use crate::scalar::{Real, C};

/// Per-sample random stream.
pub type Stream = ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Complex Gaussian entries.
    GinibreComplex,
    /// Uniform on `{±1, ±i} / sqrt(N)`.
    BernoulliComplex,
    /// `e^{iθ} / sqrt(N)` with θ uniform.
    UniformPhase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub family: Family,
    pub dim: usize,
    pub master_seed: u64,
    /// Gaussian-divisible time; `0` means no deformation.
    #[serde(default)]
    pub t: f64,
    /// Multiply the deformed matrix by `(1+t)^{-1/2}`.
    #[serde(default)]
    pub normalize_1plust: bool,
}

impl EnsembleSpec {
    pub fn new(family: Family, dim: usize, master_seed: u64) -> Self {
        Self {
            family,
            dim,
            master_seed,
            t: 0.0,
            normalize_1plust: false,
        }
    }

    pub fn ginibre(dim: usize, master_seed: u64) -> Self {
        Self::new(Family::GinibreComplex, dim, master_seed)
    }

    pub fn with_t(mut self, t: f64, normalize: bool) -> Self {
        self.t = t;
        self.normalize_1plust = normalize;
        self
    }
}

/// Independent stream for `(master_seed, sample_index)`.
pub fn derive_stream(master_seed: u64, sample_index: u64) -> Stream {
    let mut rng = Stream::seed_from_u64(master_seed);
    rng.set_stream(sample_index);
    rng
}

fn entry(family: Family, scale: f64, rng: &mut Stream) -> C<f64> {
    match family {
        Family::GinibreComplex => {
            let s = scale * std::f64::consts::FRAC_1_SQRT_2;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C::new(re * s, im * s)
        }
        Family::BernoulliComplex => match rng.random_range(0u8..4) {
            0 => C::new(scale, 0.0),
            1 => C::new(-scale, 0.0),
            2 => C::new(0.0, scale),
            _ => C::new(0.0, -scale),
        },
        Family::UniformPhase => {
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            C::from_polar(scale, theta)
        }
    }
}

/// Fills an `n x n` matrix column by column from `rng`. Draws happen in f64
/// so both precisions see the same sample.
pub fn draw<T: Real>(family: Family, n: usize, rng: &mut Stream) -> CMatrix<T> {
    let scale = (n as f64).sqrt().recip();
    CMatrix::from_fn(n, n, |_, _| {
        let z = entry(family, scale, rng);
        C::new(T::lit(z.re), T::lit(z.im))
    })
}

/// The i.i.d. matrix `A` for `sample_index` (ignores `spec.t`).
pub fn sample_iid<T: Real>(spec: &EnsembleSpec, sample_index: u64) -> CMatrix<T> {
    assert!(spec.dim >= 1, "ensemble dimension must be positive");
    let mut rng = derive_stream(spec.master_seed, sample_index);
    draw(spec.family, spec.dim, &mut rng)
}

/// `A + sqrt(t) B` with `B` complex Ginibre drawn from `rng`; optionally
/// rescaled by `(1+t)^{-1/2}`.
pub fn gaussian_divisible<T: Real>(
    a: &CMatrix<T>,
    t: f64,
    normalize: bool,
    rng: &mut Stream,
) -> Result<CMatrix<T>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative time t = {t}")));
    }
    if !a.is_square() {
        return Err(Error::DimensionMismatch("gaussian_divisible needs a square A".into()));
    }
    if t == 0.0 && !normalize {
        return Ok(a.clone());
    }
    let b = draw::<T>(Family::GinibreComplex, a.rows(), rng);
    let mut m = a.axpy(C::new(T::lit(t.sqrt()), T::zero()), &b);
    if normalize {
        m = m.scale_real(T::lit((1.0 + t).sqrt().recip()));
    }
    Ok(m)
}

/// Base matrix `A` and its deformation `M_t` for one sample index. `B` is
/// drawn from the same stream right after `A`, so `A` alone is identical to
/// [`sample_iid`].
pub fn sample_pair<T: Real>(spec: &EnsembleSpec, sample_index: u64) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let mut rng = derive_stream(spec.master_seed, sample_index);
    let a = draw::<T>(spec.family, spec.dim, &mut rng);
    let m = gaussian_divisible(&a, spec.t, spec.normalize_1plust, &mut rng)?;
    Ok((a, m))
}

/// The matrix a sweep operates on: `M_t` when `t > 0`, else `A`.
pub fn sample_matrix<T: Real>(spec: &EnsembleSpec, sample_index: u64) -> Result<CMatrix<T>> {
    sample_pair(spec, sample_index).map(|(_, m)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn entry_moments(m: &CMatrix<f64>) -> (C<f64>, f64) {
        let n = m.data().len() as f64;
        let mean = m.data().iter().sum::<C<f64>>() / n;
        let var = m.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn identical_index_gives_identical_entry() {
        let spec = EnsembleSpec::ginibre(1, 99);
        let a: CMatrix<f64> = sample_iid(&spec, 5);
        let b: CMatrix<f64> = sample_iid(&spec, 5);
        assert_eq!(a, b);
        let c: CMatrix<f64> = sample_iid(&spec, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn ginibre_mean_within_clt_bound() {
        let spec = EnsembleSpec::ginibre(64, 2024);
        let mut sum = C::new(0.0, 0.0);
        let samples = 200;
        for i in 0..samples {
            let a: CMatrix<f64> = sample_iid(&spec, i);
            sum += a.data().iter().sum::<C<f64>>();
        }
        let count = (samples as f64) * 64.0 * 64.0;
        // entries are scaled by 1/sqrt(N); the bound is stated for unit variance
        let mean = sum / count * 8.0;
        let bound = 4.0 / count.sqrt();
        assert!(mean.re.abs() <= bound && mean.im.abs() <= bound, "mean {mean}");
    }

    #[test]
    fn bernoulli_second_moment() {
        let spec = EnsembleSpec::new(Family::BernoulliComplex, 32, 3);
        let mut acc = 0.0;
        let mut count = 0usize;
        let mut i = 0;
        while count < 100_000 {
            let a: CMatrix<f64> = sample_iid(&spec, i);
            acc += a.data().iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += a.data().len();
            i += 1;
        }
        let m2 = acc / count as f64;
        assert!((m2 * 32.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn family_moments_match_normalization() {
        for family in [Family::GinibreComplex, Family::BernoulliComplex, Family::UniformPhase] {
            let spec = EnsembleSpec::new(family, 48, 11);
            let mut mean = C::new(0.0, 0.0);
            let mut var = 0.0;
            let mut p8 = 0.0;
            let reps = 40;
            for i in 0..reps {
                let a: CMatrix<f64> = sample_iid(&spec, i);
                let (m, v) = entry_moments(&a);
                mean += m / reps as f64;
                var += v / reps as f64;
                p8 += a.data().iter().map(|z| z.norm().powi(8)).sum::<f64>()
                    / a.data().len() as f64
                    / reps as f64;
            }
            let n = 48.0f64;
            let count = reps as f64 * n * n;
            let se_mean = (1.0 / n / count).sqrt();
            assert!(mean.norm() < 4.0 * se_mean * 2f64.sqrt(), "{family:?} mean {mean}");
            let rel = (var * n - 1.0).abs();
            assert!(rel < 4.0 * (2.0 / count).sqrt() + 1e-12, "{family:?} var {var}");
            // complex Gaussian: E|g|^8 = 24 / N^4
            assert!(p8 * n.powi(4) < 30.0, "{family:?} eighth moment");
        }
    }

    #[test]
    fn deformation_variance() {
        let n = 32;
        let spec = EnsembleSpec::ginibre(n, 77);
        for (normalize, target) in [(false, 2.0), (true, 1.0)] {
            let mut var = 0.0;
            let reps = 100;
            for i in 0..reps {
                let (_, m) = sample_pair::<f64>(&spec.clone().with_t(1.0, normalize), i).unwrap();
                var += entry_moments(&m).1 / reps as f64;
            }
            assert!((var * n as f64 / target - 1.0).abs() < 0.03, "variance {var}");
        }
    }

    #[test]
    fn zero_time_leaves_matrix_unchanged() {
        let a: CMatrix<f64> = sample_iid(&EnsembleSpec::ginibre(5, 1), 0);
        let mut rng = derive_stream(1, 1);
        assert_eq!(gaussian_divisible(&a, 0.0, false, &mut rng).unwrap(), a);
        assert!(gaussian_divisible(&a, -0.1, false, &mut rng).is_err());
    }

    #[test]
    fn base_matrix_matches_iid_sample() {
        let spec = EnsembleSpec::ginibre(6, 5).with_t(0.3, false);
        let (a, m) = sample_pair::<f64>(&spec, 4).unwrap();
        assert_eq!(a, sample_iid(&spec, 4));
        assert_ne!(a, m);
    }

    #[test]
    fn precisions_share_draws() {
        let spec = EnsembleSpec::new(Family::UniformPhase, 4, 8);
        let a: CMatrix<f64> = sample_iid(&spec, 2);
        let b: CMatrix<f32> = sample_iid(&spec, 2);
        assert!(a.sub(&b.cast()).max_abs() < 1e-6);
    }

    #[test]
    fn streams_distinct_and_reproducible() {
        let mut a = derive_stream(7, 0);
        let mut b = derive_stream(7, 1);
        let mut c = derive_stream(7, 3);
        let mut d = derive_stream(7, 3);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
        for _ in 0..100 {
            assert_eq!(c.next_u64(), d.next_u64());
        }
    }

    #[test]
    fn streams_uncorrelated() {
        let len = 1000;
        let streams: Vec<Vec<f64>> = (0..1000)
            .map(|i| {
                let mut r = derive_stream(7, i);
                let mut v: Vec<f64> = (0..len).map(|_| r.random::<f64>()).collect();
                let m = v.iter().sum::<f64>() / len as f64;
                v.iter_mut().for_each(|x| *x -= m);
                let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= s);
                v
            })
            .collect();
        // Under independence each correlation is ~N(0, 1/len), so |corr| > 0.1
        // is a > 3σ event; count exceedances over all pairs against that rate.
        let mut exceed = 0usize;
        let mut pairs = 0usize;
        let mut sum_abs = 0.0;
        for i in 0..streams.len() {
            for j in i + 1..streams.len() {
                let c: f64 = streams[i].iter().zip(&streams[j]).map(|(x, y)| x * y).sum();
                sum_abs += c.abs();
                exceed += usize::from(c.abs() > 0.1);
                pairs += 1;
            }
        }
        let null_rate = 0.00157;
        assert!((exceed as f64) < 2.0 * null_rate * pairs as f64, "{exceed} of {pairs}");
        assert!(sum_abs / (pairs as f64) < 0.1);
    }
}
