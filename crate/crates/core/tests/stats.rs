use nhevec::dse::adaptive_simpson;
use nhevec::ensemble::derive_stream;
use nhevec::scalar::cplx;
use nhevec::stats::*;
use proptest::prelude::*;
use rand::RngExt;
use rand_distr::Exp1;

fn draws(law: &LimitLaw, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = derive_stream(seed, 0);
    (0..n).map(|_| law.sample(&mut rng)).collect()
}

#[test]
fn rank_one_cdf_and_mgf() {
    let law = LimitLaw::exponential(1.0).unwrap();
    assert_eq!(law.cdf(0.0), 0.0);
    assert!((law.cdf(1.3) - (1.0 - (-1.3f64).exp())).abs() < 1e-15);
    assert_eq!(law.mgf(0.5), 2.0);
    let h = LimitLaw::hypoexponential(&[1.0]).unwrap();
    assert!((h.cdf(1.3) - (1.0 - (-1.3f64).exp())).abs() < 1e-13);
}

#[test]
fn hypoexponential_cdf_matches_closed_form_for_distinct_weights() {
    let q = [1.0, 0.5, 0.2];
    let law = LimitLaw::hypoexponential(&q).unwrap();
    for &x in &[0.01, 0.3, 1.0, 2.5, 8.0] {
        let mut s = 0.0;
        for (k, &qk) in q.iter().enumerate() {
            let c: f64 = q.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &qj)| qk / (qk - qj)).product();
            s += c * (-x / qk).exp();
        }
        assert!((law.cdf(x) - (1.0 - s)).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn hypoexponential_with_repeated_weights_is_gamma() {
    // q = {1, 1}: Gamma(2, 1), F = 1 - (1 + x) e^{-x}
    let law = LimitLaw::hypoexponential(&[1.0, 1.0]).unwrap();
    for &x in &[0.1, 1.0, 4.0] {
        let f = 1.0 - (1.0 + x) * (-x as f64).exp();
        assert!((law.cdf(x) - f).abs() < 1e-12);
    }
}

#[test]
fn rank_two_cdf_matches_monte_carlo() {
    let law = LimitLaw::hypoexponential(&[1.0, 2.0]).unwrap();
    let mut rng = derive_stream(2024, 0);
    let n = 10_000_000usize;
    let mut hits = 0usize;
    for _ in 0..n {
        let e1: f64 = rng.sample(Exp1);
        let e2: f64 = rng.sample(Exp1);
        if e1 + 2.0 * e2 <= 1.0 {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((law.cdf(1.0) - p).abs() <= 3.0 * se, "{} vs {p} ± {se}", law.cdf(1.0));
}

#[test]
fn cdf_is_monotone_from_zero_to_one() {
    for law in [
        LimitLaw::hypoexponential(&[1.0, 0.5]).unwrap(),
        LimitLaw::hypoexponential(&[0.3, 0.3, 0.30001, 2.0]).unwrap(),
        LimitLaw::gaussian_squared(&[1.0, 0.5]).unwrap(),
    ] {
        let mut prev = 0.0;
        assert_eq!(law.cdf(0.0), 0.0);
        for i in 1..=400 {
            let f = law.cdf(i as f64 * 0.1);
            assert!(f >= prev - 1e-12 && f <= 1.0, "{law:?} {i} {f} {prev}");
            prev = f;
        }
        assert!(law.cdf(200.0) > 1.0 - 1e-9);
    }
}

#[test]
fn mgf_and_cdf_agree_by_integration() {
    // E e^{sX} = -s ∫ e^{sx} F(x) dx for s < 0
    let law = LimitLaw::hypoexponential(&[1.0, 0.5]).unwrap();
    let s = -1.0;
    let f = |x: f64| -s * (s * x).exp() * law.cdf(x);
    let integral = adaptive_simpson(&f, 0.0, 60.0, 1e-10, 40).unwrap();
    assert!((integral - law.mgf(s)).abs() < 1e-6);
}

#[test]
fn ks_null_calibration_and_gross_misfit() {
    let law = LimitLaw::exponential(1.0).unwrap();
    let set = SampleSet::new("null", draws(&law, 10_000, 1)).unwrap();
    let r = ks_test(&set, &law, ks_critical_1pct(10_000)).unwrap();
    assert!(r.pass, "{r:?}");
    let constant = SampleSet::new("const", vec![5.0; 200]).unwrap();
    let r = ks_test(&constant, &law, ks_critical_1pct(200)).unwrap();
    assert!(r.statistic > 0.99 && !r.pass);
    assert!(ks_test(&SampleSet::new("few", vec![1.0; 10]).unwrap(), &law, 0.1).is_err());
}

#[test]
fn ks_rejection_rate_is_calibrated() {
    let law = LimitLaw::exponential(1.0).unwrap();
    let reps = 1000;
    let rejections = (0..reps)
        .filter(|&r| {
            let set = SampleSet::new("cal", draws(&law, 200, 10_000 + r)).unwrap();
            ks_test(&set, &law, 1.0).unwrap().p_value.unwrap() < 0.01
        })
        .count();
    let rate = rejections as f64 / reps as f64;
    assert!((rate - 0.01).abs() <= 0.005, "rejection rate {rate}");
}

#[test]
fn mgf_compare_trivial_and_self_consistent() {
    let law = LimitLaw::exponential(1.0).unwrap();
    let set = SampleSet::new("self", draws(&law, 20_000, 3)).unwrap();
    let c = mgf_compare(&set, &law, &[0.0, -1.0], 3.0).unwrap();
    assert_eq!(c.points[0].gap, 0.0);
    assert_eq!(c.points[0].empirical, 1.0);
    assert!(c.points[1].gap <= 3.0 && c.result.pass, "{c:?}");
    assert!(mgf_compare(&set, &law, &[0.5], 3.0).is_err());
}

#[test]
fn independence_null_and_duplicates() {
    let law = LimitLaw::exponential(1.0).unwrap();
    let x = draws(&law, 4000, 5);
    let y = draws(&law, 4000, 6);
    let mut set = SampleSet::new("ind", vec![]).unwrap();
    set.pairs = x.iter().copied().zip(y.iter().copied()).collect();
    let n = set.pairs.len() as f64;
    let r = independence_check(&set, 3.0 / n.sqrt(), 0.01).unwrap();
    assert!(r.pass, "{r:?}");
    let mut dup = SampleSet::new("dup", vec![]).unwrap();
    dup.pairs = x.iter().map(|&v| (v, v)).collect();
    let r = independence_check(&dup, 0.05, 0.01).unwrap();
    assert!((r.pearson.statistic - 1.0).abs() < 1e-12 && !r.pass);
}

#[test]
fn ginue_correlation_small_cases() {
    let pi = std::f64::consts::PI;
    let w1 = cplx(0.3, -0.2);
    assert!((ginue_correlation(&[w1]).unwrap() - 1.0 / pi).abs() < 1e-15);
    let w2 = cplx(-0.5, 0.7);
    let expect = (1.0 - (-(w1 - w2).norm_sqr()).exp()) / (pi * pi);
    assert!((ginue_correlation(&[w1, w2]).unwrap() - expect).abs() < 1e-14);
    assert!(ginue_correlation(&[w1, w1]).unwrap().abs() < 1e-15);
    assert!(ginue_correlation(&vec![w1; 7]).is_err());
}

#[test]
fn ecdf_has_n_plus_one_monotone_steps() {
    let v = vec![3.0, 1.0, 2.0, 2.5];
    let e = ecdf(&v);
    assert_eq!(e.len(), 5);
    assert!(e.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    assert_eq!(e.last().unwrap().1, 1.0);
}

#[test]
fn sample_set_csv_has_metadata_header() {
    let s = SampleSet::new("x", vec![1.0, 2.0]).unwrap().with_meta("N", 256);
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let meta: serde_json::Value = serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
    assert_eq!(meta["N"], 256);
    assert_eq!(meta["count"], 2);
    assert_eq!(lines.count(), 3);
}

proptest! {
    #[test]
    fn ginue_correlation_is_permutation_symmetric(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 2..5),
        rot in 0usize..4,
    ) {
        let w: Vec<_> = pts.iter().map(|&(a, b)| cplx(a, b)).collect();
        let mut p = w.clone();
        p.rotate_left(rot % w.len());
        p.swap(0, w.len() - 1);
        let a = ginue_correlation(&w).unwrap();
        let b = ginue_correlation(&p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15);
        prop_assert!(a >= -1e-15);
    }

    #[test]
    fn hypoexponential_cdf_is_bounded_and_monotone(
        q in prop::collection::vec(0.05f64..3.0, 1..5),
        x in 0.0f64..20.0,
        dx in 0.0f64..2.0,
    ) {
        let law = LimitLaw::hypoexponential(&q).unwrap();
        let (a, b) = (law.cdf(x), law.cdf(x + dx));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a - 1e-12);
    }
}
