//! Dominance fractions, pooled two-sample t-tests, and the Student-t CDF
//! realized through the regularized incomplete beta function.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::trainer::Mode;

/// Per-instance, per-epoch aggregates as written by a training run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochRecord {
    pub instance: u32,
    pub epoch: usize,
    pub epoch_type: Mode,
    pub bounces: u64,
    pub left_moves: u64,
    pub right_moves: u64,
    pub sessions: u32,
}

impl EpochRecord {
    pub fn dominance(&self) -> Option<f64> {
        dominance_fraction(self.left_moves, self.right_moves)
    }
}

/// Left-arm movements as a fraction of all movements; undefined (None) when
/// no arm moved at all.
pub fn dominance_fraction(left_moves: u64, right_moves: u64) -> Option<f64> {
    let total = left_moves + right_moves;
    if total == 0 {
        None
    } else {
        Some(left_moves as f64 / total as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p_two_sided: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator); zero for a single observation.
fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Pooled-variance (Student) two-sample t-test with a two-sided p-value.
/// With two samples of 10 this gives the df = 18 form.
pub fn pooled_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DataIntegrity(format!(
            "t-test needs at least two observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = a.len() + b.len() - 2;
    let (ma, mb) = (mean(a), mean(b));
    let pooled = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / df as f64;

    if pooled == 0.0 {
        if ma == mb {
            return Ok(TTestResult {
                t: 0.0,
                df,
                p_two_sided: 1.0,
            });
        }
        return Err(Error::DegenerateVariance(
            "zero pooled variance with unequal means".into(),
        ));
    }

    let t = (ma - mb) / (pooled.sqrt() * (1.0 / na + 1.0 / nb).sqrt());
    let p = 2.0 * (1.0 - student_t_cdf(t.abs(), df));
    Ok(TTestResult {
        t,
        df,
        p_two_sided: p,
    })
}

/// CDF of Student's t with `df` degrees of freedom, via the regularized
/// incomplete beta function `I_x(df/2, 1/2)` at `x = df / (df + t^2)`.
pub fn student_t_cdf(t: f64, df: usize) -> f64 {
    assert!(df >= 1, "df must be >= 1");
    let v = df as f64;
    let x = v / (v + t * t);
    let ib = betainc_reg(v / 2.0, 0.5, x);
    if t >= 0.0 {
        1.0 - 0.5 * ib
    } else {
        0.5 * ib
    }
}

/// Lanczos approximation of ln Gamma(x) for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    const G: f64 = 7.0;
    debug_assert!(x > 0.0);
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction,
/// converged to 1e-12.
fn betainc_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fastest for x below the split point;
    // otherwise use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-12;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 500;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;

        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Cross-instance summary of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub epoch_type: Mode,
    pub mean_bounces: f64,
    pub sd_bounces: f64,
    /// Mean over instances whose dominance is defined; None if no instance
    /// moved at all in this epoch.
    pub mean_dominance: Option<f64>,
    pub sd_dominance: Option<f64>,
    pub n_instances: usize,
}

/// Aggregates bounce counts and dominance fractions across instances, one
/// summary per epoch of the requested type (or all epochs when `filter` is
/// None). Instances must cover identical epoch sets.
pub fn epoch_aggregate(records: &[EpochRecord], filter: Option<Mode>) -> Result<Vec<EpochSummary>> {
    let filtered: Vec<&EpochRecord> = records
        .iter()
        .filter(|r| filter.is_none_or(|m| r.epoch_type == m))
        .collect();
    if filtered.is_empty() {
        return Err(Error::DataIntegrity(
            "no epoch records match the requested type".into(),
        ));
    }

    let mut per_instance: BTreeMap<u32, BTreeMap<usize, &EpochRecord>> = BTreeMap::new();
    for r in &filtered {
        if per_instance
            .entry(r.instance)
            .or_default()
            .insert(r.epoch, r)
            .is_some()
        {
            return Err(Error::DataIntegrity(format!(
                "duplicate epoch record: instance {} epoch {}",
                r.instance, r.epoch
            )));
        }
    }

    let reference: Vec<usize> = per_instance
        .values()
        .next()
        .expect("non-empty")
        .keys()
        .copied()
        .collect();
    for (instance, epochs) in &per_instance {
        let have: Vec<usize> = epochs.keys().copied().collect();
        if have != reference {
            return Err(Error::DataIntegrity(format!(
                "instance {instance} covers epochs {have:?}, expected {reference:?}"
            )));
        }
    }

    let mut summaries = Vec::with_capacity(reference.len());
    for &epoch in &reference {
        let rows: Vec<&EpochRecord> = per_instance.values().map(|m| m[&epoch]).collect();
        let epoch_type = rows[0].epoch_type;
        if rows.iter().any(|r| r.epoch_type != epoch_type) {
            return Err(Error::DataIntegrity(format!(
                "epoch {epoch} has inconsistent types across instances"
            )));
        }
        let bounces: Vec<f64> = rows.iter().map(|r| r.bounces as f64).collect();
        let dominances: Vec<f64> = rows.iter().filter_map(|r| r.dominance()).collect();
        summaries.push(EpochSummary {
            epoch,
            epoch_type,
            mean_bounces: mean(&bounces),
            sd_bounces: sample_variance(&bounces).sqrt(),
            mean_dominance: if dominances.is_empty() {
                None
            } else {
                Some(mean(&dominances))
            },
            sd_dominance: if dominances.is_empty() {
                None
            } else {
                Some(sample_variance(&dominances).sqrt())
            },
            n_instances: rows.len(),
        });
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominance_fraction_cases() {
        assert_eq!(dominance_fraction(10, 0), Some(1.0));
        assert_eq!(dominance_fraction(7, 7), Some(0.5));
        assert_eq!(dominance_fraction(0, 0), None);
        assert_eq!(dominance_fraction(1, 3), Some(0.25));
    }

    #[test]
    fn t_cdf_symmetry_point() {
        for df in [1, 2, 5, 18, 200] {
            assert!((student_t_cdf(0.0, df) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn t_cdf_cauchy_closed_form() {
        // df = 1 is Cauchy: CDF(t) = 1/2 + atan(t)/pi.
        for t in [-5.0_f64, -1.0, 0.5, 1.0, 3.0, 40.0] {
            let expect = 0.5 + t.atan() / std::f64::consts::PI;
            assert!(
                (student_t_cdf(t, 1) - expect).abs() < 1e-10,
                "df=1 t={t}: {} vs {expect}",
                student_t_cdf(t, 1)
            );
        }
        assert!((student_t_cdf(1.0, 1) - 0.75).abs() < 1e-10);
    }

    #[test]
    fn t_cdf_df2_closed_form() {
        // df = 2: CDF(t) = 1/2 + t / (2 sqrt(2 + t^2)).
        for t in [-3.0_f64, -0.5, 0.0, 1.0, 2.5, 10.0] {
            let expect = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((student_t_cdf(t, 2) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn t_cdf_reference_values() {
        // Frozen from an external statistics package.
        let cases = [
            (2.816, 18, 0.994_281_243_596_313),
            (-1.224_744_871_391_589, 4, 0.143_932_067_363_345_4),
            (2.5, 30, 0.990_942_175_465_966_6),
            (-3.0, 7, 0.009_971_063_065_996_261),
            (0.5, 200, 0.691_187_623_841_769_6),
            (40.0, 1, 0.992_043_910_087_974_2),
        ];
        for (t, df, expect) in cases {
            let got = student_t_cdf(t, df);
            assert!((got - expect).abs() < 1e-8, "cdf({t}, {df}) = {got}, want {expect}");
        }
    }

    #[test]
    fn t_cdf_paper_scale_p_value() {
        let p = 2.0 * (1.0 - student_t_cdf(2.816, 18));
        assert!((p - 0.011_437_512_807_374).abs() < 1e-8);
        assert!(p > 0.010 && p < 0.013);
    }

    #[test]
    fn t_cdf_is_monotone_and_symmetric() {
        for df in [1, 3, 18, 60, 200] {
            let mut prev = 0.0;
            let mut t = -40.0;
            while t <= 40.0 {
                let c = student_t_cdf(t, df);
                assert!(c >= prev, "cdf not monotone at t={t} df={df}");
                assert!(
                    (student_t_cdf(t, df) + student_t_cdf(-t, df) - 1.0).abs() < 1e-12,
                    "symmetry broken at t={t} df={df}"
                );
                prev = c;
                t += 0.5;
            }
        }
    }

    #[test]
    fn pooled_t_test_identical_samples() {
        let a = [3.0, 4.0, 5.0];
        let r = pooled_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.df, 4);
    }

    #[test]
    fn pooled_t_test_reference_example() {
        let r = pooled_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.t - (-1.224_744_871_391_589)).abs() < 1e-12, "t = {}", r.t);
        assert_eq!(r.df, 4);
        assert!((r.p_two_sided - 0.287_864_134_726_690_8).abs() < 1e-8, "p = {}", r.p_two_sided);
    }

    #[test]
    fn pooled_t_test_df_from_sample_sizes() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| (i * 2) as f64).collect();
        let r = pooled_t_test(&a, &b).unwrap();
        assert_eq!(r.df, 18);
    }

    #[test]
    fn pooled_t_test_is_antisymmetric() {
        let a = [1.0, 2.5, 3.0, 4.5];
        let b = [2.0, 2.0, 5.0];
        let ab = pooled_t_test(&a, &b).unwrap();
        let ba = pooled_t_test(&b, &a).unwrap();
        assert!((ab.t + ba.t).abs() < 1e-14);
        assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-14);
    }

    #[test]
    fn pooled_t_test_is_scale_invariant() {
        let a = [1.0, 2.0, 4.0, 8.0];
        let b = [3.0, 5.0, 6.0];
        let base = pooled_t_test(&a, &b).unwrap();
        let ka: Vec<f64> = a.iter().map(|x| x * 137.5).collect();
        let kb: Vec<f64> = b.iter().map(|x| x * 137.5).collect();
        let scaled = pooled_t_test(&ka, &kb).unwrap();
        assert!((base.t - scaled.t).abs() < 1e-12);
        assert!((base.p_two_sided - scaled.p_two_sided).abs() < 1e-12);
    }

    #[test]
    fn pooled_t_test_degenerate_variance() {
        let err = pooled_t_test(&[1.0, 1.0], &[2.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance(_)));
    }

    #[test]
    fn pooled_t_test_needs_two_observations() {
        assert!(matches!(
            pooled_t_test(&[1.0], &[2.0, 3.0]),
            Err(Error::DataIntegrity(_))
        ));
    }

    fn record(instance: u32, epoch: usize, bounces: u64, left: u64, right: u64) -> EpochRecord {
        EpochRecord {
            instance,
            epoch,
            epoch_type: Mode::Greedy,
            bounces,
            left_moves: left,
            right_moves: right,
            sessions: 100,
        }
    }

    #[test]
    fn aggregate_single_instance() {
        let records = vec![record(0, 1, 20, 10, 30)];
        let s = epoch_aggregate(&records, Some(Mode::Greedy)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean_bounces, 20.0);
        assert_eq!(s[0].sd_bounces, 0.0);
        assert_eq!(s[0].mean_dominance, Some(0.25));
        assert_eq!(s[0].n_instances, 1);
    }

    #[test]
    fn aggregate_two_instances_mean_and_sd() {
        let records = vec![record(0, 1, 20, 5, 5), record(1, 1, 30, 9, 1)];
        let s = epoch_aggregate(&records, Some(Mode::Greedy)).unwrap();
        assert_eq!(s[0].mean_bounces, 25.0);
        assert!((s[0].sd_bounces - 7.071_067_811_865_476).abs() < 1e-12);
        assert_eq!(s[0].mean_dominance, Some(0.7));
    }

    #[test]
    fn aggregate_is_order_invariant() {
        let a = vec![record(0, 1, 20, 5, 5), record(1, 1, 30, 9, 1), record(0, 3, 7, 0, 2), record(1, 3, 9, 2, 0)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(
            epoch_aggregate(&a, Some(Mode::Greedy)).unwrap(),
            epoch_aggregate(&b, Some(Mode::Greedy)).unwrap()
        );
    }

    #[test]
    fn aggregate_excludes_absent_dominance() {
        let records = vec![record(0, 1, 20, 0, 0), record(1, 1, 30, 6, 2)];
        let s = epoch_aggregate(&records, Some(Mode::Greedy)).unwrap();
        assert_eq!(s[0].mean_dominance, Some(0.75));
        assert_eq!(s[0].sd_dominance, Some(0.0));

        let none = vec![record(0, 1, 20, 0, 0), record(1, 1, 30, 0, 0)];
        let s = epoch_aggregate(&none, Some(Mode::Greedy)).unwrap();
        assert_eq!(s[0].mean_dominance, None);
    }

    #[test]
    fn aggregate_rejects_mismatched_epoch_sets() {
        let records = vec![record(0, 1, 20, 1, 1), record(1, 2, 30, 1, 1)];
        assert!(matches!(
            epoch_aggregate(&records, Some(Mode::Greedy)),
            Err(Error::DataIntegrity(_))
        ));
    }
}
