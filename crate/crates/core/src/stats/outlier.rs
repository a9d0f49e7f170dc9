use alloc::vec::Vec;

// Shadowed by std's inherent methods whenever std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use super::t_upper_critical;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestOutcome {
    /// `|d_s − μ_d| / σ_d`; `0` or `+∞` when the reference sample has zero
    /// spread.
    pub statistic: f64,
    pub threshold: f64,
    pub is_outlier: bool,
    /// Number of values the moments were computed over.
    pub sample_size: usize,
    pub mean: f64,
    pub std_dev: f64,
}

/// Which values enter `μ_d` and `σ_d` for the Grubbs test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum GrubbsSample {
    /// Shadow distances plus the suspect distance (`n = k + 1`).
    #[default]
    WithSuspect,
    /// Shadow distances only (`n = k`).
    ShadowsOnly,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn all_equal(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", "must lie in (0, 1)"))
    }
}

/// Grubbs critical value
/// `((n−1)/√n) · √(t² / (n−2+t²))` with `t` the upper `α/n` point of
/// Student-t with `n−2` degrees of freedom.
pub fn grubbs_threshold(n: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let nf = n as f64;
    let t = t_upper_critical(alpha / nf, nf - 2.0)?;
    let t2 = t * t;
    Ok((nf - 1.0) / nf.sqrt() * (t2 / (nf - 2.0 + t2)).sqrt())
}

/// Is the suspect distance an outlier among the shadow distances?
pub fn grubbs_decide(
    shadow_distances: &[f64],
    suspect_distance: f64,
    alpha: f64,
    sample: GrubbsSample,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let k = shadow_distances.len();
    if k < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: k });
    }
    let mut values: Vec<f64> = shadow_distances.to_vec();
    if sample == GrubbsSample::WithSuspect {
        values.push(suspect_distance);
    }
    let threshold = grubbs_threshold(values.len(), alpha)?;
    Ok(decide(&values, suspect_distance, threshold))
}

/// 3σ rule over the shadow distances alone.
pub fn three_sigma_decide(shadow_distances: &[f64], suspect_distance: f64) -> Result<TestOutcome> {
    let k = shadow_distances.len();
    if k < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: k });
    }
    Ok(decide(shadow_distances, suspect_distance, 3.0))
}

fn decide(reference: &[f64], suspect: f64, threshold: f64) -> TestOutcome {
    let (mean, std_dev) = mean_and_std(reference);
    // A zero-spread reference is a point distribution: anything else is an
    // outlier.
    if all_equal(reference) || std_dev == 0.0 {
        let differs = suspect != reference[0];
        return TestOutcome {
            statistic: if differs { f64::INFINITY } else { 0.0 },
            threshold,
            is_outlier: differs,
            sample_size: reference.len(),
            mean,
            std_dev: 0.0,
        };
    }
    let statistic = (suspect - mean).abs() / std_dev;
    TestOutcome {
        statistic,
        threshold,
        is_outlier: statistic > threshold,
        sample_size: reference.len(),
        mean,
        std_dev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn suspect_at_mean_is_not_an_outlier() {
        let shadows = [1.0, 2.0, 3.0, 4.0];
        let out = grubbs_decide(&shadows, 2.5, 0.01, GrubbsSample::WithSuspect).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!(!out.is_outlier);
    }

    #[test]
    fn threshold_approaches_samuelson_bound() {
        for n in [3usize, 4, 5] {
            let bound = (n as f64 - 1.0) / (n as f64).sqrt();
            let thr = grubbs_threshold(n, 1e-12).unwrap();
            assert!((thr - bound).abs() < 1e-6, "n={n}: {thr} vs {bound}");
        }
        for n in [8usize, 16, 22] {
            let bound = (n as f64 - 1.0) / (n as f64).sqrt();
            let mut last = 0.0;
            for alpha in [1e-2, 1e-4, 1e-8, 1e-12, 1e-50, 1e-200] {
                let thr = grubbs_threshold(n, alpha).unwrap();
                // Saturates at the bound in floating point for tiny alpha.
                assert!(thr >= last && thr <= bound);
                last = thr;
            }
            assert!(bound - last < 1e-6, "n={n}: {last} vs {bound}");
        }
    }

    #[test]
    fn gross_outlier_detected_against_gaussian_shadows() {
        let mut rng = rng::stream(31, 0);
        let shadows: Vec<f64> = (0..15).map(|_| StandardNormal.sample(&mut rng)).collect();
        let out = grubbs_decide(&shadows, 10.0, 0.01, GrubbsSample::WithSuspect).unwrap();
        assert!(out.is_outlier);
        // Independent recomputation of statistic and threshold.
        let mut all = shadows.clone();
        all.push(10.0);
        let n = all.len() as f64;
        let mu = all.iter().sum::<f64>() / n;
        let sd = (all.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((out.statistic - (10.0 - mu).abs() / sd).abs() < 1e-12);
        assert_eq!(out.sample_size, 16);
    }

    #[test]
    fn grubbs_sixteen_point_threshold_value() {
        // t_{0.01/16, 14} by bisection on the incomplete-beta tail; compare the
        // resulting threshold against the closed form.
        let t = t_upper_critical(0.01 / 16.0, 14.0).unwrap();
        let expect = 15.0 / 4.0 * (t * t / (14.0 + t * t)).sqrt();
        assert!((grubbs_threshold(16, 0.01).unwrap() - expect).abs() < 1e-12);
        assert!((2.5..3.0).contains(&expect), "{expect}");
    }

    #[test]
    fn three_sigma_boundaries() {
        let shadows = [1.0, 3.0, 1.0, 3.0];
        let (mu, sd) = mean_and_std(&shadows);
        assert!(!three_sigma_decide(&shadows, mu).unwrap().is_outlier);
        assert!(three_sigma_decide(&shadows, mu + 4.0 * sd).unwrap().is_outlier);
        assert!(!three_sigma_decide(&shadows, mu + 2.9 * sd).unwrap().is_outlier);
    }

    #[test]
    fn degenerate_reference() {
        let same = [0.5; 6];
        assert!(!three_sigma_decide(&same, 0.5).unwrap().is_outlier);
        assert!(three_sigma_decide(&same, 0.50001).unwrap().is_outlier);
        assert!(!grubbs_decide(&same, 0.5, 0.01, GrubbsSample::WithSuspect).unwrap().is_outlier);
        assert!(grubbs_decide(&same, 0.6, 0.01, GrubbsSample::WithSuspect).unwrap().is_outlier);
        assert!(grubbs_decide(&same, 0.6, 0.01, GrubbsSample::ShadowsOnly).unwrap().is_outlier);
    }

    #[test]
    fn preconditions() {
        assert!(grubbs_decide(&[1.0], 0.0, 0.01, GrubbsSample::WithSuspect).is_err());
        assert!(grubbs_decide(&[1.0, 2.0], 0.0, 0.0, GrubbsSample::WithSuspect).is_err());
        assert!(grubbs_decide(&[1.0, 2.0], 0.0, 0.01, GrubbsSample::ShadowsOnly).is_err());
        assert!(three_sigma_decide(&[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn statistic_bounded_by_samuelson(
            shadows in proptest::collection::vec(-10.0f64..10.0, 2..30),
            suspect in -1e6f64..1e6,
        ) {
            let out = grubbs_decide(&shadows, suspect, 0.01, GrubbsSample::WithSuspect).unwrap();
            let n = out.sample_size as f64;
            if out.statistic.is_finite() {
                prop_assert!(out.statistic <= (n - 1.0) / n.sqrt() + 1e-9);
            }
        }

        #[test]
        fn verdict_monotone_in_distance(
            shadows in proptest::collection::vec(0.0f64..1.0, 3..25),
            steps in proptest::collection::vec(0.0f64..2.0, 1..20),
        ) {
            let mu = shadows.iter().sum::<f64>() / shadows.len() as f64;
            let mut offset = 0.0;
            let mut flagged = false;
            for s in steps {
                offset += s;
                let out = grubbs_decide(&shadows, mu + offset, 0.01, GrubbsSample::WithSuspect).unwrap();
                prop_assert!(!(flagged && !out.is_outlier));
                flagged |= out.is_outlier;
            }
        }

        #[test]
        fn smaller_alpha_never_rejects_more(
            shadows in proptest::collection::vec(0.0f64..1.0, 3..25),
            suspect in -5.0f64..5.0,
        ) {
            let strict = grubbs_decide(&shadows, suspect, 1e-4, GrubbsSample::WithSuspect).unwrap();
            let loose = grubbs_decide(&shadows, suspect, 1e-2, GrubbsSample::WithSuspect).unwrap();
            prop_assert!(!(strict.is_outlier && !loose.is_outlier));
        }
    }

    #[test]
    fn shadows_only_uses_k() {
        let shadows = vec![1.0, 2.0, 3.0, 2.0, 2.5];
        let out = grubbs_decide(&shadows, 2.0, 0.05, GrubbsSample::ShadowsOnly).unwrap();
        assert_eq!(out.sample_size, 5);
        assert_eq!(out.threshold, grubbs_threshold(5, 0.05).unwrap());
    }
}
