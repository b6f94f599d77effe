//! Small statistics toolkit: batch means, Kolmogorov–Smirnov, paired t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two points.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Number of batches used for `n` observations: `floor(sqrt(n))`.
pub fn batch_count(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(1)
}

/// Batch-means standard error of the weighted mean `sum w f / sum w`.
/// Observations are split into `floor(sqrt(n))` contiguous batches; each
/// batch contributes its own weighted mean.
pub fn weighted_batch_means_se(values: &[f64], weights: &[f64]) -> f64 {
    let n = values.len();
    let b = batch_count(n);
    if b < 2 {
        return 0.0;
    }
    let size = n / b;
    let batch_means: Vec<f64> = (0..b)
        .map(|k| {
            let lo = k * size;
            let hi = if k + 1 == b { n } else { lo + size };
            let (num, den) = values[lo..hi]
                .iter()
                .zip(&weights[lo..hi])
                .fold((0.0, 0.0), |(num, den), (v, w)| (num + v * w, den + w));
            num / den
        })
        .collect();
    (sample_variance(&batch_means) / b as f64).sqrt()
}

pub fn batch_means_se(values: &[f64]) -> f64 {
    weighted_batch_means_se(values, &vec![1.0; values.len()])
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(xs);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS statistic with effective sample size `n_eff`
/// (`n` for one sample, `n m / (n + m)` for two), with Stephens' correction.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedTest {
    pub mean_difference: f64,
    pub t_statistic: f64,
    /// One-sided p-value for the alternative `mean difference < 0`.
    pub p_value: f64,
}

/// One-sided paired t-test on differences `d_i`, alternative `E d < 0`.
pub fn paired_t_test_less(differences: &[f64]) -> PairedTest {
    let n = differences.len();
    let m = mean(differences);
    let se = (sample_variance(differences) / n as f64).sqrt();
    if se == 0.0 {
        let p = if m < 0.0 { 0.0 } else { 1.0 };
        return PairedTest { mean_difference: m, t_statistic: f64::NAN, p_value: p };
    }
    let t = m / se;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 2");
    PairedTest { mean_difference: m, t_statistic: t, p_value: dist.cdf(t) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_is_zero() {
        let xs = [0.3, -1.0, 2.0, 0.0];
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
    }

    #[test]
    fn ks_disjoint_is_one() {
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[5.0, 6.0, 7.0]), 1.0);
    }

    #[test]
    fn ks_is_symmetric() {
        let a = [0.1, 0.5, 0.9, 1.3];
        let b = [0.2, 0.4, 1.0];
        assert_eq!(ks_two_sample(&a, &b), ks_two_sample(&b, &a));
        // Largest gap at x = 0.4: F_a = 1/4, F_b = 2/3.
        assert!((ks_two_sample(&a, &b) - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_quantiles() {
        // Classical critical values: P(K > 1.358) = 0.05, P(K > 1.628) = 0.01.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-10);
    }

    #[test]
    fn batch_means_of_constant_is_zero() {
        assert_eq!(batch_means_se(&vec![2.0; 100]), 0.0);
    }

    #[test]
    fn paired_test_direction() {
        let d: Vec<f64> = (0..20).map(|i| -1.0 + 0.1 * (i % 3) as f64).collect();
        assert!(paired_t_test_less(&d).p_value < 1e-6);
        let up: Vec<f64> = d.iter().map(|x| -x).collect();
        assert!(paired_t_test_less(&up).p_value > 0.99);
    }
}
