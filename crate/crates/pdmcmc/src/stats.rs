//! Sample statistics and Kolmogorov-Smirnov tests.

use statrs::function::erf::erf;

use crate::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + erf((x - mu) / (sigma * std::f64::consts::SQRT_2)))
}

/// Asymptotic Kolmogorov p-value with the small-sample correction
/// `lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) d`.
fn ks_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// One-sample KS statistic and p-value against a CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::TooFewSamples { min: 8, got: n });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let c = cdf(*x);
        d = d.max((c - i as f64 / n as f64).abs());
        d = d.max(((i + 1) as f64 / n as f64 - c).abs());
    }
    Ok((d, ks_p(d, n as f64)))
}

/// Two-sample KS statistic and p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 8 || b.len() < 8 {
        return Err(Error::TooFewSamples {
            min: 8,
            got: a.len().min(b.len()),
        });
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        // consume every copy of the smallest outstanding value from both
        // samples before measuring the gap; evaluating mid-tie would report
        // a spurious jump as large as the atom's mass
        let t = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < sa.len() && sa[i] <= t {
            i += 1;
        }
        while j < sb.len() && sb[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok((d, ks_p(d, n_eff)))
}

/// Thin a series to at most `cap` points with an even stride.
pub fn thin(xs: &[f64], cap: usize) -> Vec<f64> {
    let stride = (xs.len() / cap).max(1);
    xs.iter().step_by(stride).copied().take(cap).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
        // Phi(1.96) = 0.9750021048517795
        assert!((normal_cdf(1.96, 0.0, 1.0) - 0.975_002_104_851_779_5).abs() < 1e-9);
        assert!((normal_cdf(3.0, 1.0, 2.0) - normal_cdf(1.0, 0.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn ks_accepts_correct_law() {
        let mut rng = crate::stream::substream(11, 0, 0);
        let xs: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let (_, p) = ks_test(&xs, |x| normal_cdf(x, 0.0, 1.0)).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn ks_rejects_shifted_law() {
        let mut rng = crate::stream::substream(11, 1, 0);
        let xs: Vec<f64> = (0..4000).map(|_| rng.sample::<f64, _>(StandardNormal) + 0.3).collect();
        let (_, p) = ks_test(&xs, |x| normal_cdf(x, 0.0, 1.0)).unwrap();
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn two_sample_same_law() {
        let mut rng = crate::stream::substream(11, 2, 0);
        let xs: Vec<f64> = (0..3000).map(|_| rng.sample(StandardNormal)).collect();
        let ys: Vec<f64> = (0..3000).map(|_| rng.sample(StandardNormal)).collect();
        let (_, p) = ks_two_sample(&xs, &ys).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn two_sample_different_scale() {
        let mut rng = crate::stream::substream(11, 3, 0);
        let xs: Vec<f64> = (0..3000).map(|_| rng.sample(StandardNormal)).collect();
        let ys: Vec<f64> = (0..3000).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let (_, p) = ks_two_sample(&xs, &ys).unwrap();
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn two_sample_tolerates_heavy_ties() {
        // lattice-valued samples from one law must not register as a
        // discrepancy, and a shifted lattice must still be caught
        let mut rng = crate::stream::substream(11, 4, 0);
        let atoms = [-0.7, 0.0, 0.7, 1.4];
        let weights = [0.2, 0.4, 0.3, 0.1];
        let draw = |shift: f64, rng: &mut dyn rand::RngCore| -> Vec<f64> {
            (0..4000)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut out = *atoms.last().unwrap();
                    for (a, w) in atoms.iter().zip(weights) {
                        acc += w;
                        if u < acc {
                            out = *a;
                            break;
                        }
                    }
                    out + shift
                })
                .collect()
        };
        let xs = draw(0.0, &mut rng);
        let ys = draw(0.0, &mut rng);
        let (_, p) = ks_two_sample(&xs, &ys).unwrap();
        assert!(p > 0.01, "p = {p}");
        let zs = draw(0.7, &mut rng);
        let (_, p_bad) = ks_two_sample(&xs, &zs).unwrap();
        assert!(p_bad < 1e-6, "p = {p_bad}");
    }

    #[test]
    fn thinning_cap() {
        let xs: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        let t = thin(&xs, 2000);
        assert_eq!(t.len(), 2000);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[1], 5.0);
        assert_eq!(thin(&xs[..50], 2000).len(), 50);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            ks_test(&[1.0, 2.0], |_| 0.5),
            Err(crate::Error::TooFewSamples { .. })
        ));
    }
}
