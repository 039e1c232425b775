//! Chain quality measures: batch-means effective sample size, error decay
//! along a run, moment/KS stationarity checks, and the per-time bounce rate
//! of discrete chains. Everything here is a pure function over recorded
//! arrays; driving the samplers is the caller's business.

use crate::dt::StepKind;
use crate::stats;
use crate::{Error, Result};

/// Effective sample size by non-overlapping batch means with `floor(sqrt(n))`
/// batches: `n * s^2 / (b * var(batch means))`, clamped to `[1, n]`. The
/// ratio is invariant under affine maps of the series.
pub fn ess_batch_means(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 100 {
        return Err(Error::TooFewSamples { min: 100, got: n });
    }
    let s2 = stats::variance(xs);
    if s2 == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let b = (n as f64).sqrt().floor() as usize;
    let m = n / b;
    let means: Vec<f64> = (0..m)
        .map(|j| stats::mean(&xs[j * b..(j + 1) * b]))
        .collect();
    let var_bm = stats::variance(&means);
    if var_bm == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((n as f64 * s2 / (b as f64 * var_bm)).clamp(1.0, n as f64))
}

/// Powers of two `1, 2, 4, ..., 2^14`, the standard checkpoint grid for
/// error curves.
pub fn default_checkpoints() -> Vec<usize> {
    (0..=14).map(|e| 1usize << e).collect()
}

/// Absolute error of the running mean at each checkpoint: entry `(k, e)`
/// has `e = |mean(first k values) - truth|`. Checkpoints beyond the series
/// length are dropped; `checkpoints` must be increasing.
pub fn error_curve(fs: &[f64], truth: f64, checkpoints: &[usize]) -> Vec<(usize, f64)> {
    debug_assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut sum = 0.0;
    let mut next = checkpoints.iter().copied().peekable();
    for (i, f) in fs.iter().enumerate() {
        sum += f;
        if next.peek() == Some(&(i + 1)) {
            next.next();
            out.push((i + 1, (sum / (i + 1) as f64 - truth).abs()));
        }
    }
    out
}

/// Thresholds for [`stationarity_check`]; fields rather than constants so a
/// harness can tighten or relax them per experiment.
#[derive(Clone, Debug)]
pub struct StationaritySettings {
    /// Bound on the absolute moment z-scores.
    pub z_max: f64,
    /// Minimum KS p-value on thinned snapshots.
    pub ks_p_min: f64,
    /// Snapshot cap for the KS test.
    pub snapshot_cap: usize,
}

impl Default for StationaritySettings {
    fn default() -> Self {
        StationaritySettings {
            z_max: 4.0,
            ks_p_min: 0.005,
            snapshot_cap: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateReport {
    pub mean_z: f64,
    pub var_z: f64,
    pub ks_p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReport {
    pub coords: Vec<CoordinateReport>,
    pub pass: bool,
}

/// Test recorded coordinate paths against known marginals: mean and second
/// central moment z-scores with batch-means-ESS-adjusted standard errors,
/// plus a KS test of thinned snapshots against the marginal CDF. Passes
/// when every coordinate stays inside the thresholds.
pub fn stationarity_check(
    paths: &[Vec<f64>],
    moments: &[(f64, f64)],
    cdf: impl Fn(usize, f64) -> f64,
    settings: &StationaritySettings,
) -> Result<StationarityReport> {
    if paths.len() != moments.len() || paths.is_empty() {
        return Err(Error::Config(
            "one (mean, var) pair per recorded coordinate required".into(),
        ));
    }
    let mut coords = Vec::with_capacity(paths.len());
    let mut pass = true;
    for (c, (xs, &(mu, var))) in paths.iter().zip(moments).enumerate() {
        let mean_z = {
            let se = (stats::variance(xs) / ess_batch_means(xs)?).sqrt();
            (stats::mean(xs) - mu) / se
        };
        // second moment about the known mean; its own series carries its
        // own correlation, hence its own ESS
        let ys: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
        let var_z = {
            let se = (stats::variance(&ys) / ess_batch_means(&ys)?).sqrt();
            (stats::mean(&ys) - var) / se
        };
        let snaps = stats::thin(xs, settings.snapshot_cap);
        let (_, ks_p) = stats::ks_test(&snaps, |x| cdf(c, x))?;
        pass &= mean_z.abs() < settings.z_max && var_z.abs() < settings.z_max
            && ks_p > settings.ks_p_min;
        coords.push(CoordinateReport { mean_z, var_z, ks_p });
    }
    Ok(StationarityReport { coords, pass })
}

/// Events per unit time of a discrete chain: non-advance steps divided by
/// `n * eps`, after discarding the first tenth as burn-in. Refreshments are
/// not events of the dynamics and are excluded.
pub fn bounce_rate_estimate(kinds: &[StepKind], eps: f64) -> f64 {
    let burn = kinds.len() / 10;
    let kept = &kinds[burn..];
    if kept.is_empty() {
        return 0.0;
    }
    let events = kept
        .iter()
        .filter(|k| !matches!(k, StepKind::Advance | StepKind::Refresh))
        .count();
    events as f64 / (kept.len() as f64 * eps)
}

/// Per-run quantities consumed by reporting layers: estimate, spread,
/// effective sample size and wall time for one scalar test function.
#[derive(Clone, Debug)]
pub struct ChainSummary {
    pub n_samples: usize,
    pub mean_f: f64,
    pub var_f: f64,
    /// Clamped to `[1, n]`; degenerate or short series report 1.
    pub ess: f64,
    pub wall_ms: f64,
    /// `|mean_f - truth|` when the truth is known.
    pub error: Option<f64>,
}

impl ChainSummary {
    pub fn from_series(fs: &[f64], truth: Option<f64>, wall_ms: f64) -> Result<Self> {
        if fs.is_empty() {
            return Err(Error::TooFewSamples { min: 1, got: 0 });
        }
        let mean_f = stats::mean(fs);
        let var_f = if fs.len() > 1 { stats::variance(fs) } else { 0.0 };
        let ess = ess_batch_means(fs).unwrap_or(1.0);
        Ok(ChainSummary {
            n_samples: fs.len(),
            mean_f,
            var_f,
            ess,
            wall_ms,
            error: truth.map(|t| (mean_f - t).abs()),
        })
    }

    pub fn ms_per_ess(&self) -> f64 {
        self.wall_ms / self.ess
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dt::{self, DiscreteKernel};
    use crate::model::{targets, State, VelocityLaw};
    use crate::stream::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ess_iid_is_near_n() {
        let mut rng = substream(150, 0, 0);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ess = ess_batch_means(&xs).unwrap();
        assert!(ess > 0.8 * n as f64 && ess <= 1.2 * n as f64, "ess {ess}");
    }

    #[test]
    fn ess_ar1_matches_integrated_autocorrelation() {
        // x_{t+1} = 0.9 x_t + sqrt(1 - 0.81) xi gives ESS = n (1-0.9)/(1+0.9)
        let mut rng = substream(150, 1, 0);
        let n = 40_000;
        let mut x = 0.0f64;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                x = 0.9 * x + (1.0f64 - 0.81).sqrt() * rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let ess = ess_batch_means(&xs).unwrap();
        let want = n as f64 / 19.0;
        assert!((ess - want).abs() < 0.3 * want, "ess {ess} want {want}");
    }

    #[test]
    fn ess_is_affine_invariant() {
        let mut rng = substream(150, 2, 0);
        let xs: Vec<f64> = (0..5_000).map(|_| rng.sample(StandardNormal)).collect();
        let base = ess_batch_means(&xs).unwrap();
        for (a, b) in [(4.0, 3.0), (-2.5, 0.0), (0.001, -7.0)] {
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let got = ess_batch_means(&ys).unwrap();
            assert!((got - base).abs() <= 1e-9 * base, "{a},{b}: {got} vs {base}");
        }
    }

    #[test]
    fn ess_degenerate_inputs() {
        assert!(matches!(
            ess_batch_means(&[1.0; 50]),
            Err(Error::TooFewSamples { min: 100, got: 50 })
        ));
        assert!(matches!(
            ess_batch_means(&[2.5; 400]),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn error_curve_of_exact_chain_is_zero() {
        let fs = vec![1.0; 64];
        for (_, e) in error_curve(&fs, 1.0, &default_checkpoints()) {
            assert_eq!(e, 0.0);
        }
    }

    #[test]
    fn error_curve_matches_direct_recomputation() {
        let mut rng = substream(151, 0, 0);
        let fs: Vec<f64> = (0..3_000).map(|_| rng.sample(StandardNormal)).collect();
        let cps = [1usize, 7, 64, 1000, 2999];
        let got = error_curve(&fs, 0.25, &cps);
        assert_eq!(got.len(), cps.len());
        for (k, e) in got {
            let want = (stats::mean(&fs[..k]) - 0.25).abs();
            assert!((e - want).abs() < 1e-12, "checkpoint {k}");
        }
        // checkpoints beyond the series are dropped
        assert_eq!(error_curve(&fs[..10], 0.0, &[4, 100]).len(), 1);
    }

    #[test]
    fn error_curve_iid_squares_converges() {
        let mut rng = substream(151, 1, 0);
        let fs: Vec<f64> = (0..1 << 14)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                x * x
            })
            .collect();
        let curve = error_curve(&fs, 1.0, &default_checkpoints());
        assert_eq!(curve.last().unwrap().0, 1 << 14);
        assert!(curve.last().unwrap().1 < 0.05, "{:?}", curve.last());
    }

    #[test]
    fn averaged_error_curves_trend_down() {
        let cps = default_checkpoints();
        let mut avg = vec![0.0f64; cps.len()];
        let reps = 20;
        for r in 0..reps {
            let mut rng = substream(151, 2 + r, 0);
            let fs: Vec<f64> = (0..1 << 14)
                .map(|_| {
                    let x: f64 = rng.sample(StandardNormal);
                    x * x
                })
                .collect();
            for (i, (_, e)) in error_curve(&fs, 1.0, &cps).iter().enumerate() {
                avg[i] += e / reps as f64;
            }
        }
        let decreases = avg.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreases >= 12, "only {decreases} of {} decrease", avg.len() - 1);
        assert!(avg[cps.len() - 1] < 0.1 * avg[0], "{avg:?}");
    }

    #[test]
    fn stationarity_accepts_exact_sampler() {
        let mut rng = substream(152, 0, 0);
        let n = 20_000;
        let paths: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let report = stationarity_check(
            &paths,
            &[(0.0, 1.0), (0.0, 1.0)],
            |_, x| stats::normal_cdf(x, 0.0, 1.0),
            &StationaritySettings::default(),
        )
        .unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn stationarity_flags_halved_exponent() {
        // Metropolis chain accepting with exp(-dU/2) targets N(0, 2), so
        // the variance z-score must blow up against (0, 1)
        let mut rng = substream(152, 1, 0);
        let n = 20_000;
        let mut x = 0.0f64;
        let mut path = Vec::with_capacity(n);
        for _ in 0..n {
            let y = x + 1.5 * rng.sample::<f64, _>(StandardNormal);
            if rng.gen::<f64>().ln() < 0.25 * (x * x - y * y) {
                x = y;
            }
            path.push(x);
        }
        let report = stationarity_check(
            &[path],
            &[(0.0, 1.0)],
            |_, x| stats::normal_cdf(x, 0.0, 1.0),
            &StationaritySettings::default(),
        )
        .unwrap();
        assert!(!report.pass);
        assert!(report.coords[0].var_z > 4.0, "{report:?}");
        assert!(report.coords[0].ks_p < 0.005, "{report:?}");
    }

    #[test]
    fn stationarity_report_is_reproducible() {
        let run = || {
            let mut rng = substream(152, 2, 0);
            let paths: Vec<Vec<f64>> =
                vec![(0..5_000).map(|_| rng.sample(StandardNormal)).collect()];
            stationarity_check(
                &paths,
                &[(0.0, 1.0)],
                |_, x| stats::normal_cdf(x, 0.0, 1.0),
                &StationaritySettings::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    /// Drive the straight-line flip walk and record step kinds. The start
    /// is drawn from the target: the walk never leaves the position lattice
    /// `x0 + eps Z`, and a random offset averages out the O(eps^2) gap
    /// between the lattice's stationary rate and the continuum one.
    fn flip_walk_kinds(eps: f64, n: usize, role: u64) -> Vec<StepKind> {
        let target = targets::gaussian_diag(&[1.0])
            .with_velocity(VelocityLaw::HypercubeCorners { dim: 1 });
        let k = dt::guided_random_walk(target, eps);
        let mut rng = substream(153, role, 0);
        let x0: f64 = rng.sample(StandardNormal);
        let mut z = State::new(vec![x0], vec![1.0]);
        (0..n).map(|_| k.step(&mut z, &mut rng).unwrap()).collect()
    }

    /// Rejection frequency per unit step from fresh stationary draws: one
    /// step per draw, so no lattice confinement and no autocorrelation.
    fn one_step_rejection_rate(eps: f64, n: usize, role: u64) -> f64 {
        let target = targets::gaussian_diag(&[1.0])
            .with_velocity(VelocityLaw::HypercubeCorners { dim: 1 });
        let k = dt::guided_random_walk(target.clone(), eps);
        let mut rng = substream(153, role, 0);
        let mut rej = 0usize;
        for _ in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            let v = target.velocity.sample(&mut rng);
            let mut z = State::new(vec![x], v);
            if !matches!(k.step(&mut z, &mut rng).unwrap(), StepKind::Advance) {
                rej += 1;
            }
        }
        rej as f64 / (n as f64 * eps)
    }

    #[test]
    fn one_step_rejection_matches_closed_form() {
        // the stationary per-time rejection rate of the flip walk on N(0,1)
        // is (2 Phi(eps/2) - 1)/eps = (1 - eps^2/24 + ...)/sqrt(2 pi);
        // at eps = 0.5 the deficit below the limit is resolvable
        let limit = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let closed = |eps: f64| (2.0 * stats::normal_cdf(eps / 2.0, 0.0, 1.0) - 1.0) / eps;
        let coarse = one_step_rejection_rate(0.5, 4_000_000, 10);
        assert!((coarse - closed(0.5)).abs() < 1.2e-3, "coarse {coarse}");
        assert!(limit - coarse > 2.5e-3, "coarse {coarse} not below limit");
        let fine = one_step_rejection_rate(0.1, 2_000_000, 11);
        assert!((fine - closed(0.1)).abs() < 5.5e-3, "fine {fine}");
    }

    #[test]
    fn bounce_rate_approaches_the_gaussian_limit() {
        // single-chain estimates carry Monte Carlo noise plus a lattice
        // offset of the same O(eps^2) order as the continuum deficit, so
        // the coarse tolerance is wide and the fine one modest
        let limit = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let coarse = bounce_rate_estimate(&flip_walk_kinds(0.5, 4_000_000, 0), 0.5);
        let fine = bounce_rate_estimate(&flip_walk_kinds(0.1, 20_000_000, 1), 0.1);
        assert!((coarse - limit).abs() < 1.5e-2, "coarse {coarse}");
        assert!((fine - limit).abs() < 1.2e-3, "fine {fine}");
        assert!((coarse - limit).abs() > (fine - limit).abs(), "{coarse} vs {fine}");
    }

    #[test]
    fn bounce_rate_flat_target_is_zero() {
        use crate::model::Potential;
        let flat = crate::model::ExtendedTarget::new(
            Potential::new(1, |_| 0.0, |_, g| g.fill(0.0)),
            VelocityLaw::HypercubeCorners { dim: 1 },
        );
        let k = dt::guided_random_walk(flat, 0.3);
        let mut rng = substream(153, 2, 0);
        let mut z = State::new(vec![0.0], vec![1.0]);
        let kinds: Vec<StepKind> = (0..1_000).map(|_| k.step(&mut z, &mut rng).unwrap()).collect();
        assert_eq!(bounce_rate_estimate(&kinds, 0.3), 0.0);
    }

    #[test]
    fn bounce_rate_discards_burn_in() {
        let mut kinds = vec![StepKind::Flip; 100];
        kinds.extend(std::iter::repeat(StepKind::Advance).take(900));
        // all events sit in the discarded tenth
        assert_eq!(bounce_rate_estimate(&kinds, 0.5), 0.0);
        let mut kinds = vec![StepKind::Advance; 100];
        kinds.extend(std::iter::repeat(StepKind::Bounce).take(900));
        assert!((bounce_rate_estimate(&kinds, 0.5) - 2.0).abs() < 1e-12);
        // refreshments are not events
        let kinds = vec![StepKind::Refresh; 1000];
        assert_eq!(bounce_rate_estimate(&kinds, 0.5), 0.0);
    }

    #[test]
    fn chain_summary_fields() {
        let mut rng = substream(154, 0, 0);
        let fs: Vec<f64> = (0..4_000).map(|_| rng.sample::<f64, _>(StandardNormal) + 2.0).collect();
        let s = ChainSummary::from_series(&fs, Some(2.0), 120.0).unwrap();
        assert_eq!(s.n_samples, 4_000);
        assert!((s.mean_f - 2.0).abs() < 0.06);
        assert!((s.var_f - 1.0).abs() < 0.1);
        assert!(s.ess >= 1.0 && s.ess <= 4_000.0);
        assert!((s.ms_per_ess() - 120.0 / s.ess).abs() < 1e-12);
        assert_eq!(s.error.unwrap(), (s.mean_f - 2.0).abs());
        // degenerate series clamp to ess = 1 rather than failing
        let flat = ChainSummary::from_series(&[3.0; 500], None, 1.0).unwrap();
        assert_eq!(flat.ess, 1.0);
        assert_eq!(flat.error, None);
        assert!(ChainSummary::from_series(&[], None, 0.0).is_err());
    }
}
