//! Sampling the first failure step of the per-step acceptance sequence
//! `a_j = exp(-[u((j+1)eps) - u(j eps)]_+)` along a ray, either in closed
//! form when the ray potential is convex, or by thinning against a cheap
//! per-step bound.

use rand::Rng;
use rand_distr::Exp1;

use crate::{Error, Result};

/// Largest step count a clock may report; anything later is truncated here
/// and recomputed once the chain has consumed this many steps.
pub const CLOCK_CAP: u64 = (1 << 31) - 1;

const BRACKET_TOL: f64 = 1e-12;

fn bisect(mut a: f64, mut b: f64, below: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        if b - a <= BRACKET_TOL * (1.0 + b.abs()) {
            break;
        }
        let m = 0.5 * (a + b);
        if below(m) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Number of steps survived before the first failure, for a convex ray
/// potential `u` with derivative `slope`. Runs in `O(log)` evaluations:
/// locate the ray minimiser, pick the better of its two neighbouring grid
/// points, then solve `u(t) = u(grid min) + E` on the increasing branch.
/// Convexity is checked opportunistically while bracketing; a detected
/// violation returns [`Error::NonConvex`]. Times past [`CLOCK_CAP`] steps
/// saturate there.
pub fn exact_logconcave_event_time(
    u: impl Fn(f64) -> f64,
    slope: impl Fn(f64) -> f64,
    eps: f64,
    rng: &mut dyn rand::RngCore,
) -> Result<u64> {
    let e: f64 = rng.sample(Exp1);
    exact_logconcave_event_time_with(u, slope, eps, e)
}

/// Deterministic core of [`exact_logconcave_event_time`] with the
/// exponential draw passed in.
pub(crate) fn exact_logconcave_event_time_with(
    u: impl Fn(f64) -> f64,
    slope: impl Fn(f64) -> f64,
    eps: f64,
    e: f64,
) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("step size {eps} must be positive")));
    }
    if !(e >= 0.0) {
        return Err(Error::Config(format!("exposure {e} must be nonnegative")));
    }
    let horizon = (CLOCK_CAP as f64 + 2.0) * eps;

    // ray minimiser: slope is nondecreasing when u is convex
    let t_star = if slope(0.0) >= 0.0 {
        0.0
    } else {
        let mut lo = 0.0;
        let mut s_lo = slope(0.0);
        let mut hi = eps;
        loop {
            let s_hi = slope(hi);
            if s_hi < s_lo - 1e-9 * (1.0 + s_lo.abs()) {
                return Err(Error::NonConvex);
            }
            if s_hi >= 0.0 {
                break;
            }
            if hi >= horizon {
                // decreasing through the whole window: no failure before the cap
                return Ok(CLOCK_CAP);
            }
            lo = hi;
            s_lo = s_hi;
            hi = (hi * 2.0).min(horizon);
        }
        bisect(lo, hi, |t| slope(t) < 0.0)
    };

    let j_lo = (t_star / eps).floor().max(0.0);
    let j_hi = (t_star / eps).ceil();
    // grid minimum; exact tie keeps the earlier point
    let k_star = (if u(j_hi * eps) < u(j_lo * eps) { j_hi } else { j_lo }) as u64;
    let u_ref = u(k_star as f64 * eps);

    // bracket the level crossing u(t) = u_ref + e right of the minimiser
    let mut lo = t_star;
    let mut u_lo = u(lo);
    let mut step = eps;
    let hi = loop {
        let hi = lo + step;
        let u_hi = u(hi);
        if u_hi < u_lo - 1e-9 * (1.0 + u_lo.abs()) {
            // u must not decrease right of its minimiser
            return Err(Error::NonConvex);
        }
        if u_hi - u_ref >= e {
            break hi;
        }
        if hi >= horizon {
            return Ok(CLOCK_CAP);
        }
        lo = hi;
        u_lo = u_hi;
        step *= 2.0;
    };
    let t = bisect(lo, hi, |m| u(m) - u_ref < e);

    // snap to the exact discrete answer: the last grid point j >= k_star
    // whose cumulative exposure u(j eps) - u_ref still fits under e
    let mut j = ((t / eps).floor() as i64).max(k_star as i64) as u64;
    if j >= CLOCK_CAP {
        return Ok(CLOCK_CAP);
    }
    while j > k_star && u(j as f64 * eps) - u_ref > e {
        j -= 1;
    }
    while j < CLOCK_CAP && u((j + 1) as f64 * eps) - u_ref <= e {
        j += 1;
    }
    Ok(j)
}

/// First failure step for an arbitrary per-step acceptance sequence
/// `alpha(k)`, scanned through a cheaper lower bound `alpha_bar(k)`:
/// candidate steps occur with probability `1 - alpha_bar(k)` and are kept
/// with probability `(1 - alpha(k)) / (1 - alpha_bar(k))`, so `alpha` is
/// only evaluated at candidates. Saturates at [`CLOCK_CAP`].
pub fn bounded_event_time(
    alpha: impl Fn(u64) -> f64,
    alpha_bar: impl Fn(u64) -> f64,
    rng: &mut dyn rand::RngCore,
) -> Result<u64> {
    for k in 0..CLOCK_CAP {
        let ab = alpha_bar(k);
        if !(ab > 0.0 && ab <= 1.0) {
            return Err(Error::Config(format!(
                "acceptance bound {ab} at step {k} outside (0, 1]"
            )));
        }
        if rng.gen::<f64>() < 1.0 - ab {
            let a = alpha(k);
            if a < ab {
                return Err(Error::BoundViolation {
                    rate: 1.0 - a,
                    bound: 1.0 - ab,
                });
            }
            if rng.gen::<f64>() * (1.0 - ab) < 1.0 - a {
                return Ok(k);
            }
        }
    }
    Ok(CLOCK_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::substream;

    #[test]
    fn quadratic_ray_worked_example() {
        // u(t) = (t-3)^2 / 2, unit grid, exposure 1/2: the minimiser sits
        // on the grid at 3 and the crossing lands exactly on step 4
        let u = |t: f64| (t - 3.0) * (t - 3.0) / 2.0;
        let s = |t: f64| t - 3.0;
        assert_eq!(exact_logconcave_event_time_with(u, s, 1.0, 0.5).unwrap(), 4);
        assert_eq!(exact_logconcave_event_time_with(u, s, 1.0, 0.0).unwrap(), 3);
        assert_eq!(
            exact_logconcave_event_time_with(u, s, 1.0, 10.0).unwrap(),
            7
        );
    }

    #[test]
    fn grid_tie_keeps_earlier_point() {
        // minimiser at 2.5 makes u(2) == u(3); reference is step 2, and an
        // exposure equal to the shared level still survives step 3
        let u = |t: f64| (t - 2.5) * (t - 2.5) / 2.0;
        let s = |t: f64| t - 2.5;
        assert_eq!(
            exact_logconcave_event_time_with(u, s, 1.0, 0.125).unwrap(),
            3
        );
        assert_eq!(exact_logconcave_event_time_with(u, s, 1.0, 0.0).unwrap(), 3);
        assert_eq!(exact_logconcave_event_time_with(u, s, 1.0, 2.0).unwrap(), 4);
    }

    #[test]
    fn flat_ray_saturates_at_cap() {
        let res = exact_logconcave_event_time_with(|_| 1.25, |_| 0.0, 1.0, 0.7);
        assert_eq!(res.unwrap(), CLOCK_CAP);
        // decreasing through the whole horizon behaves the same way
        let res = exact_logconcave_event_time_with(|t| -t, |_| -1.0, 1.0, 0.7);
        assert_eq!(res.unwrap(), CLOCK_CAP);
    }

    #[test]
    fn concave_ray_is_rejected() {
        let u = |t: f64| t - 0.2 * t * t;
        let s = |t: f64| 1.0 - 0.4 * t;
        assert!(matches!(
            exact_logconcave_event_time_with(u, s, 1.0, 2.0),
            Err(Error::NonConvex)
        ));
    }

    /// Scan step by step with exact per-step acceptances.
    fn sequential_oracle(u: &dyn Fn(f64) -> f64, eps: f64, rng: &mut dyn rand::RngCore) -> u64 {
        let mut j = 0u64;
        loop {
            let du = u((j + 1) as f64 * eps) - u(j as f64 * eps);
            let alpha = (-du.max(0.0)).exp();
            if rng.gen::<f64>() >= alpha {
                return j;
            }
            j += 1;
            if j > 1000 {
                return 1000;
            }
        }
    }

    fn tv_first_50(a: &[u64], b: &[u64]) -> f64 {
        let bucket = |xs: &[u64]| {
            let mut c = [0u64; 51];
            for &x in xs {
                c[(x.min(50)) as usize] += 1;
            }
            c
        };
        let (ca, cb) = (bucket(a), bucket(b));
        ca.iter()
            .zip(&cb)
            .map(|(&x, &y)| (x as f64 / a.len() as f64 - y as f64 / b.len() as f64).abs())
            .sum::<f64>()
            / 2.0
    }

    #[test]
    fn closed_form_matches_sequential_scan() {
        // standard normal potential along two rays: one starting at the
        // minimiser, one three units into the left tail
        for (case, x0) in [(0u64, 0.0f64), (1, -3.0)] {
            let u = move |t: f64| (x0 + t) * (x0 + t) / 2.0;
            let s = move |t: f64| x0 + t;
            let n = 100_000;
            let mut fast = Vec::with_capacity(n);
            let mut slow = Vec::with_capacity(n);
            let mut rng = substream(122, case, 0);
            for _ in 0..n {
                fast.push(exact_logconcave_event_time(u, s, 1.0, &mut rng).unwrap());
                slow.push(sequential_oracle(&u, 1.0, &mut rng));
            }
            let tv = tv_first_50(&fast, &slow);
            assert!(tv < 0.01, "start {x0}: tv {tv}");
        }
    }

    #[test]
    fn bounded_scan_with_tight_bound_matches_geometric() {
        // bound equal to the true acceptance: every candidate is kept, so
        // the step count is geometric with the candidate hazard
        let mut rng = substream(123, 0, 0);
        let n = 200_000u64;
        let mut counts = [0u64; 21];
        for _ in 0..n {
            let k = bounded_event_time(|_| 0.7, |_| 0.7, &mut rng).unwrap();
            counts[k.min(20) as usize] += 1;
        }
        let mut tv = 0.0;
        for j in 0..=20usize {
            let p = if j < 20 {
                0.7f64.powi(j as i32) * 0.3
            } else {
                0.7f64.powi(20)
            };
            tv += (counts[j] as f64 / n as f64 - p).abs();
        }
        assert!(tv / 2.0 < 0.005, "tv {tv}");
    }

    #[test]
    fn bounded_scan_thins_to_the_true_hazard() {
        // acceptance 0.9 scanned through bound 0.8: candidates fire at
        // rate 0.2 and survive thinning half the time, hazard 0.1
        let mut rng = substream(123, 1, 0);
        let n = 1_000_000u64;
        let mut acc = 0u64;
        for _ in 0..n {
            acc += bounded_event_time(|_| 0.9, |_| 0.8, &mut rng).unwrap();
        }
        let mean = acc as f64 / n as f64;
        assert!((mean - 9.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn bounded_scan_guards_inputs() {
        let mut rng = substream(123, 2, 0);
        assert!(matches!(
            bounded_event_time(|_| 0.5, |_| 0.9, &mut rng),
            Err(Error::BoundViolation { .. })
        ));
        assert!(matches!(
            bounded_event_time(|_| 0.5, |_| 0.0, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn product_bound_over_two_factors_is_exact() {
        // two periodic per-factor acceptances; the product of per-factor
        // lower bounds is a valid lower bound for the product acceptance
        let a1 = |k: u64| [0.9, 0.8][(k % 2) as usize];
        let a2 = |k: u64| [0.95, 0.7, 0.85][(k % 3) as usize];
        let b1 = |k: u64| a1(k) - 0.05;
        let b2 = |k: u64| a2(k) - 0.05;
        let n = 100_000;
        let mut thinned = Vec::with_capacity(n);
        let mut direct = Vec::with_capacity(n);
        let mut rng = substream(123, 3, 0);
        for _ in 0..n {
            thinned.push(bounded_event_time(|k| a1(k) * a2(k), |k| b1(k) * b2(k), &mut rng).unwrap());
            // oracle: scan with the exact product acceptance
            let mut k = 0u64;
            while rng.gen::<f64>() < a1(k) * a2(k) {
                k += 1;
            }
            direct.push(k);
        }
        let tv = tv_first_50(&thinned, &direct);
        assert!(tv < 0.01, "tv {tv}");
    }
}
