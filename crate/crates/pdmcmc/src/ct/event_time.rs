//! Event-time simulation: closed forms, inversion of integrated rates, and
//! thinning against window bounds.

use rand::Rng;
use rand_distr::Exp1;

use crate::{Error, Result};

/// Time horizon beyond which a clock is treated as silent. Far larger than
/// any run budget the harness produces.
pub(crate) const CLOCK_HORIZON: f64 = 1e9;

/// First event of the rate `t -> max(a + b t, 0)` given an Exp(1) draw `e`,
/// or `None` when the total integrated rate never reaches `e`.
pub fn affine_slope_event_time(a: f64, b: f64, e: f64) -> Option<f64> {
    debug_assert!(e >= 0.0);
    if b > 0.0 {
        if a >= 0.0 {
            // solve a t + b t^2/2 = e
            Some((-a + (a * a + 2.0 * b * e).sqrt()) / b)
        } else {
            // silent until t0 = -a/b, then the rate grows from zero
            Some(-a / b + (2.0 * e / b).sqrt())
        }
    } else if a <= 0.0 {
        None
    } else if b == 0.0 {
        Some(e / a)
    } else {
        // decaying rate: total mass a^2/(2|b|)
        let disc = a * a + 2.0 * b * e;
        if disc <= 0.0 {
            None
        } else {
            Some((-a + disc.sqrt()) / b)
        }
    }
}

/// Root-solve `integral(t) = e` for a nondecreasing `integral` with
/// `integral(0) = 0`: geometric bracket growth then bisection to 1e-10.
pub fn invert_integrated_rate(integral: impl Fn(f64) -> f64, e: f64) -> Option<f64> {
    debug_assert!(e >= 0.0);
    if e == 0.0 {
        return Some(0.0);
    }
    let mut hi = 1.0;
    while integral(hi) < e {
        hi *= 2.0;
        if hi > CLOCK_HORIZON {
            return None;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 {
        let m = 0.5 * (lo + hi);
        if integral(m) < e {
            lo = m;
        } else {
            hi = m;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Draw the first event time by inverting the integrated rate: the caller
/// supplies the inverse map `e -> tau` (closed form or via
/// [`invert_integrated_rate`]).
pub fn event_time_by_inversion(
    inverse: impl Fn(f64) -> Option<f64>,
    rng: &mut dyn rand::RngCore,
) -> Option<f64> {
    let e: f64 = rng.sample(Exp1);
    inverse(e)
}

/// Draw the first event time of `rate` by thinning. `bound(t0, t1)` must
/// dominate the rate on the window `[t0, t1]`; windows advance by `window`
/// until `horizon`. Returns an error if a candidate ever sees the rate
/// exceed its bound.
pub fn event_time_by_thinning(
    rate: impl Fn(f64) -> f64,
    bound: impl Fn(f64, f64) -> f64,
    window: f64,
    horizon: f64,
    rng: &mut dyn rand::RngCore,
) -> Result<Option<f64>> {
    assert!(window > 0.0);
    let horizon = horizon.min(CLOCK_HORIZON);
    let mut t = 0.0;
    while t < horizon {
        let t1 = (t + window).min(horizon);
        let bar = bound(t, t1);
        if bar <= 0.0 {
            t = t1;
            continue;
        }
        let e: f64 = rng.sample(Exp1);
        let step = e / bar;
        if t + step > t1 {
            t = t1;
            continue;
        }
        t += step;
        let lam = rate(t);
        if lam > bar * (1.0 + 1e-9) {
            return Err(Error::BoundViolation {
                rate: lam,
                bound: bar,
            });
        }
        if rng.gen::<f64>() * bar < lam {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// First event of the rate `t -> max(slope(t), 0)` for a nondecreasing
/// `slope` (potential convex along the ray). The right window endpoint
/// bounds the rate over the window; a silent initial stretch is skipped by
/// bisecting for the sign change instead of scanning.
pub fn convex_slope_event_time(
    slope: impl Fn(f64) -> f64,
    window: f64,
    horizon: f64,
    rng: &mut dyn rand::RngCore,
) -> Result<Option<f64>> {
    let horizon = horizon.min(CLOCK_HORIZON);
    if horizon <= 0.0 {
        return Ok(None);
    }
    let mut t = 0.0;
    if slope(0.0) <= 0.0 {
        if slope(horizon) <= 0.0 {
            return Ok(None);
        }
        let mut lo = 0.0;
        let mut hi = horizon;
        while hi - lo > 1e-9 * hi.max(1.0) {
            let m = 0.5 * (lo + hi);
            if slope(m) <= 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        t = lo;
    }
    let out = event_time_by_thinning(
        |u| slope(t + u).max(0.0),
        |_, u1| slope(t + u1).max(0.0),
        window,
        horizon - t,
        rng,
    )?;
    Ok(out.map(|u| t + u))
}
