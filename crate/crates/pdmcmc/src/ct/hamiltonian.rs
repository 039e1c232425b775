//! Bouncy particle sampler riding the Hamiltonian flow of a unit Gaussian:
//! between events the state rotates, conserving `|x|^2 + |v|^2`, and the
//! bounce rate is driven only by the potential's residual above `|x|^2/2`.
//!
//! Each residual factor's projected coordinate oscillates as
//! `w(t) = r cos(t - phase)` with amplitude `r = hypot(<w,x>, <w,v>)`, fixed
//! within a segment. The factor's rate contribution is therefore bounded by
//! `r * B(r)` with `B` the factor's slope bound, and window-local bounds
//! tighten that on the parts of the cycle the window actually visits.

use rand::Rng;
use rand_distr::Exp1;

use super::event_time::CLOCK_HORIZON;
use super::{run_ctpdmp, EventLabel, EventSource, StopRule, Trajectory};
use crate::bounce::{bounce_or_flip, BounceKind};
use crate::model::{ExtendedTarget, Flow, State, VelocityLaw};
use crate::{Error, Result};

pub struct HamiltonianBps {
    target: ExtendedTarget,
    lambda_ref: f64,
    kind: BounceKind,
    window: f64,
}

impl HamiltonianBps {
    pub fn new(target: ExtendedTarget, lambda_ref: f64, kind: BounceKind) -> Result<Self> {
        assert!(lambda_ref >= 0.0);
        if !matches!(target.velocity, VelocityLaw::StandardNormal { .. }) {
            return Err(Error::Config(
                "rotation-flow sampler needs the standard normal velocity law".into(),
            ));
        }
        let residual = target.residual.as_ref().ok_or(Error::MissingFactorization)?;
        for (index, f) in residual.factors.iter().enumerate() {
            if !f.is_scalar() {
                return Err(Error::Config(
                    "rotation-flow thinning needs scalar residual factors".into(),
                ));
            }
            if !f.has_gradient_bound() {
                return Err(Error::MissingBound { index });
            }
        }
        Ok(HamiltonianBps {
            target,
            lambda_ref,
            kind,
            window: 0.5,
        })
    }

    pub fn with_window(mut self, window: f64) -> Self {
        assert!(window > 0.0);
        self.window = window;
        self
    }

    pub fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    /// `<grad (U - |x|^2/2), v>_+`: the event intensity net of refreshment.
    pub fn bounce_rate(&self, z: &State) -> f64 {
        self.target
            .residual
            .as_ref()
            .unwrap()
            .directional_derivative(&z.x, &z.v)
            .max(0.0)
    }

    pub fn run(
        &self,
        z0: State,
        stop: StopRule,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Trajectory> {
        assert_eq!(z0.dim(), self.target.dim());
        let mut source = Source {
            s: self,
            pending: Pending::Refresh,
        };
        run_ctpdmp(&mut source, z0, stop, rng)
    }
}

/// Does `theta + 2 pi k` hit `[lo, hi]` for some integer `k`?
fn interval_hits(lo: f64, hi: f64, theta: f64) -> bool {
    let tau = std::f64::consts::TAU;
    ((hi - theta) / tau).floor() >= ((lo - theta) / tau).ceil()
}

/// Range of `cos` over `[lo, hi]`.
fn cos_range(lo: f64, hi: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let max = if interval_hits(lo, hi, 0.0) {
        1.0
    } else {
        lo.cos().max(hi.cos())
    };
    let min = if interval_hits(lo, hi, pi) {
        -1.0
    } else {
        lo.cos().min(hi.cos())
    };
    (min, max)
}

/// Max of `|sin|` over `[lo, hi]`.
fn max_abs_sin(lo: f64, hi: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if interval_hits(lo, hi, 0.5 * pi) || interval_hits(lo, hi, -0.5 * pi) {
        1.0
    } else {
        lo.sin().abs().max(hi.sin().abs())
    }
}

struct Proj {
    r: f64,
    phase: f64,
    /// `r * B(r)`: dominates this factor's rate contribution at any time.
    amp: f64,
    convex: bool,
}

enum Pending {
    Bounce,
    Refresh,
}

struct Source<'a> {
    s: &'a HamiltonianBps,
    pending: Pending,
}

impl EventSource for Source<'_> {
    fn flow(&self) -> Flow {
        Flow::Rotation
    }

    fn next_event(
        &mut self,
        z: &State,
        horizon: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Option<f64>> {
        let s = self.s;
        let t_ref = if s.lambda_ref > 0.0 {
            rng.sample::<f64, _>(Exp1) / s.lambda_ref
        } else {
            f64::INFINITY
        };
        let factors = &s.target.residual.as_ref().unwrap().factors;
        let rays: Vec<_> = factors
            .iter()
            .map(|f| f.scalar_ray(&z.x, &z.v).unwrap())
            .collect();
        let projs: Vec<Proj> = rays
            .iter()
            .zip(factors.iter())
            .map(|(ray, f)| {
                let r = ray.w0.hypot(ray.wv);
                Proj {
                    r,
                    phase: ray.wv.atan2(ray.w0),
                    amp: r * ray.slope_bound(r).unwrap(),
                    convex: f.is_convex_scalar(),
                }
            })
            .collect();
        let total_amp: f64 = projs.iter().map(|p| p.amp).sum();
        // rate along the rotated path; each projected coordinate follows
        // w_j(t) = r cos(t - phase), w_j'(t) = -r sin(t - phase)
        let chi = |t: f64| -> f64 {
            rays.iter()
                .zip(&projs)
                .map(|(ray, p)| {
                    let (sin, cos) = (t - p.phase).sin_cos();
                    ray.profile_slope(p.r * cos) * (-p.r * sin)
                })
                .sum()
        };
        let cap = horizon.min(t_ref).min(CLOCK_HORIZON);
        if total_amp > 0.0 {
            let mut t = 0.0;
            while t < cap {
                let t1 = (t + s.window).min(cap);
                let mut bar = 0.0;
                for (ray, p) in rays.iter().zip(&projs) {
                    if p.amp == 0.0 {
                        continue;
                    }
                    let (lo, hi) = (t - p.phase, t1 - p.phase);
                    let speed = p.r * max_abs_sin(lo, hi);
                    let slope_max = if p.convex {
                        // convex profile: |f'| peaks at an end of the w-range
                        let (cmin, cmax) = cos_range(lo, hi);
                        ray.profile_slope(p.r * cmin)
                            .abs()
                            .max(ray.profile_slope(p.r * cmax).abs())
                    } else {
                        ray.slope_bound(p.r).unwrap()
                    };
                    bar += (slope_max * speed).min(p.amp);
                }
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
                let lam = chi(t).max(0.0);
                if lam > bar * (1.0 + 1e-9) {
                    return Err(Error::BoundViolation {
                        rate: lam,
                        bound: bar,
                    });
                }
                if rng.gen::<f64>() * bar < lam {
                    self.pending = Pending::Bounce;
                    return Ok(Some(t));
                }
            }
        }
        if t_ref.is_finite() {
            self.pending = Pending::Refresh;
            Ok(Some(t_ref))
        } else {
            Ok(None)
        }
    }

    fn apply(&mut self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<EventLabel> {
        match self.pending {
            Pending::Refresh => {
                z.v = self.s.target.velocity.sample(rng);
                Ok(EventLabel::Refresh)
            }
            Pending::Bounce => {
                let mut g = vec![0.0; z.dim()];
                self.s
                    .target
                    .residual
                    .as_ref()
                    .unwrap()
                    .grad_into(&z.x, &mut g);
                z.v = bounce_or_flip(self.s.kind, &g, &z.v, rng);
                Ok(EventLabel::Bounce)
            }
        }
    }
}
