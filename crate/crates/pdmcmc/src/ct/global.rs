//! Bouncy particle sampler with a single event clock: linear flow, specular
//! reflections off the full gradient, Poisson refreshment.

use rand::Rng;
use rand_distr::Exp1;

use super::event_time::{affine_slope_event_time, convex_slope_event_time};
use super::{run_ctpdmp, EventLabel, EventSource, StopRule, Trajectory};
use crate::bounce::{bounce_or_flip, BounceKind};
use crate::model::{ExtendedTarget, Flow, State};
use crate::{linalg, Result};

/// How bounce times are drawn along a ray.
#[derive(Clone, Copy, Debug)]
pub enum RayRule {
    /// The directional slope `t -> <grad U(x+tv), v>` is affine along every
    /// ray (quadratic potentials): exact inversion of the integrated rate.
    AffineSlope,
    /// The slope is nondecreasing along rays (convex potentials): windowed
    /// thinning bounded by the right window endpoint.
    ConvexSlope { window: f64 },
}

pub struct GlobalBps {
    target: ExtendedTarget,
    lambda_ref: f64,
    rule: RayRule,
    kind: BounceKind,
}

impl GlobalBps {
    pub fn new(target: ExtendedTarget, lambda_ref: f64) -> Self {
        assert!(lambda_ref >= 0.0);
        GlobalBps {
            target,
            lambda_ref,
            rule: RayRule::ConvexSlope { window: 1.0 },
            kind: BounceKind::Reflect,
        }
    }

    pub fn with_rule(mut self, rule: RayRule) -> Self {
        self.rule = rule;
        self
    }

    /// Swap the velocity jump applied at bounce events. The randomized
    /// kinds resample components from the rate-weighted exit law, which is
    /// only available under a standard normal velocity law.
    pub fn with_bounce(mut self, kind: BounceKind) -> Result<Self> {
        kind.validate()?;
        if kind.is_randomized()
            && !matches!(self.target.velocity, crate::model::VelocityLaw::StandardNormal { .. })
        {
            return Err(crate::Error::Config(
                "randomized bounce kinds need a standard normal velocity law".into(),
            ));
        }
        self.kind = kind;
        Ok(self)
    }

    pub fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    /// Bounce intensity `<grad U(x), v>_+`.
    pub fn bounce_rate(&self, z: &State) -> f64 {
        self.target
            .potential
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
            pending: EventLabel::Refresh,
        };
        run_ctpdmp(&mut source, z0, stop, rng)
    }
}

struct Source<'a> {
    s: &'a GlobalBps,
    pending: EventLabel,
}

impl EventSource for Source<'_> {
    fn flow(&self) -> Flow {
        Flow::Linear
    }

    fn next_event(
        &mut self,
        z: &State,
        horizon: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Option<f64>> {
        let t_ref = if self.s.lambda_ref > 0.0 {
            rng.sample::<f64, _>(Exp1) / self.s.lambda_ref
        } else {
            f64::INFINITY
        };
        // the bounce clock only matters up to the refresh time
        let cap = horizon.min(t_ref);
        let slope = |t: f64| {
            let shifted = linalg::add_scaled(&z.x, t, &z.v);
            self.s.target.potential.directional_derivative(&shifted, &z.v)
        };
        let t_bounce = match self.s.rule {
            RayRule::AffineSlope => {
                let a = slope(0.0);
                let b = slope(1.0) - a;
                let e: f64 = rng.sample(Exp1);
                affine_slope_event_time(a, b, e)
            }
            RayRule::ConvexSlope { window } => convex_slope_event_time(slope, window, cap, rng)?,
        };
        match t_bounce {
            Some(tb) if tb < t_ref => {
                self.pending = EventLabel::Bounce;
                Ok(Some(tb))
            }
            _ if t_ref.is_finite() => {
                self.pending = EventLabel::Refresh;
                Ok(Some(t_ref))
            }
            _ => Ok(None),
        }
    }

    fn apply(&mut self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<EventLabel> {
        match self.pending {
            EventLabel::Refresh => {
                z.v = self.s.target.velocity.sample(rng);
            }
            EventLabel::Bounce => {
                let g = self.s.target.potential.grad(&z.x);
                z.v = bounce_or_flip(self.s.kind, &g, &z.v, rng);
            }
            _ => unreachable!(),
        }
        Ok(self.pending)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::TestFunction;
    use crate::model::targets;
    use crate::stream::substream;
    use rand_distr::StandardNormal;

    #[test]
    fn rate_balance_identity() {
        // lambda(x,-v) - lambda(x,v) = -<grad U(x), v>
        let s = GlobalBps::new(targets::funnel(4), 1.0);
        let mut rng = substream(70, 0, 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let v: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let z = State::new(x.clone(), v.clone());
            let zf = z.flipped();
            let dir = s.target().potential.directional_derivative(&x, &v);
            let diff = s.bounce_rate(&zf) - s.bounce_rate(&z);
            assert!((diff + dir).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_second_moment() {
        let s = GlobalBps::new(targets::isotropic(2), 1.0);
        let mut rng = substream(71, 0, 0);
        let z0 = State::new(vec![0.0, 0.0], vec![1.0, -1.0]);
        let traj = s.run(z0, StopRule::Time(1e4), &mut rng).unwrap();
        let m2 = traj.moment(&TestFunction::Coordinate { index: 0, power: 2 });
        assert!((m2 - 1.0).abs() < 0.05, "second moment {m2}");
    }

    #[test]
    fn exact_and_thinned_clocks_agree() {
        // same Gaussian target, both ray rules: matching long-run moments
        let mut rng = substream(72, 0, 0);
        let z0 = State::new(vec![0.5, -0.5], vec![1.0, 0.3]);
        let thinned = GlobalBps::new(targets::gaussian_diag(&[1.0, 0.5]), 1.0);
        let m_thin = thinned
            .run(z0.clone(), StopRule::Time(8e3), &mut rng)
            .unwrap()
            .moment(&TestFunction::Coordinate { index: 1, power: 2 });
        let exact = GlobalBps::new(targets::gaussian_diag(&[1.0, 0.5]), 1.0)
            .with_rule(RayRule::AffineSlope);
        let m_exact = exact
            .run(z0, StopRule::Time(8e3), &mut rng)
            .unwrap()
            .moment(&TestFunction::Coordinate { index: 1, power: 2 });
        assert!((m_thin - 0.25).abs() < 0.02, "thinned {m_thin}");
        assert!((m_exact - 0.25).abs() < 0.02, "exact {m_exact}");
    }

    #[test]
    fn bounces_preserve_speed() {
        // no refreshment: |v| is invariant across every event
        let s = GlobalBps::new(targets::isotropic(3), 0.0);
        let mut rng = substream(73, 0, 0);
        let z0 = State::new(vec![1.0, 0.0, -1.0], vec![0.6, 0.8, 0.0]);
        let traj = s.run(z0, StopRule::Time(200.0), &mut rng).unwrap();
        assert!(traj.n_events() > 50);
        for seg in &traj.segments {
            assert!((linalg::norm(&seg.start.v) - 1.0).abs() < 1e-9);
            assert_eq!(seg.event.unwrap_or(EventLabel::Bounce), EventLabel::Bounce);
        }
    }

    #[test]
    fn randomized_bounces_hold_the_target() {
        // redrawing components from the exit law keeps the chain ergodic
        // without any refreshment at all
        for (role, kind) in [BounceKind::Independent, BounceKind::ReverseParallel]
            .into_iter()
            .enumerate()
        {
            let s = GlobalBps::new(targets::isotropic(3), 0.0)
                .with_rule(RayRule::AffineSlope)
                .with_bounce(kind)
                .unwrap();
            let mut rng = substream(75, role as u64, 0);
            let z0 = State::new(vec![0.3, -0.2, 0.1], vec![0.9, 0.1, -0.4]);
            let traj = s.run(z0, StopRule::Time(8e3), &mut rng).unwrap();
            let m2 = traj.moment(&crate::ct::TestFunction::Coordinate { index: 0, power: 2 });
            assert!((m2 - 1.0).abs() < 0.08, "{kind:?}: {m2}");
        }
    }

    #[test]
    fn flip_without_refreshment_keeps_its_line() {
        let s = GlobalBps::new(targets::isotropic(3), 0.0)
            .with_bounce(BounceKind::Flip)
            .unwrap();
        let mut rng = substream(76, 0, 0);
        let v0 = vec![0.6, 0.8, 0.0];
        let z0 = State::new(vec![1.0, 0.0, -1.0], v0.clone());
        let traj = s.run(z0, StopRule::Events(200), &mut rng).unwrap();
        for seg in &traj.segments {
            let same: f64 = seg.start.v.iter().zip(&v0).map(|(a, b)| (a.abs() - b).powi(2)).sum();
            assert!(same < 1e-18, "velocity left the +-v0 pair");
        }
    }

    #[test]
    fn randomized_bounce_needs_gaussian_velocities() {
        let corners = targets::isotropic(2)
            .with_velocity(crate::model::VelocityLaw::HypercubeCorners { dim: 2 });
        assert!(GlobalBps::new(corners, 1.0)
            .with_bounce(BounceKind::Independent)
            .is_err());
    }

    #[test]
    fn refresh_only_flat_potential() {
        let flat = crate::model::ExtendedTarget::new(
            crate::model::Potential::new(2, |_| 0.0, |_, g| g.fill(0.0)),
            crate::model::VelocityLaw::StandardNormal { dim: 2 },
        );
        let s = GlobalBps::new(flat, 2.0);
        let mut rng = substream(74, 0, 0);
        let z0 = State::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let traj = s.run(z0, StopRule::Time(500.0), &mut rng).unwrap();
        let refreshes = traj.n_events_matching(|e| *e == EventLabel::Refresh);
        assert_eq!(refreshes, traj.n_events());
        // Poisson(1000) count: within 5 sigma
        assert!((refreshes as f64 - 1000.0).abs() < 160.0, "{refreshes}");
    }
}
