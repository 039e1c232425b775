//! Zig-zag process: velocities live on the hypercube corners, one clock per
//! coordinate, and an event negates a single velocity coordinate. The
//! coordinate-i intensity is `lambda_i + (v_i dU/dx_i)_+`.

use rand::Rng;
use rand_distr::Exp1;

use super::event_time::convex_slope_event_time;
use super::queue::ClockQueue;
use super::{run_ctpdmp, EventLabel, EventSource, StopRule, Trajectory};
use crate::model::{ExtendedTarget, Flow, State, VelocityLaw};
use crate::{Error, Result};

pub struct ZigZag {
    target: ExtendedTarget,
    lambda: Vec<f64>,
    window: f64,
    coord_factors: Vec<Vec<usize>>,
}

impl ZigZag {
    /// `lambda_ref` is the excess flip rate, applied to every coordinate;
    /// override per coordinate with [`with_flip_rates`](Self::with_flip_rates).
    ///
    /// Each factor must be convex along rays and touch exactly one
    /// coordinate, so that every coordinate's ray slope is nondecreasing and
    /// right-endpoint thinning bounds are exact.
    pub fn new(target: ExtendedTarget, lambda_ref: f64) -> Result<Self> {
        assert!(lambda_ref >= 0.0);
        if !matches!(target.velocity, VelocityLaw::HypercubeCorners { .. }) {
            return Err(Error::Config(
                "zig-zag needs the hypercube-corner velocity law".into(),
            ));
        }
        let d = target.dim();
        let factors = target
            .potential
            .factors()
            .ok_or(Error::MissingFactorization)?;
        let mut coord_factors = vec![Vec::new(); d];
        for (j, f) in factors.iter().enumerate() {
            if !f.is_convex_scalar() {
                return Err(Error::NonConvex);
            }
            if f.support().len() != 1 {
                return Err(Error::Config(
                    "zig-zag needs single-coordinate factors".into(),
                ));
            }
            coord_factors[f.support()[0]].push(j);
        }
        Ok(ZigZag {
            target,
            lambda: vec![lambda_ref; d],
            window: 1.0,
            coord_factors,
        })
    }

    pub fn with_flip_rates(mut self, rates: &[f64]) -> Self {
        assert_eq!(rates.len(), self.target.dim());
        assert!(rates.iter().all(|r| *r >= 0.0));
        self.lambda = rates.to_vec();
        self
    }

    pub fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    /// Gradient part of the coordinate-`i` rate: `(v_i dU/dx_i)_+`.
    pub fn coordinate_rate(&self, i: usize, z: &State) -> f64 {
        let g = self.target.potential.grad(&z.x);
        (z.v[i] * g[i]).max(0.0)
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
            now: 0.0,
            queue: ClockQueue::new(self.target.dim()),
            pending: 0,
            pending_dt: 0.0,
        };
        run_ctpdmp(&mut source, z0, stop, rng)
    }
}

struct Source<'a> {
    s: &'a ZigZag,
    now: f64,
    queue: ClockQueue,
    pending: usize,
    pending_dt: f64,
}

impl Source<'_> {
    fn schedule_coordinate(
        &mut self,
        i: usize,
        z: &State,
        rng: &mut dyn rand::RngCore,
    ) -> Result<()> {
        let factors = self.s.target.potential.factors().unwrap();
        // the coordinate slope is a sum of single-coordinate ray slopes
        let rays: Vec<_> = self.s.coord_factors[i]
            .iter()
            .map(|&j| factors[j].scalar_ray(&z.x, &z.v).unwrap())
            .collect();
        let t_grad = if rays.iter().all(|r| r.wv == 0.0) {
            None
        } else {
            let slope = |t: f64| rays.iter().map(|r| r.slope(t)).sum::<f64>();
            convex_slope_event_time(slope, self.s.window, f64::INFINITY, rng)?
        };
        let t_flip = if self.s.lambda[i] > 0.0 {
            rng.sample::<f64, _>(Exp1) / self.s.lambda[i]
        } else {
            f64::INFINITY
        };
        let tau = t_grad.map_or(t_flip, |t| t.min(t_flip));
        self.queue
            .schedule(i, if tau.is_finite() { self.now + tau } else { f64::INFINITY });
        Ok(())
    }
}

impl EventSource for Source<'_> {
    fn flow(&self) -> Flow {
        Flow::Linear
    }

    fn begin(&mut self, z: &State, rng: &mut dyn rand::RngCore) -> Result<()> {
        self.now = 0.0;
        self.queue.clear();
        for i in 0..z.dim() {
            self.schedule_coordinate(i, z, rng)?;
        }
        Ok(())
    }

    fn next_event(
        &mut self,
        _z: &State,
        _horizon: f64,
        _rng: &mut dyn rand::RngCore,
    ) -> Result<Option<f64>> {
        match self.queue.peek() {
            Some((t, i)) => {
                self.pending = i;
                self.pending_dt = (t - self.now).max(0.0);
                Ok(Some(self.pending_dt))
            }
            None => Ok(None),
        }
    }

    fn apply(&mut self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<EventLabel> {
        self.now += self.pending_dt;
        self.queue.pop();
        let i = self.pending;
        z.v[i] = -z.v[i];
        // other coordinates' slopes only involve their own (unchanged) rays
        self.schedule_coordinate(i, z, rng)?;
        Ok(EventLabel::CoordinateFlip { index: i })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::TestFunction;
    use crate::model::targets;
    use crate::stream::substream;

    fn corners_target(scales: &[f64]) -> ExtendedTarget {
        targets::gaussian_diag(scales)
            .with_velocity(VelocityLaw::HypercubeCorners { dim: scales.len() })
    }

    #[test]
    fn rejects_wrong_velocity_law() {
        assert!(matches!(
            ZigZag::new(targets::isotropic(2), 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_coupled_factors() {
        let t = targets::latent_poisson(targets::PriorKind::Bridge, 4, &[])
            .with_velocity(VelocityLaw::HypercubeCorners { dim: 4 });
        assert!(matches!(ZigZag::new(t, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn events_flip_exactly_one_coordinate() {
        let s = ZigZag::new(corners_target(&[1.0, 0.5, 2.0]), 0.5).unwrap();
        let mut rng = substream(90, 0, 0);
        let z0 = State::new(vec![0.2, -0.1, 0.4], vec![1.0, 1.0, -1.0]);
        let traj = s.run(z0, StopRule::Events(500), &mut rng).unwrap();
        assert_eq!(traj.n_events(), 500);
        for w in traj.segments.windows(2) {
            let end = traj.flow.at(&w[0].start, w[0].duration);
            let next = &w[1].start;
            let index = match w[0].event {
                Some(EventLabel::CoordinateFlip { index }) => index,
                other => panic!("unexpected label {other:?}"),
            };
            for c in 0..3 {
                let expect = if c == index { -end.v[c] } else { end.v[c] };
                assert_eq!(next.v[c], expect);
                assert_eq!(next.x[c], end.x[c]);
                assert_eq!(next.v[c].abs(), 1.0);
            }
        }
    }

    #[test]
    fn stationary_moments_anisotropic() {
        let s = ZigZag::new(corners_target(&[1.0, 0.5]), 0.0).unwrap();
        let mut rng = substream(91, 0, 0);
        let z0 = State::new(vec![0.0, 0.0], vec![1.0, -1.0]);
        let traj = s.run(z0, StopRule::Time(2e4), &mut rng).unwrap();
        let m0 = traj.moment(&TestFunction::Coordinate { index: 0, power: 2 });
        let m1 = traj.moment(&TestFunction::Coordinate { index: 1, power: 2 });
        assert!((m0 - 1.0).abs() < 0.05, "var_0 {m0}");
        assert!((m1 - 0.25).abs() < 0.02, "var_1 {m1}");
        let mean = traj.moment(&TestFunction::Coordinate { index: 0, power: 1 });
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn excess_rate_only_on_flat_factor() {
        // zero potential: flips arrive at the excess rate, one clock per
        // coordinate, so the count over [0, T] is Poisson(d * lambda * T)
        let flat = crate::model::Potential::from_factors(
            2,
            vec![
                crate::model::Factor::scalar(vec![(0, 1.0)], |_| 0.0, |_| 0.0).convex(),
                crate::model::Factor::scalar(vec![(1, 1.0)], |_| 0.0, |_| 0.0).convex(),
            ],
        );
        let t = ExtendedTarget::new(flat, VelocityLaw::HypercubeCorners { dim: 2 });
        let s = ZigZag::new(t, 1.5).unwrap();
        let mut rng = substream(92, 0, 0);
        let z0 = State::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let traj = s.run(z0, StopRule::Time(400.0), &mut rng).unwrap();
        let n = traj.n_events() as f64;
        // mean 1200, sd ~ 35
        assert!((n - 1200.0).abs() < 120.0, "events {n}");
    }

    #[test]
    fn rate_balance_per_coordinate() {
        let s = ZigZag::new(corners_target(&[1.0, 0.7, 1.3]), 0.0).unwrap();
        let mut rng = substream(93, 0, 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let v: Vec<f64> = (0..3)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let z = State::new(x.clone(), v.clone());
            let zf = z.flipped();
            let g = s.target().potential.grad(&x);
            for i in 0..3 {
                let diff = s.coordinate_rate(i, &zf) - s.coordinate_rate(i, &z);
                assert!((diff + v[i] * g[i]).abs() < 1e-12);
            }
        }
    }
}
