//! Factorized bouncy particle sampler: one clock per factor, events reflect
//! off the triggering factor's gradient only, and only clocks whose factor
//! touches a changed velocity coordinate are redrawn.

use rand::Rng;
use rand_distr::Exp1;

use super::event_time::convex_slope_event_time;
use super::queue::ClockQueue;
use super::{run_ctpdmp, EventLabel, EventSource, StopRule, Trajectory};
use crate::model::{ExtendedTarget, Flow, State};
use crate::{Error, Result};

pub struct LocalBps {
    target: ExtendedTarget,
    lambda_ref: f64,
    window: f64,
}

impl LocalBps {
    /// The target must carry a factorization into scalar factors that are
    /// convex along rays; that is what makes per-factor clocks exactly
    /// simulable by endpoint-bounded thinning.
    pub fn new(target: ExtendedTarget, lambda_ref: f64) -> Result<Self> {
        assert!(lambda_ref >= 0.0);
        let factors = target
            .potential
            .factors()
            .ok_or(Error::MissingFactorization)?;
        if factors.is_empty() {
            return Err(Error::MissingFactorization);
        }
        for f in factors {
            if !f.is_convex_scalar() {
                return Err(Error::NonConvex);
            }
        }
        Ok(LocalBps {
            target,
            lambda_ref,
            window: 1.0,
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

    /// Intensity of factor `i`: `<grad U_i(x), v>_+`.
    pub fn factor_rate(&self, i: usize, z: &State) -> f64 {
        self.target.potential.factors().unwrap()[i]
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
        let n = self.target.potential.factors().unwrap().len();
        let d = self.target.dim();
        let mut coord_to_factors = vec![Vec::new(); d];
        for (i, f) in self.target.potential.factors().unwrap().iter().enumerate() {
            for &c in f.support() {
                coord_to_factors[c].push(i);
            }
        }
        let mut source = Source {
            s: self,
            now: 0.0,
            queue: ClockQueue::new(n),
            coord_to_factors,
            touched: vec![false; n],
            pending: Pending::Refresh,
            pending_dt: 0.0,
        };
        run_ctpdmp(&mut source, z0, stop, rng)
    }
}

enum Pending {
    Refresh,
    Factor(usize),
}

struct Source<'a> {
    s: &'a LocalBps,
    now: f64,
    queue: ClockQueue,
    coord_to_factors: Vec<Vec<usize>>,
    touched: Vec<bool>,
    pending: Pending,
    pending_dt: f64,
}

impl Source<'_> {
    fn schedule_factor(
        &mut self,
        i: usize,
        z: &State,
        rng: &mut dyn rand::RngCore,
    ) -> Result<()> {
        let f = &self.s.target.potential.factors().unwrap()[i];
        let ray = f.scalar_ray(&z.x, &z.v).expect("factors checked scalar");
        let tau = if ray.wv == 0.0 {
            // the factor's projected coordinate does not move
            None
        } else {
            convex_slope_event_time(
                |t| ray.slope(t),
                self.s.window,
                f64::INFINITY,
                rng,
            )?
        };
        self.queue
            .schedule(i, tau.map_or(f64::INFINITY, |t| self.now + t));
        Ok(())
    }

    fn reschedule_all(&mut self, z: &State, rng: &mut dyn rand::RngCore) -> Result<()> {
        let n = self.s.target.potential.factors().unwrap().len();
        self.queue.clear();
        for i in 0..n {
            self.schedule_factor(i, z, rng)?;
        }
        Ok(())
    }
}

impl EventSource for Source<'_> {
    fn flow(&self) -> Flow {
        Flow::Linear
    }

    fn begin(&mut self, z: &State, rng: &mut dyn rand::RngCore) -> Result<()> {
        self.now = 0.0;
        self.reschedule_all(z, rng)
    }

    fn next_event(
        &mut self,
        _z: &State,
        _horizon: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Option<f64>> {
        let t_ref = if self.s.lambda_ref > 0.0 {
            self.now + rng.sample::<f64, _>(Exp1) / self.s.lambda_ref
        } else {
            f64::INFINITY
        };
        let head = self.queue.peek();
        let (dt, pending) = match head {
            Some((tq, i)) if tq <= t_ref => (tq - self.now, Pending::Factor(i)),
            _ if t_ref.is_finite() => (t_ref - self.now, Pending::Refresh),
            _ => return Ok(None),
        };
        self.pending = pending;
        self.pending_dt = dt.max(0.0);
        Ok(Some(self.pending_dt))
    }

    fn apply(&mut self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<EventLabel> {
        self.now += self.pending_dt;
        match self.pending {
            Pending::Refresh => {
                z.v = self.s.target.velocity.sample(rng);
                self.reschedule_all(z, rng)?;
                Ok(EventLabel::Refresh)
            }
            Pending::Factor(i) => {
                self.queue.pop();
                let factors = self.s.target.potential.factors().unwrap();
                let support: Vec<usize> = factors[i].support().to_vec();
                let mut g = vec![0.0; z.dim()];
                factors[i].add_grad(&z.x, &mut g);
                match crate::bounce::reflect(&g, &z.v) {
                    Ok(v) => z.v = v,
                    Err(_) => {
                        // vanishing factor gradient: the rate is ~0 here, any
                        // support-local involution preserves the target
                        for &c in &support {
                            z.v[c] = -z.v[c];
                        }
                    }
                }
                // redraw clocks of factors sharing a moved coordinate
                let mut affected = Vec::new();
                for &c in &support {
                    for &j in &self.coord_to_factors[c] {
                        if !self.touched[j] {
                            self.touched[j] = true;
                            affected.push(j);
                        }
                    }
                }
                for &j in &affected {
                    self.touched[j] = false;
                    self.schedule_factor(j, z, rng)?;
                }
                Ok(EventLabel::FactorBounce { index: i })
            }
        }
    }
}
