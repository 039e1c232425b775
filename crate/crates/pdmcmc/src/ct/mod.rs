//! Continuous-time samplers: deterministic flow between events, event times
//! drawn from state-dependent intensities, velocity jumps at events.

mod event_time;
mod global;
mod hamiltonian;
mod local;
pub(crate) mod queue;
mod zigzag;

pub use event_time::{
    affine_slope_event_time, convex_slope_event_time, event_time_by_inversion,
    event_time_by_thinning, invert_integrated_rate,
};
pub use global::{GlobalBps, RayRule};
pub use hamiltonian::HamiltonianBps;
pub use local::LocalBps;
pub use zigzag::ZigZag;

use std::sync::Arc;

use crate::model::{Flow, State};
use crate::quadrature;
use crate::{Error, Result};

/// What happened at an event time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventLabel {
    Bounce,
    Refresh,
    /// Zig-Zag style single-coordinate velocity flip.
    CoordinateFlip { index: usize },
    /// Bounce off one factor's gradient.
    FactorBounce { index: usize },
}

#[derive(Clone, Copy, Debug)]
pub enum StopRule {
    /// Run for this much process time.
    Time(f64),
    /// Run until this many events have fired.
    Events(usize),
}

/// One inter-event stretch of deterministic motion. The segment covers
/// `[0, duration]` from `start`; `event` labels the jump ending it, absent
/// only when the time budget truncates the run.
#[derive(Clone, Debug)]
pub struct Segment {
    pub start: State,
    pub duration: f64,
    pub event: Option<EventLabel>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub flow: Flow,
    pub segments: Vec<Segment>,
    pub total_time: f64,
}

/// Test function for path averages.
#[derive(Clone)]
pub enum TestFunction {
    /// `f(x) = x_i^p`.
    Coordinate { index: usize, power: u32 },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Coordinate { index, power } => x[*index].powi(*power as i32),
            TestFunction::Custom(f) => f(x),
        }
    }
}

impl Trajectory {
    pub fn n_events(&self) -> usize {
        self.segments.iter().filter(|s| s.event.is_some()).count()
    }

    pub fn n_events_matching(&self, pred: impl Fn(&EventLabel) -> bool) -> usize {
        self.segments
            .iter()
            .filter_map(|s| s.event.as_ref())
            .filter(|e| pred(e))
            .count()
    }

    pub fn end_state(&self) -> Option<State> {
        self.segments
            .last()
            .map(|s| self.flow.at(&s.start, s.duration))
    }

    /// State at absolute time `t` in `[0, total_time]`.
    pub fn state_at(&self, t: f64) -> Option<State> {
        if t < 0.0 {
            return None;
        }
        let mut t0 = 0.0;
        for s in &self.segments {
            if t <= t0 + s.duration {
                return Some(self.flow.at(&s.start, t - t0));
            }
            t0 += s.duration;
        }
        None
    }

    /// States at times `stride, 2 stride, ...` up to the total time.
    pub fn snapshots(&self, stride: f64) -> Vec<State> {
        assert!(stride > 0.0);
        let mut out = Vec::new();
        let mut next = stride;
        let mut t0 = 0.0;
        for s in &self.segments {
            while next <= t0 + s.duration {
                out.push(self.flow.at(&s.start, next - t0));
                next += stride;
            }
            t0 += s.duration;
        }
        out
    }

    pub fn coordinate_snapshots(&self, index: usize, stride: f64) -> Vec<f64> {
        self.snapshots(stride).iter().map(|z| z.x[index]).collect()
    }

    /// Time average `(1/T) \int f(x_t) dt`. Linear segments integrate
    /// coordinate monomials up to degree 2 in closed form; everything else
    /// goes through quadrature.
    pub fn moment(&self, f: &TestFunction) -> f64 {
        assert!(
            self.total_time > 0.0,
            "time average of an empty trajectory"
        );
        let mut acc = 0.0;
        for s in &self.segments {
            acc += segment_integral(self.flow, s, f);
        }
        acc / self.total_time
    }

    /// Time averages of the path truncated at each listed event count,
    /// for error-versus-event-index curves. Checkpoints must increase;
    /// ones past the event count are dropped.
    pub fn moment_at_events(&self, f: &TestFunction, checkpoints: &[usize]) -> Vec<(usize, f64)> {
        debug_assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
        let mut out = Vec::new();
        let mut want = checkpoints.iter().copied().peekable();
        let mut acc = 0.0;
        let mut t = 0.0;
        let mut events = 0usize;
        for s in &self.segments {
            acc += segment_integral(self.flow, s, f);
            t += s.duration;
            if s.event.is_some() {
                events += 1;
                if want.peek() == Some(&events) {
                    want.next();
                    if t > 0.0 {
                        out.push((events, acc / t));
                    }
                }
            }
        }
        out
    }
}

fn segment_integral(flow: Flow, s: &Segment, f: &TestFunction) -> f64 {
    let d = s.duration;
    if d == 0.0 {
        return 0.0;
    }
    if flow == Flow::Linear {
        if let TestFunction::Coordinate { index, power } = f {
            let x = s.start.x[*index];
            let v = s.start.v[*index];
            match power {
                0 => return d,
                1 => return x * d + 0.5 * v * d * d,
                2 => return x * x * d + x * v * d * d + v * v * d * d * d / 3.0,
                _ => {}
            }
        }
    }
    quadrature::integrate_smooth(|t| f.eval(&flow.at(&s.start, t).x), 0.0, d)
}

/// One source of events driving a continuous-time run. Implementations may
/// carry per-run state (clocks, queues) initialized in [`EventSource::begin`].
pub trait EventSource {
    fn flow(&self) -> Flow;

    /// Waiting time from the current state `z` to the next event, or `None`
    /// when no event fires within `horizon` time units of flow.
    fn next_event(
        &mut self,
        z: &State,
        horizon: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Option<f64>>;

    /// Transform the state already advanced to the event time.
    fn apply(&mut self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<EventLabel>;

    fn begin(&mut self, _z: &State, _rng: &mut dyn rand::RngCore) -> Result<()> {
        Ok(())
    }
}

/// Drive an event source from `z0` until the stop rule is met.
pub fn run_ctpdmp(
    source: &mut dyn EventSource,
    z0: State,
    stop: StopRule,
    rng: &mut dyn rand::RngCore,
) -> Result<Trajectory> {
    let flow = source.flow();
    source.begin(&z0, rng)?;
    let mut segments = Vec::new();
    let mut z = z0;
    let mut total = 0.0;
    let mut events = 0usize;
    loop {
        let remaining = match stop {
            StopRule::Time(t) => t - total,
            StopRule::Events(_) => f64::INFINITY,
        };
        if remaining <= 0.0 {
            break;
        }
        let start = z.clone();
        match source.next_event(&z, remaining, rng)? {
            Some(dt) if dt < remaining => {
                flow.advance(&mut z, dt);
                let label = source.apply(&mut z, rng)?;
                total += dt;
                events += 1;
                segments.push(Segment {
                    start,
                    duration: dt,
                    event: Some(label),
                });
                if let StopRule::Events(n) = stop {
                    if events >= n {
                        break;
                    }
                }
            }
            _ => match stop {
                StopRule::Time(_) => {
                    segments.push(Segment {
                        start,
                        duration: remaining,
                        event: None,
                    });
                    total += remaining;
                    break;
                }
                StopRule::Events(_) => {
                    return Err(Error::Config(
                        "event budget unreachable: the sampler produces no further events"
                            .into(),
                    ));
                }
            },
        }
    }
    Ok(Trajectory {
        flow,
        segments,
        total_time: total,
    })
}
