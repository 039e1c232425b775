//! Samplers for targets known only through a continuum of potential slices:
//! `U(x) = int_0^1 U_w(x) dw` with the index `w` ranging over the unit
//! interval under Lebesgue measure. Evaluating the full integral per step is
//! replaced by simulating Poisson point processes over the index space whose
//! void probabilities reproduce the intended acceptance probabilities, so a
//! step touches only finitely many slices.

use std::sync::Arc;

use rand::Rng;
use rand_distr::Poisson;

use crate::bounce;
use crate::dt::{DiscreteKernel, StepKind};
use crate::local::require_reflectable;
use crate::model::{ExtendedTarget, State};
use crate::quadrature;
use crate::{Error, Result};

/// Bound slack absorbing roundoff in envelope comparisons.
const BOUND_TOL: f64 = 1e-9;

type SliceFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type SliceGradFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
type CellBoundFn = Arc<dyn Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync>;

/// A target sliced over the unit index interval: per-index potentials
/// `U_w(x)` whose integral over `w` recovers the aggregate potential of
/// `target`, plus a piecewise envelope enabling Poisson thinning.
///
/// The envelope contract: `cell_bound(j, from, to)` must dominate
/// `U_w(to) - U_w(from)` for every `w` in the `j`-th partition cell. Every
/// point process this module simulates has an intensity dominated by such a
/// difference, so one envelope serves them all.
pub struct OmegaModel {
    target: ExtendedTarget,
    slice: SliceFn,
    slice_grad: SliceGradFn,
    partition: Vec<f64>,
    cell_bound: CellBoundFn,
}

impl OmegaModel {
    pub fn new(
        target: ExtendedTarget,
        slice: SliceFn,
        slice_grad: SliceGradFn,
        partition: Vec<f64>,
        cell_bound: CellBoundFn,
    ) -> Result<Self> {
        if partition.len() < 2
            || partition[0] != 0.0
            || *partition.last().unwrap() != 1.0
            || partition.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config(
                "index partition must increase strictly from 0 to 1".into(),
            ));
        }
        Ok(OmegaModel {
            target,
            slice,
            slice_grad,
            partition,
            cell_bound,
        })
    }

    pub fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    /// Potential of one slice at `x`.
    pub fn slice_potential(&self, w: f64, x: &[f64]) -> f64 {
        (self.slice)(w, x)
    }

    /// Gap between the integrated slices and the aggregate potential at `x`,
    /// by adaptive quadrature; zero up to quadrature error for a consistent
    /// model.
    pub fn aggregate_gap(&self, x: &[f64]) -> f64 {
        let total = quadrature::integrate_adaptive(|w| (self.slice)(w, x), 0.0, 1.0, 1e-8);
        (total - self.target.potential.eval(x)).abs()
    }

    /// `int_0^1 [U_w(to) - U_w(from)]_+ dw`, the mean point count of the
    /// event process for the move `from -> to`.
    pub fn event_intensity(&self, from: &[f64], to: &[f64]) -> f64 {
        quadrature::integrate_adaptive(
            |w| ((self.slice)(w, to) - (self.slice)(w, from)).max(0.0),
            0.0,
            1.0,
            1e-8,
        )
    }

    /// Simulate a Poisson process on the index interval with intensity
    /// `rate(w) dw`, thinning per-cell envelope candidates. The envelope of
    /// cell `j` is `[cell_bound(j, env_from, env_to)]_+`; `rate` must stay
    /// below it on the cell.
    fn sample_points(
        &self,
        env_from: &[f64],
        env_to: &[f64],
        rate: impl Fn(f64) -> f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<f64>> {
        let mut points = Vec::new();
        for j in 0..self.partition.len() - 1 {
            let (a, b) = (self.partition[j], self.partition[j + 1]);
            let env = (self.cell_bound)(j, env_from, env_to).max(0.0);
            if env == 0.0 {
                continue;
            }
            let count = rng.sample(Poisson::new(env * (b - a)).expect("positive mean")) as u64;
            for _ in 0..count {
                let w = a + (b - a) * rng.gen::<f64>();
                let lam = rate(w);
                if lam > env * (1.0 + BOUND_TOL) + f64::MIN_POSITIVE {
                    return Err(Error::BoundViolation {
                        rate: lam,
                        bound: env,
                    });
                }
                if rng.gen::<f64>() * env < lam {
                    points.push(w);
                }
            }
        }
        points.sort_by(f64::total_cmp);
        Ok(points)
    }
}

/// Discrete-time bouncy sampler over a sliced target: an event process over
/// the index space decides between advancing `x` by `eps v` and reflecting
/// `v` off the pooled gradient of the slices that produced points, with a
/// two-stage acceptance (an excess point process, then a product ratio over
/// the points) and the velocity flip as the rejection fallback.
pub struct DoublyStochasticBps {
    model: OmegaModel,
    eps: f64,
}

impl DoublyStochasticBps {
    pub fn new(model: OmegaModel, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("step size {eps} must be positive")));
        }
        require_reflectable(&model.target)?;
        Ok(DoublyStochasticBps { model, eps })
    }

    pub fn model(&self) -> &OmegaModel {
        &self.model
    }
}

impl DiscreteKernel for DoublyStochasticBps {
    fn target(&self) -> &ExtendedTarget {
        &self.model.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let m = &self.model;
        let x_fwd: Vec<f64> = z.x.iter().zip(&z.v).map(|(x, v)| x + self.eps * v).collect();
        let fwd_gap = |w: f64| ((m.slice)(w, &x_fwd) - (m.slice)(w, &z.x)).max(0.0);
        let events = m.sample_points(&z.x, &x_fwd, fwd_gap, rng)?;
        if events.is_empty() {
            z.x = x_fwd;
            return Ok(StepKind::Advance);
        }

        let mut g = vec![0.0; z.dim()];
        for &w in &events {
            (m.slice_grad)(w, &z.x, &mut g);
        }
        let vs = match bounce::reflect(&g, &z.v) {
            Ok(vs) => vs,
            Err(Error::ZeroGradient { .. }) => {
                z.flip();
                return Ok(StepKind::Flip);
            }
            Err(e) => return Err(e),
        };
        let x_mirror: Vec<f64> = z.x.iter().zip(&vs).map(|(x, v)| x - self.eps * v).collect();

        // first stage: void probability of the excess of the mirrored gap
        // over the forward gap
        let excess = m.sample_points(
            &z.x,
            &x_mirror,
            |w| {
                let back = ((m.slice)(w, &x_mirror) - (m.slice)(w, &z.x)).max(0.0);
                (back - fwd_gap(w)).max(0.0)
            },
            rng,
        )?;
        if !excess.is_empty() {
            z.flip();
            return Ok(StepKind::Flip);
        }

        // second stage: product over the event points of mirrored over
        // forward gaps; the forward gap is positive at every kept point
        let mut log_ratio = 0.0;
        for &w in &events {
            let back = ((m.slice)(w, &x_mirror) - (m.slice)(w, &z.x)).max(0.0);
            log_ratio += back.ln() - fwd_gap(w).ln();
        }
        if rng.gen::<f64>().ln() < log_ratio {
            z.v = vs;
            Ok(StepKind::Bounce)
        } else {
            z.flip();
            Ok(StepKind::Flip)
        }
    }
}

/// Metropolis sampler accepting through a point process: a symmetric
/// random-walk proposal is accepted exactly when a Poisson process with
/// intensity `[U_w(x*) - U_w(x)]_+ dw` comes up empty, whose void
/// probability is the usual acceptance ratio. Reversible for the aggregate
/// target; a rejection leaves the state untouched.
pub struct NoisyMetropolis {
    model: OmegaModel,
    scale: f64,
}

impl NoisyMetropolis {
    pub fn new(model: OmegaModel, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!(
                "proposal scale {scale} must be positive"
            )));
        }
        Ok(NoisyMetropolis { model, scale })
    }

    pub fn model(&self) -> &OmegaModel {
        &self.model
    }

    /// One proposal; returns whether it was accepted.
    pub fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<bool> {
        let x_star: Vec<f64> = z
            .x
            .iter()
            .map(|x| x + self.scale * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let m = &self.model;
        let points = m.sample_points(
            &z.x,
            &x_star,
            |w| ((m.slice)(w, &x_star) - (m.slice)(w, &z.x)).max(0.0),
            rng,
        )?;
        if points.is_empty() {
            z.x = x_star;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Conditional acceptance probability of the proposal `x -> x_star`,
    /// the void probability of the point process.
    pub fn acceptance(&self, x: &[f64], x_star: &[f64]) -> f64 {
        (-self.model.event_intensity(x, x_star)).exp()
    }
}
