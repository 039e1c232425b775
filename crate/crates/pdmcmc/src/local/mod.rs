//! Factor-local discrete-time samplers. The potential splits as
//! `U(x) = sum_i U_i(x)` with sparse supports; each factor draws its own
//! event indicator per step, and a velocity update built from the firing
//! factors' gradients is accepted so the product target stays invariant.
//! Two implementations avoid touching every factor at every step: one
//! schedules per-factor failure clocks on a priority queue, the other
//! thins the indicator draws against gradient bounds.

mod bernoulli;
mod event_time;

pub use bernoulli::{
    sample_bernoulli_set_binomial, sample_bernoulli_set_poisson, StaticPoissonSet,
};
pub use event_time::{bounded_event_time, exact_logconcave_event_time, CLOCK_CAP};

use std::cell::RefCell;
use std::sync::Arc;

use rand::Rng;

use crate::bounce;
use crate::ct::queue::ClockQueue;
use crate::dt::{ln_1m_exp, DiscreteKernel, StepKind};
use crate::linalg;
use crate::model::{ExtendedTarget, State, VelocityLaw};
use crate::{Error, Result};

/// Reflections preserve speed, so they leave any isotropic velocity law
/// invariant; axis-sign laws only survive them in one dimension where the
/// reflection is the flip.
fn reflection_invariant(law: &VelocityLaw) -> bool {
    match law {
        VelocityLaw::StandardNormal { .. } | VelocityLaw::UniformSphere { .. } => true,
        VelocityLaw::HypercubeCorners { dim } => *dim == 1,
    }
}

fn require_factors(target: &ExtendedTarget) -> Result<usize> {
    match target.potential.factors() {
        Some(fs) if !fs.is_empty() => Ok(fs.len()),
        _ => Err(Error::MissingFactorization),
    }
}

pub(crate) fn require_reflectable(target: &ExtendedTarget) -> Result<()> {
    if reflection_invariant(&target.velocity) {
        Ok(())
    } else {
        Err(Error::Config(
            "reflection events need a velocity law invariant under reflections".into(),
        ))
    }
}

fn shifted(x: &[f64], v: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(v).map(|(x, v)| x + t * v).collect()
}

/// Draw the event indicator of one factor: `Ber([pi(x) - pi(x_fwd)]_+ / pi(x))`.
fn factor_fires(du_fwd: f64, rng: &mut dyn rand::RngCore) -> bool {
    du_fwd > 0.0 && rng.gen::<f64>() < -(-du_fwd).exp_m1()
}

/// Unclamped log of one factor's contribution to the event acceptance,
/// comparing the mirrored move `x - v* eps` against the proposed `x + v eps`.
/// Surviving factors compare clipped densities; firing factors compare the
/// positive gaps. `None` encodes a vanishing ratio.
fn log_event_term(u0: f64, u_fwd: f64, u_back: f64, fired: bool) -> Option<f64> {
    if fired {
        let d_fwd = u_fwd - u0;
        let d_back = u_back - u0;
        if d_back <= 0.0 {
            return None;
        }
        debug_assert!(d_fwd > 0.0, "a factor cannot fire without a forward gap");
        Some(ln_1m_exp(-d_back) - ln_1m_exp(-d_fwd))
    } else {
        Some(u0.max(u_fwd) - u0.max(u_back))
    }
}

/// Generic factor-local sampler: per-factor event indicators, then one
/// joint accept/reject of a caller-supplied event map `psi(z, fired)`.
/// `psi` must have unit Jacobian and invert under conjugation by the
/// velocity flip; under a uniform velocity law it must also preserve
/// speed, since only density ratios at equal speed are meaningful.
pub struct LocalDtPdmcmc {
    target: ExtendedTarget,
    eps: f64,
    psi: Arc<dyn Fn(&State, &[usize]) -> State + Send + Sync>,
}

impl LocalDtPdmcmc {
    pub fn new(
        target: ExtendedTarget,
        eps: f64,
        psi: Arc<dyn Fn(&State, &[usize]) -> State + Send + Sync>,
    ) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("step size {eps} must be positive")));
        }
        require_factors(&target)?;
        Ok(LocalDtPdmcmc { target, eps, psi })
    }
}

/// [`LocalDtPdmcmc`] whose event map reflects the velocity off the summed
/// gradient of the firing factors, falling back to the flip on a flat
/// stretch.
pub fn local_reflection(target: ExtendedTarget, eps: f64) -> Result<LocalDtPdmcmc> {
    require_reflectable(&target)?;
    let potential = target.potential.clone();
    let psi = Arc::new(move |z: &State, fired: &[usize]| {
        let factors = potential.factors().expect("validated at construction");
        let mut g = vec![0.0; z.dim()];
        for &i in fired {
            factors[i].add_grad(&z.x, &mut g);
        }
        let v = bounce::reflect(&g, &z.v)
            .unwrap_or_else(|_| z.v.iter().map(|t| -t).collect());
        State::new(z.x.clone(), v)
    });
    LocalDtPdmcmc::new(target, eps, psi)
}

impl DiscreteKernel for LocalDtPdmcmc {
    fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let factors = self.target.potential.factors().expect("validated");
        let x_fwd = shifted(&z.x, &z.v, self.eps);
        let mut u0 = Vec::with_capacity(factors.len());
        let mut u_fwd = Vec::with_capacity(factors.len());
        let mut fired = Vec::new();
        for (i, f) in factors.iter().enumerate() {
            u0.push(f.eval(&z.x));
            u_fwd.push(f.eval(&x_fwd));
            if factor_fires(u_fwd[i] - u0[i], rng) {
                fired.push(i);
            }
        }
        if fired.is_empty() {
            z.x = x_fwd;
            return Ok(StepKind::Advance);
        }

        let zs = (self.psi)(z, &fired);
        let x_mirror = shifted(&zs.x, &zs.v, -self.eps);
        // single joint ratio over all factors, plus the velocity-density
        // change the event map may have caused
        let mut log_acc = self.target.velocity.log_density_term(&zs.v)
            - self.target.velocity.log_density_term(&z.v);
        let mut dead = false;
        let mut next_fired = fired.iter().copied().peekable();
        for (i, f) in factors.iter().enumerate() {
            let is_fired = next_fired.peek() == Some(&i);
            if is_fired {
                next_fired.next();
            }
            let u_star = f.eval(&zs.x);
            let u_back = f.eval(&x_mirror);
            log_acc += u0[i] - u_star;
            // forward gap measured at the current state, mirrored gap at
            // the proposed one; rebase the forward value so both gaps sit
            // on the proposal's level
            match log_event_term(u_star, u_fwd[i] - u0[i] + u_star, u_back, is_fired) {
                Some(t) => log_acc += t,
                None => {
                    dead = true;
                    break;
                }
            }
        }
        if !dead && rng.gen::<f64>().ln() < log_acc {
            *z = zs;
            Ok(StepKind::Bounce)
        } else {
            z.flip();
            Ok(StepKind::Flip)
        }
    }
}

/// Resolve one event of the factor-local bouncy kernels: pool the firing
/// factors' gradients into a reflection and accept it with the product of
/// per-factor clamped ratios. `u0` and `u_fwd` hand in the factor values
/// at `x` and `x + v eps`, already known to the caller. Shared by the
/// plain, clock-queue and subsampled implementations so they are one
/// transition law.
fn resolve_local_event(
    target: &ExtendedTarget,
    eps: f64,
    z: &mut State,
    fired: &[usize],
    u0: &[f64],
    u_fwd: &[f64],
    rng: &mut dyn rand::RngCore,
) -> Result<StepKind> {
    let factors = target.potential.factors().expect("validated");
    let mut g = vec![0.0; z.dim()];
    for &i in fired {
        factors[i].add_grad(&z.x, &mut g);
    }
    let vs = match bounce::reflect(&g, &z.v) {
        Ok(vs) => vs,
        Err(Error::ZeroGradient { .. }) => {
            z.flip();
            return Ok(StepKind::Flip);
        }
        Err(e) => return Err(e),
    };
    let x_back = shifted(&z.x, &vs, -eps);
    let mut log_acc = 0.0;
    let mut next_fired = fired.iter().copied().peekable();
    let mut dead = false;
    for (i, f) in factors.iter().enumerate() {
        let is_fired = next_fired.peek() == Some(&i);
        if is_fired {
            next_fired.next();
        }
        match log_event_term(u0[i], u_fwd[i], f.eval(&x_back), is_fired) {
            // per-factor clamp: the product of minima
            Some(t) => log_acc += t.min(0.0),
            None => {
                dead = true;
                break;
            }
        }
    }
    if !dead && rng.gen::<f64>().ln() < log_acc {
        z.v = vs;
        Ok(StepKind::Bounce)
    } else {
        z.flip();
        Ok(StepKind::Flip)
    }
}

/// Factor-local bouncy sampler: firing factors pool their gradients into
/// one reflection, accepted with a product of per-factor ratios (each
/// clamped at one, hence never above the joint ratio of
/// [`LocalDtPdmcmc`]).
pub struct LocalBpsDt {
    target: ExtendedTarget,
    eps: f64,
}

impl LocalBpsDt {
    pub fn new(target: ExtendedTarget, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("step size {eps} must be positive")));
        }
        require_factors(&target)?;
        require_reflectable(&target)?;
        Ok(LocalBpsDt { target, eps })
    }
}

impl DiscreteKernel for LocalBpsDt {
    fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let factors = self.target.potential.factors().expect("validated");
        let x_fwd = shifted(&z.x, &z.v, self.eps);
        let mut u0 = Vec::with_capacity(factors.len());
        let mut u_fwd = Vec::with_capacity(factors.len());
        let mut fired = Vec::new();
        for (i, f) in factors.iter().enumerate() {
            u0.push(f.eval(&z.x));
            u_fwd.push(f.eval(&x_fwd));
            if factor_fires(u_fwd[i] - u0[i], rng) {
                fired.push(i);
            }
        }
        if fired.is_empty() {
            z.x = x_fwd;
            return Ok(StepKind::Advance);
        }
        resolve_local_event(&self.target, self.eps, z, &fired, &u0, &u_fwd, rng)
    }
}

/// Clock-queue implementation of [`LocalBpsDt`] with the same transition
/// law: each convex scalar factor's first failure step is drawn in closed
/// form and kept on a priority queue, so advances cost a queue peek
/// instead of a Bernoulli draw per factor. All clocks are redrawn at
/// every event, which keeps the clock field exactly memoryless; clocks
/// saturating at [`CLOCK_CAP`] are recomputed when they come due.
///
/// One instance drives one chain: the clock state lives behind a
/// `RefCell`, and a step whose incoming state does not match the last
/// outgoing one (say after an external velocity refreshment) discards the
/// clocks and rebuilds them.
pub struct PrefetchLocalBps {
    target: ExtendedTarget,
    eps: f64,
    clocks: RefCell<Clocks>,
}

struct Clocks {
    queue: ClockQueue,
    /// Marks clocks scheduled at the cap rather than at a real failure.
    saturated: Vec<bool>,
    /// Advance count; queue entries hold absolute advance indices.
    now: f64,
    /// State the clocks were computed for.
    expected: Option<State>,
}

impl PrefetchLocalBps {
    pub fn new(target: ExtendedTarget, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("step size {eps} must be positive")));
        }
        let n = require_factors(&target)?;
        require_reflectable(&target)?;
        let factors = target.potential.factors().expect("just checked");
        if !factors.iter().all(|f| f.is_convex_scalar()) {
            return Err(Error::NonConvex);
        }
        Ok(PrefetchLocalBps {
            target,
            eps,
            clocks: RefCell::new(Clocks {
                queue: ClockQueue::new(n),
                saturated: vec![false; n],
                now: 0.0,
                expected: None,
            }),
        })
    }

    fn schedule(
        &self,
        clocks: &mut Clocks,
        i: usize,
        z: &State,
        rng: &mut dyn rand::RngCore,
    ) -> Result<()> {
        let factors = self.target.potential.factors().expect("validated");
        let ray = factors[i].scalar_ray(&z.x, &z.v).expect("scalar factor");
        let tau = if ray.wv == 0.0 {
            // the ray never moves this factor
            CLOCK_CAP
        } else {
            exact_logconcave_event_time(|t| ray.value(t), |t| ray.slope(t), self.eps, rng)?
        };
        clocks.saturated[i] = tau >= CLOCK_CAP;
        clocks.queue.schedule(i, clocks.now + tau as f64);
        Ok(())
    }

    fn reschedule_all(
        &self,
        clocks: &mut Clocks,
        z: &State,
        rng: &mut dyn rand::RngCore,
    ) -> Result<()> {
        clocks.queue.clear();
        clocks.now = 0.0;
        for i in 0..clocks.saturated.len() {
            self.schedule(clocks, i, z, rng)?;
        }
        Ok(())
    }
}

impl DiscreteKernel for PrefetchLocalBps {
    fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let clocks = &mut *self.clocks.borrow_mut();
        if clocks.expected.as_ref() != Some(&*z) {
            self.reschedule_all(clocks, z, rng)?;
        }
        let mut fired = Vec::new();
        loop {
            match clocks.queue.peek() {
                Some((t, i)) if t <= clocks.now => {
                    clocks.queue.pop();
                    if clocks.saturated[i] {
                        // truncated clock came due: redraw from the state
                        // it has survived to, which is the current one
                        self.schedule(clocks, i, z, rng)?;
                    } else {
                        fired.push(i);
                    }
                }
                _ if fired.is_empty() => {
                    for (x, v) in z.x.iter_mut().zip(&z.v) {
                        *x += self.eps * v;
                    }
                    clocks.now += 1.0;
                    clocks.expected = Some(z.clone());
                    return Ok(StepKind::Advance);
                }
                _ => break,
            }
        }
        fired.sort_unstable();
        let factors = self.target.potential.factors().expect("validated");
        let x_fwd = shifted(&z.x, &z.v, self.eps);
        let u0: Vec<f64> = factors.iter().map(|f| f.eval(&z.x)).collect();
        let u_fwd: Vec<f64> = factors.iter().map(|f| f.eval(&x_fwd)).collect();
        let kind = resolve_local_event(&self.target, self.eps, z, &fired, &u0, &u_fwd, rng)?;
        // any event outcome changes at least one ray; redrawing every clock
        // keeps the clock field distributed exactly as if freshly built
        self.reschedule_all(clocks, z, rng)?;
        clocks.expected = Some(z.clone());
        Ok(kind)
    }
}

/// Which batched Bernoulli scheme draws the indicator sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetRoute {
    /// One global bound, candidates counted by a Binomial draw.
    Binomial,
    /// Per-factor bounds, candidates counted by a Poisson draw.
    Poisson,
}

/// Subsampling implementation of [`LocalBpsDt`] with the same transition
/// law: the per-factor indicators are drawn through the batched Bernoulli
/// samplers against Lipschitz envelopes `min(1, bound_i(|x| + eps |v|)
/// |v| eps)`, so only candidate factors are evaluated. The same envelope
/// bounds the mirrored ratios of the acceptance stage, since the
/// reflection preserves speed.
pub struct SubsampledLocalBps {
    target: ExtendedTarget,
    eps: f64,
    route: SetRoute,
}

impl SubsampledLocalBps {
    pub fn new(target: ExtendedTarget, eps: f64, route: SetRoute) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("step size {eps} must be positive")));
        }
        require_factors(&target)?;
        require_reflectable(&target)?;
        let factors = target.potential.factors().expect("just checked");
        for (i, f) in factors.iter().enumerate() {
            if !f.has_gradient_bound() {
                return Err(Error::MissingBound { index: i });
            }
        }
        Ok(SubsampledLocalBps { target, eps, route })
    }

    fn envelopes(&self, z: &State) -> Vec<f64> {
        let factors = self.target.potential.factors().expect("validated");
        let speed = linalg::norm(&z.v);
        let reach = linalg::norm(&z.x) + self.eps * speed;
        factors
            .iter()
            .map(|f| {
                let b = f.grad_norm_bound(reach).expect("validated");
                (b * speed * self.eps).min(1.0)
            })
            .collect()
    }

    fn draw_set(
        &self,
        indices: &[usize],
        p_bars: &[f64],
        prob: impl Fn(usize) -> f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<usize>> {
        let local = match self.route {
            SetRoute::Binomial => {
                let p_bar = p_bars.iter().cloned().fold(0.0, f64::max);
                sample_bernoulli_set_binomial(indices.len(), |j| prob(indices[j]), p_bar, rng)?
            }
            SetRoute::Poisson => {
                sample_bernoulli_set_poisson(|j| prob(indices[j]), p_bars, rng)?
            }
        };
        Ok(local.into_iter().map(|j| indices[j]).collect())
    }
}

impl DiscreteKernel for SubsampledLocalBps {
    fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let factors = self.target.potential.factors().expect("validated");
        let m = factors.len();
        let p_bars = self.envelopes(z);
        let x_fwd = shifted(&z.x, &z.v, self.eps);
        let all: Vec<usize> = (0..m).collect();
        // indicator probability [pi(x) - pi(x_fwd)]_+ / pi(x), evaluated
        // only at candidate factors
        let fired = self.draw_set(
            &all,
            &p_bars,
            |i| {
                let du = factors[i].eval(&x_fwd) - factors[i].eval(&z.x);
                if du > 0.0 {
                    -(-du).exp_m1()
                } else {
                    0.0
                }
            },
            rng,
        )?;
        if fired.is_empty() {
            z.x = x_fwd;
            return Ok(StepKind::Advance);
        }

        let mut g = vec![0.0; z.dim()];
        for &i in &fired {
            factors[i].add_grad(&z.x, &mut g);
        }
        let vs = match bounce::reflect(&g, &z.v) {
            Ok(vs) => vs,
            Err(Error::ZeroGradient { .. }) => {
                z.flip();
                return Ok(StepKind::Flip);
            }
            Err(e) => return Err(e),
        };
        let x_back = shifted(&z.x, &vs, -self.eps);

        // firing factors: direct draws against the gap ratio
        for &i in &fired {
            let u0 = factors[i].eval(&z.x);
            let term = log_event_term(u0, factors[i].eval(&x_fwd), factors[i].eval(&x_back), true);
            let keep = term.map_or(0.0, |t| t.min(0.0).exp());
            if rng.gen::<f64>() >= keep {
                z.flip();
                return Ok(StepKind::Flip);
            }
        }
        // surviving factors: thinned draws against the clipped ratio,
        // under the same envelopes (the mirrored move has equal speed)
        let rest: Vec<usize> = (0..m).filter(|i| !fired.contains(i)).collect();
        let rest_bars: Vec<f64> = rest.iter().map(|&i| p_bars[i]).collect();
        let failures = self.draw_set(
            &rest,
            &rest_bars,
            |i| {
                let u0 = factors[i].eval(&z.x);
                let t = log_event_term(u0, factors[i].eval(&x_fwd), factors[i].eval(&x_back), false)
                    .expect("surviving-factor ratio is positive");
                1.0 - t.min(0.0).exp()
            },
            rng,
        )?;
        if failures.is_empty() {
            z.v = vs;
            Ok(StepKind::Bounce)
        } else {
            z.flip();
            Ok(StepKind::Flip)
        }
    }
}
