//! Discrete-time samplers. One transition either applies a deterministic,
//! volume-preserving map (accepted with a Metropolis ratio) or, on
//! rejection, draws from an event kernel built so the chain keeps the
//! extended target invariant; the rejection fallback is always the velocity
//! flip `(x, v) -> (x, -v)`.

pub mod gmh;

mod bps;
mod generic;

pub use bps::{
    numdiff_gradient, DtBps, DtGradientFreeBps, DtHamiltonianBps, GradientFreeMode, HamFlow,
};
pub use generic::{
    guided_random_walk, hmc, reflective_slice, EventProposal, GenericDtPdmcmc, ReflectVariant,
};

use crate::model::{ExtendedTarget, Potential, State};
use crate::Result;

/// What a single transition did.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StepKind {
    /// Deterministic map accepted.
    Advance,
    /// Event kernel proposal accepted (new velocity at the same position).
    Bounce,
    /// Event kernel fell back to the velocity flip.
    Flip,
    /// Velocity redrawn from its marginal law.
    Refresh,
}

#[derive(Clone, Copy, Default, Debug)]
pub struct StepCounts {
    pub advance: u64,
    pub bounce: u64,
    pub flip: u64,
    pub refresh: u64,
}

impl StepCounts {
    pub fn record(&mut self, kind: StepKind) {
        match kind {
            StepKind::Advance => self.advance += 1,
            StepKind::Bounce => self.bounce += 1,
            StepKind::Flip => self.flip += 1,
            StepKind::Refresh => self.refresh += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.advance + self.bounce + self.flip + self.refresh
    }

    /// Steps where the deterministic map was rejected: the discrete
    /// analogue of an event.
    pub fn events(&self) -> u64 {
        self.bounce + self.flip
    }
}

/// A discrete-time transition kernel over `(state, rng)`. Implementations
/// hold no per-chain state, so chains can run concurrently off one kernel.
pub trait DiscreteKernel {
    fn target(&self) -> &ExtendedTarget;
    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind>;
}

impl<K: DiscreteKernel + ?Sized> DiscreteKernel for Box<K> {
    fn target(&self) -> &ExtendedTarget {
        (**self).target()
    }
    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        (**self).step(z, rng)
    }
}

impl<K: DiscreteKernel + ?Sized> DiscreteKernel for &K {
    fn target(&self) -> &ExtendedTarget {
        (**self).target()
    }
    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        (**self).step(z, rng)
    }
}

/// Composes a momentum refreshment in front of the wrapped kernel: each
/// transition first redraws `v` from its law with probability `prob`, then
/// takes the inner step. Both pieces preserve the target, so the
/// composition does too. `prob = 1` gives the usual every-step refreshment.
pub struct WithRefresh<K> {
    inner: K,
    prob: f64,
}

impl<K: DiscreteKernel> WithRefresh<K> {
    pub fn new(inner: K, prob: f64) -> Self {
        assert!((0.0..=1.0).contains(&prob));
        WithRefresh { inner, prob }
    }
}

impl<K: DiscreteKernel> DiscreteKernel for WithRefresh<K> {
    fn target(&self) -> &ExtendedTarget {
        self.inner.target()
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        use rand::Rng;
        if self.prob > 0.0 && rng.gen::<f64>() < self.prob {
            z.v = self.inner.target().velocity.sample(rng);
        }
        self.inner.step(z, rng)
    }
}

/// Run `steps` transitions in place, calling `observe` on the state after
/// each one.
pub fn run_chain(
    kernel: &(impl DiscreteKernel + ?Sized),
    z: &mut State,
    steps: usize,
    rng: &mut dyn rand::RngCore,
    mut observe: impl FnMut(&State),
) -> Result<StepCounts> {
    let mut counts = StepCounts::default();
    for _ in 0..steps {
        counts.record(kernel.step(z, rng)?);
        observe(z);
    }
    Ok(counts)
}

/// Convenience: run a chain and collect one coordinate's path.
pub fn collect_coordinate(
    kernel: &(impl DiscreteKernel + ?Sized),
    mut z: State,
    steps: usize,
    index: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<(Vec<f64>, StepCounts)> {
    let mut xs = Vec::with_capacity(steps);
    let counts = run_chain(kernel, &mut z, steps, rng, |s| xs.push(s.x[index]))?;
    Ok((xs, counts))
}

/// Leapfrog integrator for the Hamiltonian `U(x) + |v|^2/2`: `steps`
/// velocity-half/position-full/velocity-half sweeps of size `eps`. Volume
/// preserving, and conjugating by the velocity flip inverts it.
pub fn leapfrog(potential: &Potential, z: &State, eps: f64, steps: usize) -> State {
    let mut x = z.x.clone();
    let mut v = z.v.clone();
    let mut g = vec![0.0; x.len()];
    if steps > 0 {
        potential.grad_into(&x, &mut g);
    }
    for _ in 0..steps {
        for i in 0..x.len() {
            v[i] -= 0.5 * eps * g[i];
            x[i] += eps * v[i];
        }
        potential.grad_into(&x, &mut g);
        for i in 0..x.len() {
            v[i] -= 0.5 * eps * g[i];
        }
    }
    State::new(x, v)
}

/// Deterministic dynamics for the generic discrete-time samplers.
#[derive(Clone, Copy)]
pub enum PhiMap {
    /// `(x, v) -> (x + eps v, v)`.
    Shift { eps: f64 },
    /// Leapfrog targeting `U(x) + |v|^2/2`.
    Leapfrog { eps: f64, steps: usize },
}

impl PhiMap {
    pub fn apply(&self, potential: &Potential, z: &State) -> State {
        match *self {
            PhiMap::Shift { eps } => {
                let x = z.x.iter().zip(&z.v).map(|(x, v)| x + eps * v).collect();
                State::new(x, z.v.clone())
            }
            PhiMap::Leapfrog { eps, steps } => leapfrog(potential, z, eps, steps),
        }
    }
}

/// `ln(1 - e^t)` for `t < 0`, stable near both ends.
pub(crate) fn ln_1m_exp(t: f64) -> f64 {
    debug_assert!(t < 0.0);
    (-t.exp_m1()).ln()
}
