//! Accept-the-map-or-event sampler: apply a deterministic map with the
//! usual Metropolis probability; on rejection run an event kernel drawn
//! from a proposal that respects the flip involution, falling back to the
//! bare velocity flip. Guided random walk, HMC and reflective slice
//! sampling are all instances.

use std::sync::Arc;

use rand::Rng;

use super::{ln_1m_exp, DiscreteKernel, PhiMap, StepKind};
use crate::bounce;
use crate::model::{ExtendedTarget, State};
use crate::Result;

pub enum EventProposal {
    /// Propose `(x, -v)`; always accepted.
    FlipVelocity,
    /// A deterministic map `Psi` whose inverse is its flip conjugate
    /// (`Psi^-1 = S Psi S` with `S` the velocity flip).
    Deterministic(Arc<dyn Fn(&State) -> State + Send + Sync>),
}

pub struct GenericDtPdmcmc {
    target: ExtendedTarget,
    phi: PhiMap,
    proposal: EventProposal,
}

impl GenericDtPdmcmc {
    pub fn new(target: ExtendedTarget, phi: PhiMap, proposal: EventProposal) -> Self {
        match phi {
            PhiMap::Shift { eps } | PhiMap::Leapfrog { eps, .. } => assert!(eps > 0.0),
        }
        GenericDtPdmcmc {
            target,
            phi,
            proposal,
        }
    }

    /// Log of the rejection-weighted density `[rho(w) - rho(Phi(w))]_+`,
    /// `None` where it vanishes. This is the invariant law of the states
    /// where the deterministic move is refused, and the event kernel must
    /// hold it in the skewed sense.
    fn log_nu(&self, w: &State) -> Option<f64> {
        let a = self.target.log_rho(w);
        let b = self.target.log_rho(&self.phi.apply(&self.target.potential, w));
        if b >= a {
            None
        } else {
            Some(a + ln_1m_exp(b - a))
        }
    }
}

impl DiscreteKernel for GenericDtPdmcmc {
    fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let z1 = self.phi.apply(&self.target.potential, z);
        let lr = self.target.log_rho(z);
        let lr1 = self.target.log_rho(&z1);
        if rng.gen::<f64>().ln() < lr1 - lr {
            *z = z1;
            return Ok(StepKind::Advance);
        }
        match &self.proposal {
            EventProposal::FlipVelocity => {
                // the mirror proposal weight equals the current one, so the
                // inner acceptance is identically 1
                z.flip();
                Ok(StepKind::Bounce)
            }
            EventProposal::Deterministic(psi) => {
                let zs = psi(z);
                let den = match self.log_nu(z) {
                    Some(d) => d,
                    // unreachable in exact arithmetic: the map was rejected
                    None => {
                        z.flip();
                        return Ok(StepKind::Flip);
                    }
                };
                let accept = match self.log_nu(&zs.flipped()) {
                    Some(num) => rng.gen::<f64>().ln() < num - den,
                    None => false,
                };
                if accept {
                    *z = zs;
                    Ok(StepKind::Bounce)
                } else {
                    z.flip();
                    Ok(StepKind::Flip)
                }
            }
        }
    }
}

/// Straight-line moves of length `eps`, flipping direction on rejection.
pub fn guided_random_walk(target: ExtendedTarget, eps: f64) -> GenericDtPdmcmc {
    GenericDtPdmcmc::new(target, PhiMap::Shift { eps }, EventProposal::FlipVelocity)
}

/// Leapfrog trajectories accepted against the extended target, momentum
/// flipped on rejection. Wrap in [`WithRefresh`](super::WithRefresh) to
/// redraw momenta between trajectories.
pub fn hmc(target: ExtendedTarget, eps: f64, steps: usize) -> GenericDtPdmcmc {
    GenericDtPdmcmc::new(
        target,
        PhiMap::Leapfrog { eps, steps },
        EventProposal::FlipVelocity,
    )
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReflectVariant {
    /// Reflect the velocity off the gradient at the current position.
    Inner,
    /// Step forward, reflect there, and step back with the new velocity.
    Outer,
}

/// Straight-line moves with gradient reflections as the event proposal.
pub fn reflective_slice(
    target: ExtendedTarget,
    eps: f64,
    variant: ReflectVariant,
) -> GenericDtPdmcmc {
    let pot = target.potential.clone();
    let reflect_or_flip = |g: &[f64], v: &[f64]| -> Vec<f64> {
        bounce::reflect(g, v).unwrap_or_else(|_| v.iter().map(|t| -t).collect())
    };
    let psi: Arc<dyn Fn(&State) -> State + Send + Sync> = match variant {
        ReflectVariant::Inner => Arc::new(move |z: &State| {
            let g = pot.grad(&z.x);
            State::new(z.x.clone(), reflect_or_flip(&g, &z.v))
        }),
        ReflectVariant::Outer => Arc::new(move |z: &State| {
            let ahead: Vec<f64> = z.x.iter().zip(&z.v).map(|(x, v)| x + eps * v).collect();
            let g = pot.grad(&ahead);
            let vr = reflect_or_flip(&g, &z.v);
            let x = ahead.iter().zip(&vr).map(|(x, v)| x + eps * v).collect();
            State::new(x, vr)
        }),
    };
    GenericDtPdmcmc::new(
        target,
        PhiMap::Shift { eps },
        EventProposal::Deterministic(psi),
    )
}
