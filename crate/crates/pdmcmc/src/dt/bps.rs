//! Discrete-time bouncy samplers: straight-line moves with a bounce kernel
//! applied on rejection, a variant whose base move is the rotation (or its
//! leapfrog discretization) matched to a Gaussian reference, and two
//! velocity updates that need no exact gradient.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ln_1m_exp, DiscreteKernel, StepKind};
use crate::bounce::{self, BounceKind};
use crate::linalg;
use crate::model::{ExtendedTarget, Flow, Potential, State, VelocityLaw};
use crate::{Error, Result};

/// Straight-line moves of length `eps`; on rejection a bounce proposal of
/// the chosen kind is accepted against the rejection-weighted law, with the
/// velocity flip as fallback.
pub struct DtBps {
    target: ExtendedTarget,
    eps: f64,
    kind: BounceKind,
}

impl DtBps {
    pub fn new(target: ExtendedTarget, eps: f64, kind: BounceKind) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("step size {eps} must be positive")));
        }
        kind.validate()?;
        if kind.is_randomized()
            && !matches!(target.velocity, VelocityLaw::StandardNormal { .. })
        {
            return Err(Error::Config(
                "randomized bounce kinds need a standard normal velocity law".into(),
            ));
        }
        Ok(DtBps { target, eps, kind })
    }
}

impl DiscreteKernel for DtBps {
    fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let pot = &self.target.potential;
        let eps = self.eps;
        let u0 = pot.eval(&z.x);
        let x1: Vec<f64> = z.x.iter().zip(&z.v).map(|(x, v)| x + eps * v).collect();
        let u1 = pot.eval(&x1);
        if rng.gen::<f64>().ln() < u0 - u1 {
            z.x = x1;
            return Ok(StepKind::Advance);
        }
        if self.kind == BounceKind::Flip {
            // the flip proposal's mirror weight equals its forward weight
            z.flip();
            return Ok(StepKind::Bounce);
        }
        let g = pot.grad(&z.x);
        let vs = match bounce::bounce(self.kind, &g, &z.v, rng) {
            Ok(vs) => vs,
            Err(Error::ZeroGradient { .. }) => {
                // the move was refused on a flat stretch; the flip is the
                // only proposal with a well-defined weight there
                z.flip();
                return Ok(StepKind::Bounce);
            }
            Err(e) => return Err(e),
        };
        // log of [pi(x) - pi(x - vs eps)]_+ relative to pi(x); rejection
        // guarantees the matching forward gap at x + v eps is positive
        let back: Vec<f64> = z.x.iter().zip(&vs).map(|(x, v)| x - eps * v).collect();
        let du_back = pot.eval(&back) - u0;
        let log_den = ln_1m_exp(u0 - u1);
        let log_beta = if du_back <= 0.0 {
            None
        } else {
            let log_num = ln_1m_exp(-du_back);
            if self.kind == BounceKind::Reflect {
                // deterministic proposal: the weights beyond the gap cancel
                Some(log_num - log_den)
            } else {
                // skew-balanced kernels: the proposal-density ratio equals
                // the ratio of gradient projections; both must be positive
                // for the balance identity to apply (the excluded set is
                // flip-symmetric, so sending it to the flip is exact)
                let fwd = linalg::dot(&g, &z.v);
                let rev = -linalg::dot(&g, &vs);
                if fwd <= 0.0 || rev <= 0.0 {
                    None
                } else {
                    Some(log_num + fwd.ln() - log_den - rev.ln())
                }
            }
        };
        let accept = match log_beta {
            Some(lb) => rng.gen::<f64>().ln() < lb,
            None => false,
        };
        if accept {
            z.v = vs;
            Ok(StepKind::Bounce)
        } else {
            z.flip();
            Ok(StepKind::Flip)
        }
    }
}

/// Base move for [`DtHamiltonianBps`]: dynamics of the quadratic reference
/// `(|x|^2 + |v|^2)/2`, either exact or discretized.
#[derive(Clone, Copy, Debug)]
pub enum HamFlow {
    /// Exact unit-frequency rotation for time `eps`.
    Rotation { eps: f64 },
    /// `steps` leapfrog sweeps of size `eps` with force `-x`.
    Leapfrog { eps: f64, steps: usize },
}

impl HamFlow {
    fn validate(&self) -> Result<()> {
        let (eps, steps) = match *self {
            HamFlow::Rotation { eps } => (eps, 1),
            HamFlow::Leapfrog { eps, steps } => (eps, steps),
        };
        if !(eps > 0.0) {
            return Err(Error::Config(format!("flow time {eps} must be positive")));
        }
        if steps == 0 {
            return Err(Error::Config("leapfrog needs at least one step".into()));
        }
        Ok(())
    }

    pub fn apply(&self, z: &State) -> State {
        match *self {
            HamFlow::Rotation { eps } => Flow::Rotation.at(z, eps),
            HamFlow::Leapfrog { eps, steps } => {
                let mut w = z.clone();
                for _ in 0..steps {
                    for (v, x) in w.v.iter_mut().zip(&w.x) {
                        *v -= 0.5 * eps * x;
                    }
                    for (x, v) in w.x.iter_mut().zip(&w.v) {
                        *x += eps * v;
                    }
                    for (v, x) in w.v.iter_mut().zip(&w.x) {
                        *v -= 0.5 * eps * x;
                    }
                }
                w
            }
        }
    }
}

/// Move with the Gaussian-reference flow; on rejection, reflect the
/// velocity off the gradient of the potential's residual above the
/// reference. When the target is the reference itself the flow is exact
/// and no step is ever refused.
pub struct DtHamiltonianBps {
    target: ExtendedTarget,
    flow: HamFlow,
}

impl DtHamiltonianBps {
    pub fn new(target: ExtendedTarget, flow: HamFlow) -> Result<Self> {
        flow.validate()?;
        if !matches!(target.velocity, VelocityLaw::StandardNormal { .. }) {
            return Err(Error::Config(
                "the rotation flow pairs positions with standard normal velocities".into(),
            ));
        }
        if target.residual.is_none() {
            return Err(Error::MissingFactorization);
        }
        Ok(DtHamiltonianBps { target, flow })
    }
}

impl DiscreteKernel for DtHamiltonianBps {
    fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let lr = self.target.log_rho(z);
        let z1 = self.flow.apply(z);
        let lr1 = self.target.log_rho(&z1);
        if rng.gen::<f64>().ln() < lr1 - lr {
            *z = z1;
            return Ok(StepKind::Advance);
        }
        let residual = self.target.residual.as_ref().unwrap();
        let mut g = vec![0.0; z.dim()];
        residual.grad_into(&z.x, &mut g);
        let vs = match bounce::reflect(&g, &z.v) {
            Ok(vs) => vs,
            Err(Error::ZeroGradient { .. }) => {
                z.flip();
                return Ok(StepKind::Flip);
            }
            Err(e) => return Err(e),
        };
        let mirror = self.flow.apply(&State::new(z.x.clone(), vs.iter().map(|t| -t).collect()));
        let lrm = self.target.log_rho(&mirror);
        let accept = if lrm >= lr {
            false
        } else {
            rng.gen::<f64>().ln() < ln_1m_exp(lrm - lr) - ln_1m_exp(lr1 - lr)
        };
        if accept {
            z.v = vs;
            Ok(StepKind::Bounce)
        } else {
            z.flip();
            Ok(StepKind::Flip)
        }
    }
}

/// Central-difference gradient estimate along `n_cpt` random orthonormal
/// directions drawn independently of the current velocity. With `n_cpt`
/// equal to the dimension this is the usual numerical gradient.
pub fn numdiff_gradient(
    potential: &Potential,
    x: &[f64],
    n_cpt: usize,
    h: f64,
    rng: &mut dyn rand::RngCore,
) -> Vec<f64> {
    let d = x.len();
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(n_cpt);
    while dirs.len() < n_cpt {
        let mut cand: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &dirs {
            let c = linalg::dot(&cand, b);
            for (ci, bi) in cand.iter_mut().zip(b) {
                *ci -= c * bi;
            }
        }
        let n = linalg::norm(&cand);
        if n > 1e-8 {
            for c in &mut cand {
                *c /= n;
            }
            dirs.push(cand);
        }
    }
    let mut ghat = vec![0.0; d];
    let mut probe = vec![0.0; d];
    for zeta in &dirs {
        for i in 0..d {
            probe[i] = x[i] + h * zeta[i];
        }
        let up = potential.eval(&probe);
        for i in 0..d {
            probe[i] = x[i] - h * zeta[i];
        }
        let um = potential.eval(&probe);
        let delta = (up - um) / (2.0 * h);
        for i in 0..d {
            ghat[i] += delta * zeta[i];
        }
    }
    ghat
}

/// How [`DtGradientFreeBps`] picks the post-rejection velocity.
#[derive(Clone, Copy, Debug)]
pub enum GradientFreeMode {
    /// Reflect off a central-difference gradient estimate, then accept
    /// against the rejection-weighted law as usual.
    NumDiff { n_cpt: usize, h: f64 },
    /// Draw the new velocity directly from the law the event must leave
    /// invariant, by rejection sampling with the velocity law as the
    /// instrument. No flip fallback: the loop runs until a draw lands.
    Rejection,
}

/// Straight-line moves whose event kernel never evaluates the exact
/// gradient of the potential.
pub struct DtGradientFreeBps {
    target: ExtendedTarget,
    eps: f64,
    mode: GradientFreeMode,
    max_iters: u64,
}

impl DtGradientFreeBps {
    pub fn new(target: ExtendedTarget, eps: f64, mode: GradientFreeMode) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("step size {eps} must be positive")));
        }
        match mode {
            GradientFreeMode::NumDiff { n_cpt, h } => {
                if n_cpt == 0 || n_cpt > target.dim() {
                    return Err(Error::Config(format!(
                        "{n_cpt} probe directions outside 1..={}",
                        target.dim()
                    )));
                }
                if !(h > 0.0) {
                    return Err(Error::Config(format!("probe width {h} must be positive")));
                }
            }
            GradientFreeMode::Rejection => {
                if !matches!(target.velocity, VelocityLaw::StandardNormal { .. }) {
                    return Err(Error::Config(
                        "rejection resampling instruments the standard normal velocity law"
                            .into(),
                    ));
                }
            }
        }
        Ok(DtGradientFreeBps {
            target,
            eps,
            mode,
            max_iters: 1_000_000,
        })
    }

    /// Cap on rejection-sampling proposals per event before giving up.
    pub fn with_max_iters(mut self, max_iters: u64) -> Self {
        assert!(max_iters >= 1);
        self.max_iters = max_iters;
        self
    }
}

impl DiscreteKernel for DtGradientFreeBps {
    fn target(&self) -> &ExtendedTarget {
        &self.target
    }

    fn step(&self, z: &mut State, rng: &mut dyn rand::RngCore) -> Result<StepKind> {
        let pot = &self.target.potential;
        let eps = self.eps;
        let u0 = pot.eval(&z.x);
        let x1: Vec<f64> = z.x.iter().zip(&z.v).map(|(x, v)| x + eps * v).collect();
        let u1 = pot.eval(&x1);
        if rng.gen::<f64>().ln() < u0 - u1 {
            z.x = x1;
            return Ok(StepKind::Advance);
        }
        match self.mode {
            GradientFreeMode::NumDiff { n_cpt, h } => {
                let ghat = numdiff_gradient(pot, &z.x, n_cpt, h, rng);
                let vs = match bounce::reflect(&ghat, &z.v) {
                    Ok(vs) => vs,
                    Err(Error::ZeroGradient { .. }) => {
                        z.flip();
                        return Ok(StepKind::Bounce);
                    }
                    Err(e) => return Err(e),
                };
                let back: Vec<f64> =
                    z.x.iter().zip(&vs).map(|(x, v)| x - eps * v).collect();
                let du_back = pot.eval(&back) - u0;
                let accept = du_back > 0.0
                    && rng.gen::<f64>().ln() < ln_1m_exp(-du_back) - ln_1m_exp(u0 - u1);
                if accept {
                    z.v = vs;
                    Ok(StepKind::Bounce)
                } else {
                    z.flip();
                    Ok(StepKind::Flip)
                }
            }
            GradientFreeMode::Rejection => {
                let d = z.dim();
                let mut probe = vec![0.0; d];
                for _ in 0..self.max_iters {
                    let cand: Vec<f64> =
                        (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    for i in 0..d {
                        probe[i] = z.x[i] - eps * cand[i];
                    }
                    let du = pot.eval(&probe) - u0;
                    // accept with [1 - e^{-du}]_+, the target weight over
                    // the instrument
                    if du > 0.0 && rng.gen::<f64>() < -(-du).exp_m1() {
                        z.v = cand;
                        return Ok(StepKind::Bounce);
                    }
                }
                Err(Error::RejectionBudgetExceeded {
                    max: self.max_iters,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dt::{collect_coordinate, run_chain, WithRefresh};
    use crate::model::targets;
    use crate::stats;
    use crate::stream::substream;

    fn all_kinds() -> Vec<BounceKind> {
        vec![
            BounceKind::Reflect,
            BounceKind::Flip,
            BounceKind::Independent,
            BounceKind::ReverseParallel,
            BounceKind::RedrawParallel,
            BounceKind::Autoregressive {
                redraw_prob: 0.5,
                perp_corr: 0.7,
            },
        ]
    }

    #[test]
    fn every_bounce_kind_holds_the_gaussian() {
        for (i, kind) in all_kinds().into_iter().enumerate() {
            let k = WithRefresh::new(
                DtBps::new(targets::isotropic(2), 0.1, kind).unwrap(),
                0.05,
            );
            let mut rng = substream(110, i as u64, 0);
            let (xs, counts) = collect_coordinate(
                &k,
                State::new(vec![0.2, -0.4], vec![0.6, 1.1]),
                150_000,
                0,
                &mut rng,
            )
            .unwrap();
            assert!(counts.events() > 500, "{kind:?} had {} events", counts.events());
            let m2 = stats::mean(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
            assert!((m2 - 1.0).abs() < 0.08, "{kind:?} second moment {m2}");
        }
    }

    #[test]
    fn randomized_kinds_require_gaussian_velocities() {
        let corners = targets::gaussian_diag(&[1.0, 1.0])
            .with_velocity(crate::model::VelocityLaw::HypercubeCorners { dim: 2 });
        assert!(matches!(
            DtBps::new(corners.clone(), 0.1, BounceKind::Independent),
            Err(Error::Config(_))
        ));
        assert!(DtBps::new(corners, 0.1, BounceKind::Flip).is_ok());
        assert!(matches!(
            DtBps::new(targets::isotropic(2), 0.0, BounceKind::Flip),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn skew_balanced_acceptance_approaches_one_with_step_size() {
        // the event proposal's acceptance should tighten to 1 as the move
        // shrinks, for every kernel that satisfies the projection balance
        let kinds = [
            BounceKind::Independent,
            BounceKind::ReverseParallel,
            BounceKind::RedrawParallel,
            BounceKind::Autoregressive {
                redraw_prob: 0.3,
                perp_corr: 0.6,
            },
        ];
        for (i, kind) in kinds.into_iter().enumerate() {
            let mut acc = [0.0; 2];
            for (j, eps) in [0.2, 0.05].into_iter().enumerate() {
                let k = DtBps::new(targets::isotropic(2), eps, kind).unwrap();
                let mut rng = substream(111, i as u64, j as u64);
                let mut z = State::new(vec![0.8, 0.3], vec![-0.4, 0.9]);
                let counts = run_chain(&k, &mut z, 400_000, &mut rng, |_| {}).unwrap();
                assert!(counts.events() > 1000, "{kind:?} eps {eps}");
                acc[j] = counts.bounce as f64 / counts.events() as f64;
            }
            assert!(acc[1] > acc[0], "{kind:?} acceptance {acc:?}");
            assert!(acc[1] > 0.93, "{kind:?} acceptance {} at eps 0.05", acc[1]);
        }
    }

    #[test]
    fn numdiff_with_full_basis_recovers_exact_gradient() {
        // central differences are exact on a quadratic up to rounding
        let t = targets::gaussian_diag(&[1.0, 0.7, 1.3]);
        let mut rng = substream(112, 0, 0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let ghat = numdiff_gradient(&t.potential, &x, 3, 1e-4, &mut rng);
            let g = t.potential.grad(&x);
            for i in 0..3 {
                assert!((ghat[i] - g[i]).abs() < 1e-8, "{ghat:?} vs {g:?}");
            }
        }
    }

    #[test]
    fn gradient_free_modes_hold_the_gaussian() {
        let modes = [
            GradientFreeMode::NumDiff { n_cpt: 2, h: 1e-4 },
            GradientFreeMode::NumDiff { n_cpt: 1, h: 1e-4 },
            GradientFreeMode::Rejection,
        ];
        for (i, mode) in modes.into_iter().enumerate() {
            let k = WithRefresh::new(
                DtGradientFreeBps::new(targets::isotropic(2), 0.1, mode).unwrap(),
                0.05,
            );
            let mut rng = substream(113, i as u64, 0);
            let (xs, counts) = collect_coordinate(
                &k,
                State::new(vec![-0.3, 0.5], vec![1.2, -0.1]),
                150_000,
                0,
                &mut rng,
            )
            .unwrap();
            assert!(counts.events() > 500, "{mode:?}");
            let m2 = stats::mean(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
            assert!((m2 - 1.0).abs() < 0.08, "{mode:?} second moment {m2}");
        }
    }

    #[test]
    fn rejection_budget_is_enforced() {
        // potential rises steeply ahead and is flat behind for half of all
        // backward probes, so a budget of one proposal fails often
        let pot = Potential::new(
            1,
            |w: &[f64]| 1000.0 * w[0].max(0.0) + 0.001 * w[0],
            |w: &[f64], out: &mut [f64]| {
                out[0] = if w[0] > 0.0 { 1000.001 } else { 0.001 };
            },
        );
        let t = ExtendedTarget::new(pot, VelocityLaw::StandardNormal { dim: 1 });
        let k = DtGradientFreeBps::new(t, 0.5, GradientFreeMode::Rejection)
            .unwrap()
            .with_max_iters(1);
        let mut rng = substream(114, 0, 0);
        let mut budget_errors = 0;
        let mut bounces = 0;
        for _ in 0..30 {
            let mut z = State::new(vec![0.0], vec![1.0]);
            match k.step(&mut z, &mut rng) {
                Err(Error::RejectionBudgetExceeded { max: 1 }) => budget_errors += 1,
                Ok(StepKind::Bounce) => bounces += 1,
                other => panic!("unexpected outcome {other:?}"),
            }
        }
        assert!(budget_errors > 5, "only {budget_errors} budget errors");
        assert!(bounces > 5, "only {bounces} bounces");
    }

    #[test]
    fn matched_reference_never_rejects_under_exact_rotation() {
        let t = targets::gaussian_for_rotation(2, 1.0);
        let k = DtHamiltonianBps::new(t, HamFlow::Rotation { eps: 0.3 }).unwrap();
        let mut rng = substream(115, 0, 0);
        let mut z = State::new(vec![0.7, -0.4], vec![0.2, 1.1]);
        let counts = run_chain(&k, &mut z, 20_000, &mut rng, |_| {}).unwrap();
        assert_eq!(counts.advance, 20_000);
        assert_eq!(counts.events(), 0);
    }

    #[test]
    fn leapfrog_reference_energy_error_shrinks_at_second_order() {
        let t = targets::gaussian_for_rotation(2, 1.0);
        let z = State::new(vec![0.9, -0.3], vec![0.4, 1.2]);
        let lr = t.log_rho(&z);
        let drift = |flow: HamFlow| (t.log_rho(&flow.apply(&z)) - lr).abs();
        let coarse = drift(HamFlow::Leapfrog { eps: 0.2, steps: 5 });
        let fine = drift(HamFlow::Leapfrog { eps: 0.1, steps: 10 });
        assert!(coarse > 0.0 && fine > 0.0);
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn mismatched_reference_bounces_and_stays_invariant() {
        let flows = [
            HamFlow::Rotation { eps: 0.35 },
            HamFlow::Leapfrog {
                eps: 0.0875,
                steps: 4,
            },
        ];
        for (i, flow) in flows.into_iter().enumerate() {
            let t = targets::gaussian_for_rotation(2, 2.0);
            let k = WithRefresh::new(DtHamiltonianBps::new(t, flow).unwrap(), 0.08);
            let mut rng = substream(116, i as u64, 0);
            let (xs, counts) = collect_coordinate(
                &k,
                State::new(vec![0.5, -0.9], vec![1.0, 0.3]),
                150_000,
                0,
                &mut rng,
            )
            .unwrap();
            assert!(counts.events() > 500, "{flow:?}");
            let m2 = stats::mean(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
            assert!((m2 - 2.0).abs() < 0.15, "{flow:?} second moment {m2}");
        }
    }

    #[test]
    fn construction_guards_for_reference_flow() {
        let no_residual = targets::isotropic(2);
        assert!(matches!(
            DtHamiltonianBps::new(no_residual, HamFlow::Rotation { eps: 0.3 }),
            Err(Error::MissingFactorization)
        ));
        let t = targets::gaussian_for_rotation(2, 1.0);
        assert!(matches!(
            DtHamiltonianBps::new(t.clone(), HamFlow::Leapfrog { eps: 0.1, steps: 0 }),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            DtHamiltonianBps::new(t, HamFlow::Rotation { eps: -1.0 }),
            Err(Error::Config(_))
        ));
    }
}
