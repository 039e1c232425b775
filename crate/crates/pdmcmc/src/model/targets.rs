//! Ready-made targets used across tests, benchmarks and the experiment
//! harness.

use rand::Rng;
use rand_distr::Poisson;

use super::{ExtendedTarget, Factor, Potential, Residual, VelocityLaw};

/// Independent zero-mean Gaussian coordinates with the given standard
/// deviations.
pub fn gaussian_diag(sigmas: &[f64]) -> ExtendedTarget {
    assert!(!sigmas.is_empty());
    assert!(sigmas.iter().all(|&s| s > 0.0));
    let dim = sigmas.len();
    let factors = sigmas
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            Factor::scalar(vec![(i, 1.0 / s)], |w| 0.5 * w * w, |w| w)
                .convex()
                .with_slope_bound(|c| c)
        })
        .collect();
    ExtendedTarget::new(
        Potential::from_factors(dim, factors),
        VelocityLaw::StandardNormal { dim },
    )
}

/// Standard Gaussian in `dim` dimensions.
pub fn isotropic(dim: usize) -> ExtendedTarget {
    gaussian_diag(&vec![1.0; dim])
}

/// Linearly shrinking scales `1, (d-1)/d, ..., 1/d`: a fixed-shape
/// ill-conditioned diagonal Gaussian with condition number `d`.
pub fn funnel_scales(dim: usize) -> Vec<f64> {
    (0..dim).map(|j| (dim - j) as f64 / dim as f64).collect()
}

pub fn funnel(dim: usize) -> ExtendedTarget {
    gaussian_diag(&funnel_scales(dim))
}

/// Isotropic Gaussian of variance `var`, expressed for rotation-flow
/// samplers: the potential's remainder above `|x|^2/2` is attached as a
/// per-coordinate factorized residual.
pub fn gaussian_for_rotation(dim: usize, var: f64) -> ExtendedTarget {
    assert!(var > 0.0);
    let s = var.sqrt();
    let factors = (0..dim)
        .map(|i| {
            Factor::scalar(vec![(i, 1.0 / s)], |w| 0.5 * w * w, |w| w)
                .convex()
                .with_slope_bound(|c| c)
        })
        .collect();
    let a = 1.0 / var - 1.0;
    let residual = (0..dim)
        .map(|i| {
            Factor::scalar(vec![(i, 1.0)], move |w| 0.5 * a * w * w, move |w| a * w)
                .with_slope_bound(move |c| a.abs() * c)
        })
        .collect();
    ExtendedTarget::new(
        Potential::from_factors(dim, factors),
        VelocityLaw::StandardNormal { dim },
    )
    .with_residual(Residual::new(residual))
}

/// Gaussian prior on a latent path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    /// Unit-innovation random walk pinned to zero at both ends; precision is
    /// the tridiagonal second-difference matrix with diagonal 2.
    Bridge,
    /// Independent standard Gaussian coordinates.
    Identity,
}

/// One Poisson count attached to a latent coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub index: usize,
    pub count: f64,
}

fn observation_factor(weights: Vec<(usize, f64)>, count: f64) -> Factor {
    // -log Poisson(y | e^w) in w, up to a constant: e^w - y w
    Factor::scalar(
        weights,
        move |w| w.exp() - count * w,
        move |w| w.exp() - count,
    )
    .convex()
    .with_slope_bound(move |c| c.exp() + count)
}

/// Latent Gaussian path with Poisson counts observed through a log link,
/// in the original (unwhitened) coordinates. The potential is a sum of
/// sparse factors: prior increments plus one factor per observation.
pub fn latent_poisson(prior: PriorKind, dim: usize, obs: &[Observation]) -> ExtendedTarget {
    assert!(dim >= 1);
    let mut factors: Vec<Factor> = Vec::new();
    match prior {
        PriorKind::Bridge => {
            factors.push(
                Factor::scalar(vec![(0, 1.0)], |w| 0.5 * w * w, |w| w)
                    .convex()
                    .with_slope_bound(|c| c),
            );
            for i in 1..dim {
                factors.push(
                    Factor::scalar(vec![(i - 1, -1.0), (i, 1.0)], |w| 0.5 * w * w, |w| w)
                        .convex()
                        .with_slope_bound(|c| c),
                );
            }
            factors.push(
                Factor::scalar(vec![(dim - 1, 1.0)], |w| 0.5 * w * w, |w| w)
                    .convex()
                    .with_slope_bound(|c| c),
            );
        }
        PriorKind::Identity => {
            for i in 0..dim {
                factors.push(
                    Factor::scalar(vec![(i, 1.0)], |w| 0.5 * w * w, |w| w)
                        .convex()
                        .with_slope_bound(|c| c),
                );
            }
        }
    }
    for o in obs {
        assert!(o.index < dim);
        factors.push(observation_factor(vec![(o.index, 1.0)], o.count));
    }
    ExtendedTarget::new(
        Potential::from_factors(dim, factors),
        VelocityLaw::StandardNormal { dim },
    )
}

/// Lower-bidiagonal Cholesky factor `L` of a prior precision, `Lam = L L^T`.
#[derive(Clone, Debug)]
pub struct BidiagonalCholesky {
    diag: Vec<f64>,
    sub: Vec<f64>,
}

impl BidiagonalCholesky {
    pub fn for_prior(prior: PriorKind, dim: usize) -> Self {
        match prior {
            PriorKind::Identity => BidiagonalCholesky {
                diag: vec![1.0; dim],
                sub: vec![0.0; dim.saturating_sub(1)],
            },
            PriorKind::Bridge => {
                let mut diag = Vec::with_capacity(dim);
                let mut sub = Vec::with_capacity(dim.saturating_sub(1));
                let mut l = 2.0_f64.sqrt();
                diag.push(l);
                for _ in 1..dim {
                    let e = -1.0 / l;
                    sub.push(e);
                    l = (2.0 - e * e).sqrt();
                    diag.push(l);
                }
                BidiagonalCholesky { diag, sub }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Solve `L^T x = y` (back substitution): maps whitened to original
    /// coordinates.
    pub fn solve_transpose(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        assert_eq!(y.len(), d);
        let mut x = vec![0.0; d];
        x[d - 1] = y[d - 1] / self.diag[d - 1];
        for i in (0..d - 1).rev() {
            x[i] = (y[i] - self.sub[i] * x[i + 1]) / self.diag[i];
        }
        x
    }

    /// Column `i` of `L^{-1}` as sparse weights; its support is the suffix
    /// starting at `i`. Row `i` of `L^{-T}`, so
    /// `x_i = <col_inverse(i), y>` whenever `L^T x = y`.
    pub fn col_inverse(&self, i: usize) -> Vec<(usize, f64)> {
        let d = self.dim();
        assert!(i < d);
        let mut out = Vec::with_capacity(d - i);
        let mut m = 1.0 / self.diag[i];
        out.push((i, m));
        for k in i + 1..d {
            m = -self.sub[k - 1] * m / self.diag[k];
            if m == 0.0 {
                break;
            }
            out.push((k, m));
        }
        out
    }
}

/// Whitened form of [`latent_poisson`]: in coordinates `y = L^T x` the prior
/// becomes standard Gaussian, so the potential is `|y|^2/2` plus one scalar
/// observation factor per count, and the residual above the unit quadratic
/// is exactly those observation factors.
pub struct WhitenedLatentPoisson {
    pub target: ExtendedTarget,
    chol: BidiagonalCholesky,
}

impl WhitenedLatentPoisson {
    /// Map a whitened position back to the original path coordinates.
    pub fn to_original(&self, y: &[f64]) -> Vec<f64> {
        self.chol.solve_transpose(y)
    }

    pub fn cholesky(&self) -> &BidiagonalCholesky {
        &self.chol
    }
}

pub fn latent_poisson_whitened(
    prior: PriorKind,
    dim: usize,
    obs: &[Observation],
) -> WhitenedLatentPoisson {
    let chol = BidiagonalCholesky::for_prior(prior, dim);
    let mut factors: Vec<Factor> = (0..dim)
        .map(|i| {
            Factor::scalar(vec![(i, 1.0)], |w| 0.5 * w * w, |w| w)
                .convex()
                .with_slope_bound(|c| c)
        })
        .collect();
    let mut residual = Vec::with_capacity(obs.len());
    for o in obs {
        assert!(o.index < dim);
        let weights = chol.col_inverse(o.index);
        factors.push(observation_factor(weights.clone(), o.count));
        residual.push(observation_factor(weights, o.count));
    }
    let target = ExtendedTarget::new(
        Potential::from_factors(dim, factors),
        VelocityLaw::StandardNormal { dim },
    )
    .with_residual(Residual::new(residual));
    WhitenedLatentPoisson { target, chol }
}

/// Evenly spaced observation sites in `0..dim`.
pub fn evenly_spaced_indices(dim: usize, k: usize) -> Vec<usize> {
    assert!(k <= dim);
    (0..k)
        .map(|j| (((j as f64 + 0.5) * dim as f64 / k as f64) as usize).min(dim - 1))
        .collect()
}

/// Draw a latent path from the prior and Poisson counts at the given sites.
pub fn synthesize_counts(
    prior: PriorKind,
    dim: usize,
    indices: &[usize],
    rng: &mut dyn rand::RngCore,
) -> Vec<Observation> {
    let chol = BidiagonalCholesky::for_prior(prior, dim);
    let y: Vec<f64> = (0..dim)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect();
    let x = chol.solve_transpose(&y);
    indices
        .iter()
        .map(|&i| {
            let lambda = x[i].exp();
            let count = rng.sample(Poisson::new(lambda.max(1e-300)).unwrap());
            Observation { index: i, count }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::stream::substream;

    #[test]
    fn gaussian_diag_eval_and_grad() {
        let t = gaussian_diag(&[1.0, 2.0]);
        let x = [3.0, 4.0];
        // x0^2/2 + (x1/2)^2/2 = 4.5 + 2 = 6.5
        assert!((t.potential.eval(&x) - 6.5).abs() < 1e-12);
        let g = t.potential.grad(&x);
        assert!((g[0] - 3.0).abs() < 1e-12);
        assert!((g[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn funnel_scales_frozen() {
        assert_eq!(funnel_scales(4), vec![1.0, 0.75, 0.5, 0.25]);
    }

    #[test]
    fn rotation_target_residual_matches() {
        let t = gaussian_for_rotation(3, 2.0);
        let x = [0.7, -1.1, 0.4];
        let q = 0.5 * linalg::norm_sq(&x);
        let r = t.residual.as_ref().unwrap();
        assert!((q + r.eval(&x) - t.potential.eval(&x)).abs() < 1e-12);
        let mut rg = vec![0.0; 3];
        r.grad_into(&x, &mut rg);
        let g = t.potential.grad(&x);
        for i in 0..3 {
            assert!((x[i] + rg[i] - g[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn bridge_cholesky_reconstructs_precision() {
        let d = 6;
        let c = BidiagonalCholesky::for_prior(PriorKind::Bridge, d);
        // (L L^T)_{ij} over the tridiagonal band
        for i in 0..d {
            let diag = c.diag[i] * c.diag[i]
                + if i > 0 { c.sub[i - 1] * c.sub[i - 1] } else { 0.0 };
            assert!((diag - 2.0).abs() < 1e-12);
            if i + 1 < d {
                let off = c.sub[i] * c.diag[i];
                assert!((off + 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col_inverse_agrees_with_solve() {
        let d = 9;
        let c = BidiagonalCholesky::for_prior(PriorKind::Bridge, d);
        let mut rng = substream(5, 0, 0);
        let y: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let x = c.solve_transpose(&y);
        for i in 0..d {
            let w = c.col_inverse(i);
            assert_eq!(w[0].0, i);
            let via: f64 = w.iter().map(|&(k, wk)| wk * y[k]).sum();
            assert!((via - x[i]).abs() < 1e-10, "coord {i}");
        }
    }

    #[test]
    fn whitened_potential_matches_original() {
        // U_orig(x) at x = L^{-T} y must equal U_white(y) - |y|^2/2 + |x-part prior|...
        // directly: U_white(y) = |y|^2/2 + sum_j f_j(x_{i_j})
        // and U_orig(x) = prior(x) + sum_j f_j(x_{i_j}) with prior(x) = |L^T x|^2/2.
        let obs = vec![
            Observation { index: 1, count: 2.0 },
            Observation { index: 4, count: 0.0 },
        ];
        let d = 6;
        let orig = latent_poisson(PriorKind::Bridge, d, &obs);
        let white = latent_poisson_whitened(PriorKind::Bridge, d, &obs);
        let mut rng = substream(6, 0, 0);
        let y: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let x = white.to_original(&y);
        let uw = white.target.potential.eval(&y);
        let uo = orig.potential.eval(&x);
        let qy = 0.5 * linalg::norm_sq(&y);
        // prior term in original coords equals |y|^2/2 by construction
        let obs_orig = uo - (uw - qy);
        assert!((obs_orig - qy).abs() < 1e-10);
        // and the residual is the observation part
        let r = white.target.residual.as_ref().unwrap();
        assert!((qy + r.eval(&y) - uw).abs() < 1e-10);
    }

    #[test]
    fn whitened_gradient_matches_chain_rule() {
        let obs = vec![Observation { index: 2, count: 3.0 }];
        let d = 5;
        let white = latent_poisson_whitened(PriorKind::Bridge, d, &obs);
        let y = [0.3, -0.2, 0.9, 0.1, -0.5];
        let g = white.target.potential.grad(&y);
        let h = 1e-6;
        for i in 0..d {
            let mut yp = y;
            let mut ym = y;
            yp[i] += h;
            ym[i] -= h;
            let fd = (white.target.potential.eval(&yp) - white.target.potential.eval(&ym))
                / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-5, "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn evenly_spaced_sites() {
        assert_eq!(evenly_spaced_indices(8, 4), vec![1, 3, 5, 7]);
        assert_eq!(evenly_spaced_indices(3, 3), vec![0, 1, 2]);
    }

    #[test]
    fn synthesized_counts_are_reproducible() {
        let idx = evenly_spaced_indices(16, 4);
        let mut r1 = substream(7, 0, 2);
        let mut r2 = substream(7, 0, 2);
        let a = synthesize_counts(PriorKind::Bridge, 16, &idx, &mut r1);
        let b = synthesize_counts(PriorKind::Bridge, 16, &idx, &mut r2);
        assert_eq!(a, b);
        assert!(a.iter().all(|o| o.count >= 0.0));
    }
}
