//! Velocity updates applied at event times: deterministic reflection and a
//! family of randomized bounce kernels, plus the parallel/orthogonal
//! decomposition they are built on.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::linalg;
use crate::{Error, Result};

/// How the velocity is transformed when an event fires.
///
/// The randomized kinds assume a standard normal velocity law; each one
/// preserves the event-weighted pair law under `(v, v') -> (-v', -v)`, which
/// is what makes the extended target invariant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BounceKind {
    /// Specular reflection off the gradient.
    Reflect,
    /// Full velocity reversal.
    Flip,
    /// Fresh draw: downhill component from the size-biased speed law,
    /// orthogonal part from a fresh Gaussian.
    Independent,
    /// Reverse the parallel component, redraw the orthogonal magnitude but
    /// keep its direction.
    ReverseParallel,
    /// Redraw the parallel component, keep the orthogonal part.
    RedrawParallel,
    /// Parallel: fresh draw with probability `redraw_prob`, else reversal.
    /// Orthogonal: correlation `perp_corr` with the previous orthogonal part.
    Autoregressive { redraw_prob: f64, perp_corr: f64 },
}

impl BounceKind {
    pub fn validate(&self) -> Result<()> {
        if let BounceKind::Autoregressive {
            redraw_prob,
            perp_corr,
        } = self
        {
            if !(0.0..=1.0).contains(redraw_prob) {
                return Err(Error::Config(format!(
                    "redraw_prob {redraw_prob} outside [0, 1]"
                )));
            }
            if !(-1.0..=1.0).contains(perp_corr) {
                return Err(Error::Config(format!(
                    "perp_corr {perp_corr} outside [-1, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Kinds beyond Reflect/Flip draw from the standard normal velocity law.
    pub fn is_randomized(&self) -> bool {
        !matches!(self, BounceKind::Reflect | BounceKind::Flip)
    }
}

const GRAD_FLOOR: f64 = 1e-12;

/// `v - 2 <g,v>/|g|^2 g`: reflect across the plane orthogonal to `g`.
pub fn reflect(gradient: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let g2 = linalg::norm_sq(gradient);
    if g2.sqrt() < GRAD_FLOOR {
        return Err(Error::ZeroGradient { norm: g2.sqrt() });
    }
    let s = 2.0 * linalg::dot(gradient, v) / g2;
    Ok(v.iter()
        .zip(gradient)
        .map(|(vi, gi)| vi - s * gi)
        .collect())
}

/// Split of a velocity into components along and orthogonal to the descent
/// direction `n_par = -g/|g|`.
#[derive(Clone, Debug)]
pub struct VelocityDecomposition {
    pub a_par: f64,
    pub n_par: Vec<f64>,
    /// Orthogonal magnitude, always >= 0.
    pub a_perp: f64,
    /// Unit orthogonal direction; all-zero in dimension 1.
    pub n_perp: Vec<f64>,
}

impl VelocityDecomposition {
    pub fn reconstruct(&self) -> Vec<f64> {
        self.n_par
            .iter()
            .zip(&self.n_perp)
            .map(|(np, no)| self.a_par * np + self.a_perp * no)
            .collect()
    }
}

pub fn decompose(v: &[f64], gradient: &[f64]) -> Result<VelocityDecomposition> {
    let gn = linalg::norm(gradient);
    if gn < GRAD_FLOOR {
        return Err(Error::ZeroGradient { norm: gn });
    }
    let n_par: Vec<f64> = gradient.iter().map(|g| -g / gn).collect();
    let a_par = linalg::dot(v, &n_par);
    let perp: Vec<f64> = v
        .iter()
        .zip(&n_par)
        .map(|(vi, ni)| vi - a_par * ni)
        .collect();
    let a_perp = linalg::norm(&perp);
    let d = v.len();
    let n_perp = if d == 1 {
        vec![0.0]
    } else if a_perp > GRAD_FLOOR {
        perp.iter().map(|p| p / a_perp).collect()
    } else {
        // v is parallel to the gradient: pick a deterministic orthogonal
        // direction by orthonormalizing the axis least aligned with n_par.
        let k = n_par
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        let c = linalg::dot(&e, &n_par);
        let mut u: Vec<f64> = e.iter().zip(&n_par).map(|(ei, ni)| ei - c * ni).collect();
        let un = linalg::norm(&u);
        for t in &mut u {
            *t /= un;
        }
        u
    };
    Ok(VelocityDecomposition {
        a_par,
        n_par,
        a_perp: if a_perp > GRAD_FLOOR { a_perp } else { 0.0 },
        n_perp,
    })
}

/// Draw from the chi distribution with `k` degrees of freedom (the norm of
/// a k-dimensional standard normal). `k = 0` returns 0.
pub fn sample_chi(k: usize, rng: &mut dyn rand::RngCore) -> f64 {
    match k {
        0 => 0.0,
        // inverse CDF of the 2-dof case: F(a) = 1 - exp(-a^2/2)
        2 => {
            let u: f64 = rng.gen();
            (-2.0 * (1.0 - u).ln()).sqrt()
        }
        _ => ChiSquared::new(k as f64).unwrap().sample(rng).sqrt(),
    }
}

/// Fresh standard normal with its component along unit `n` removed.
fn fresh_orthogonal(n: &[f64], rng: &mut dyn rand::RngCore) -> Vec<f64> {
    let xi: Vec<f64> = (0..n.len()).map(|_| rng.sample(StandardNormal)).collect();
    let c = linalg::dot(&xi, n);
    xi.iter().zip(n).map(|(x, ni)| x - c * ni).collect()
}

/// Apply the chosen bounce kernel. Randomized kinds require a standard
/// normal velocity law.
pub fn bounce(
    kind: BounceKind,
    gradient: &[f64],
    v: &[f64],
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<f64>> {
    match kind {
        BounceKind::Reflect => reflect(gradient, v),
        BounceKind::Flip => Ok(v.iter().map(|t| -t).collect()),
        BounceKind::Independent => {
            let dec = decompose(v, gradient)?;
            let a = sample_chi(2, rng);
            let perp = fresh_orthogonal(&dec.n_par, rng);
            Ok(dec
                .n_par
                .iter()
                .zip(&perp)
                .map(|(ni, pi)| a * ni + pi)
                .collect())
        }
        BounceKind::ReverseParallel => {
            let dec = decompose(v, gradient)?;
            let d = v.len();
            let m = sample_chi(d.saturating_sub(1), rng);
            Ok(dec
                .n_par
                .iter()
                .zip(&dec.n_perp)
                .map(|(ni, oi)| -dec.a_par * ni + m * oi)
                .collect())
        }
        BounceKind::RedrawParallel => {
            let dec = decompose(v, gradient)?;
            let a = sample_chi(2, rng);
            Ok(dec
                .n_par
                .iter()
                .zip(&dec.n_perp)
                .map(|(ni, oi)| a * ni + dec.a_perp * oi)
                .collect())
        }
        BounceKind::Autoregressive {
            redraw_prob,
            perp_corr,
        } => {
            let dec = decompose(v, gradient)?;
            let a = if rng.gen::<f64>() < redraw_prob {
                sample_chi(2, rng)
            } else {
                -dec.a_par
            };
            let fresh = fresh_orthogonal(&dec.n_par, rng);
            let s = (1.0 - perp_corr * perp_corr).max(0.0).sqrt();
            Ok((0..v.len())
                .map(|i| {
                    a * dec.n_par[i]
                        + perp_corr * dec.a_perp * dec.n_perp[i]
                        + s * fresh[i]
                })
                .collect())
        }
    }
}

/// Like [`bounce`] but degrades to a flip where the gradient vanishes; the
/// event rate is zero there, so any choice preserves the target.
pub fn bounce_or_flip(
    kind: BounceKind,
    gradient: &[f64],
    v: &[f64],
    rng: &mut dyn rand::RngCore,
) -> Vec<f64> {
    match bounce(kind, gradient, v, rng) {
        Ok(out) => out,
        Err(Error::ZeroGradient { .. }) => v.iter().map(|t| -t).collect(),
        Err(_) => unreachable!("bounce only fails on a vanishing gradient"),
    }
}

/// Rescale a sampled velocity onto the sphere of the given radius, for
/// velocity laws supported there.
pub fn project_to_sphere(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    let n = linalg::norm(v);
    if n < GRAD_FLOOR {
        return Err(Error::ZeroGradient { norm: n });
    }
    Ok(v.iter().map(|t| t * radius / n).collect())
}
