//! JSON experiment configuration: sampler and target registries, budgets,
//! seed plan. Validation resolves every name before anything runs and
//! reports the offending field on failure.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use pdmcmc::bounce::BounceKind;
use pdmcmc::ct::{GlobalBps, HamiltonianBps, LocalBps, ZigZag};
use pdmcmc::doubly::{NoisyMetropolis, OmegaModel};
use pdmcmc::dt::{self, DiscreteKernel, GradientFreeMode, HamFlow, ReflectVariant, WithRefresh};
use pdmcmc::local::{LocalBpsDt, PrefetchLocalBps, SetRoute, SubsampledLocalBps};
use pdmcmc::model::{targets, ExtendedTarget, VelocityLaw};
use pdmcmc::stream::substream;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sampler: SamplerSpec,
    pub target: TargetSpec,
    pub budget: Budget,
    pub seeds: Seeds,
    pub output: PathBuf,
    /// Off for byte-reproducible output: wall clock reads as zero.
    #[serde(default = "yes")]
    pub measure_walltime: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub name: String,
    /// Step size for discrete kernels, proposal scale for noisy MH.
    pub eps: Option<f64>,
    /// Refreshment rate for continuous-time samplers.
    pub lambda_ref: Option<f64>,
    /// Bounce operator: reflect | flip | independent | reverse-parallel |
    /// redraw-parallel | autoregressive.
    pub bounce: Option<String>,
    /// Leapfrog step count.
    pub l: Option<usize>,
    /// Interpolation points per gradient-free difference.
    pub n_cpt: Option<usize>,
    /// Finite-difference half-width.
    pub h: Option<f64>,
    /// Redraw probability of the autoregressive bounce.
    pub p_b: Option<f64>,
    /// Perpendicular correlation of the autoregressive bounce.
    pub rho: Option<f64>,
    /// Velocity refreshment probability wrapped around discrete kernels.
    pub refresh: Option<f64>,
    /// Index-set route for the subsampled kernel: binomial | poisson.
    pub route: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    pub d: Option<usize>,
    /// Per-coordinate standard deviations for gaussian-diag; single scale
    /// for rotation-gaussian.
    pub sigma: Option<Vec<f64>>,
    /// Latent path prior: bridge | identity.
    pub prior: Option<String>,
    /// One Poisson count every this many latent coordinates.
    pub obs_spacing: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Continuous-time event budget; discrete kernels read this as steps.
    Events(usize),
    /// Discrete step budget; continuous-time samplers read this as events.
    Steps(usize),
    /// Sampling-loop wall-clock budget per replicate.
    WallMs(f64),
}

impl Budget {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = match self {
            Budget::Events(n) | Budget::Steps(n) => *n > 0,
            Budget::WallMs(ms) => *ms > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ConfigError::new("budget", "must be positive"))
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub base: u64,
    pub replicates: usize,
}

/// Validation failure carrying the path of the offending field.
#[derive(Clone, Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// What one replicate records: a scalar path functional and, when the
/// target's law is known in closed form, its expectation.
#[derive(Clone)]
pub struct Observable {
    pub f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub truth: Option<f64>,
}

pub struct BuiltTarget {
    pub target: ExtendedTarget,
    pub observable: Observable,
    pub d: usize,
}

pub enum CtSampler {
    Global(GlobalBps),
    Local(LocalBps),
    Zig(ZigZag),
    Ham(HamiltonianBps),
}

pub enum BuiltSampler {
    Ct(CtSampler),
    Dt(WithRefresh<Box<dyn DiscreteKernel + Send + Sync>>),
    Mh(NoisyMetropolis),
}

fn parse_bounce(spec: &SamplerSpec) -> Result<BounceKind, ConfigError> {
    Ok(match spec.bounce.as_deref().unwrap_or("reflect") {
        "reflect" => BounceKind::Reflect,
        "flip" => BounceKind::Flip,
        "independent" => BounceKind::Independent,
        "reverse-parallel" => BounceKind::ReverseParallel,
        "redraw-parallel" => BounceKind::RedrawParallel,
        "autoregressive" => BounceKind::Autoregressive {
            redraw_prob: spec.p_b.unwrap_or(0.5),
            perp_corr: spec.rho.unwrap_or(0.0),
        },
        other => {
            return Err(ConfigError::new(
                "sampler.bounce",
                format!("unknown bounce operator `{other}`"),
            ))
        }
    })
}

fn require_eps(spec: &SamplerSpec) -> Result<f64, ConfigError> {
    match spec.eps {
        Some(e) if e > 0.0 => Ok(e),
        Some(e) => Err(ConfigError::new("sampler.eps", format!("{e} not positive"))),
        None => Err(ConfigError::new(
            "sampler.eps",
            format!("required by sampler `{}`", spec.name),
        )),
    }
}

fn prior_kind(spec: &TargetSpec) -> Result<targets::PriorKind, ConfigError> {
    Ok(match spec.prior.as_deref().unwrap_or("bridge") {
        "bridge" => targets::PriorKind::Bridge,
        "identity" => targets::PriorKind::Identity,
        other => {
            return Err(ConfigError::new(
                "target.prior",
                format!("unknown prior `{other}`"),
            ))
        }
    })
}

fn require_d(spec: &TargetSpec) -> Result<usize, ConfigError> {
    match spec.d {
        Some(d) if d >= 1 => Ok(d),
        Some(_) => Err(ConfigError::new("target.d", "must be at least 1")),
        None => Err(ConfigError::new(
            "target.d",
            format!("required by target `{}`", spec.name),
        )),
    }
}

fn coordinate_sq(index: usize) -> Observable {
    Observable {
        f: Arc::new(move |x: &[f64]| x[index] * x[index]),
        truth: None,
    }
}

/// Synthetic observations for the latent Poisson targets, drawn once per
/// configuration from a role reserved off the replicate streams.
fn synthesize(
    prior: targets::PriorKind,
    d: usize,
    spacing: usize,
    base_seed: u64,
) -> Vec<targets::Observation> {
    let k = (d / spacing).max(1);
    let sites = targets::evenly_spaced_indices(d, k);
    let mut rng = substream(base_seed, u64::MAX, 9);
    targets::synthesize_counts(prior, d, &sites, &mut rng)
}

pub fn build_target(spec: &TargetSpec, base_seed: u64) -> Result<BuiltTarget, ConfigError> {
    let (target, observable, d) = match spec.name.as_str() {
        "isotropic" => {
            let d = require_d(spec)?;
            let mut o = coordinate_sq(0);
            o.truth = Some(1.0);
            (targets::isotropic(d), o, d)
        }
        "funnel" => {
            let d = require_d(spec)?;
            let mut o = coordinate_sq(0);
            o.truth = Some(1.0);
            (targets::funnel(d), o, d)
        }
        "gaussian-diag" => {
            let sigma = spec.sigma.clone().ok_or_else(|| {
                ConfigError::new("target.sigma", "required by target `gaussian-diag`")
            })?;
            if sigma.iter().any(|&s| !(s > 0.0)) {
                return Err(ConfigError::new("target.sigma", "scales must be positive"));
            }
            if let Some(d) = spec.d {
                if d != sigma.len() {
                    return Err(ConfigError::new(
                        "target.d",
                        format!("{} does not match {} scales", d, sigma.len()),
                    ));
                }
            }
            let d = sigma.len();
            let mut o = coordinate_sq(0);
            o.truth = Some(sigma[0] * sigma[0]);
            (targets::gaussian_diag(&sigma), o, d)
        }
        "rotation-gaussian" => {
            let d = require_d(spec)?;
            let var = match spec.sigma.as_deref() {
                None => 1.0,
                Some([s]) if *s > 0.0 => s * s,
                Some(_) => {
                    return Err(ConfigError::new(
                        "target.sigma",
                        "rotation-gaussian takes a single positive scale",
                    ))
                }
            };
            let mut o = coordinate_sq(0);
            o.truth = Some(var);
            (targets::gaussian_for_rotation(d, var), o, d)
        }
        "latent-poisson" => {
            let d = require_d(spec)?;
            let prior = prior_kind(spec)?;
            let spacing = spec.obs_spacing.unwrap_or(16).max(1);
            let obs = synthesize(prior, d, spacing, base_seed);
            let mid = d / 2;
            let o = Observable {
                f: Arc::new(move |x: &[f64]| x[mid]),
                truth: None,
            };
            (targets::latent_poisson(prior, d, &obs), o, d)
        }
        "latent-poisson-whitened" => {
            let d = require_d(spec)?;
            let prior = prior_kind(spec)?;
            let spacing = spec.obs_spacing.unwrap_or(16).max(1);
            let obs = synthesize(prior, d, spacing, base_seed);
            let white = targets::latent_poisson_whitened(prior, d, &obs);
            let weights = white.cholesky().col_inverse(d / 2);
            let o = Observable {
                f: Arc::new(move |y: &[f64]| {
                    weights.iter().map(|&(k, w)| w * y[k]).sum()
                }),
                truth: None,
            };
            (white.target, o, d)
        }
        other => {
            return Err(ConfigError::new(
                "target.name",
                format!("unknown target `{other}`"),
            ))
        }
    };
    Ok(BuiltTarget {
        target,
        observable,
        d,
    })
}

/// Constant slice decomposition re-using the target's own potential: the
/// degenerate index model that makes the doubly-stochastic machinery run
/// on plain targets.
fn const_slice_model(target: ExtendedTarget) -> Result<OmegaModel, ConfigError> {
    let pe = target.potential.clone();
    let pg = target.potential.clone();
    let pb = target.potential.clone();
    OmegaModel::new(
        target,
        Arc::new(move |_w, x: &[f64]| pe.eval(x)),
        Arc::new(move |_w, x: &[f64], g: &mut [f64]| {
            let full = pg.grad(x);
            for (gi, fi) in g.iter_mut().zip(&full) {
                *gi += fi;
            }
        }),
        vec![0.0, 1.0],
        Arc::new(move |_j, from: &[f64], to: &[f64]| pb.eval(to) - pb.eval(from)),
    )
    .map_err(|e| ConfigError::new("sampler.name", e.to_string()))
}

fn sampler_err(e: pdmcmc::Error) -> ConfigError {
    ConfigError::new("sampler", e.to_string())
}

pub fn build_sampler(
    spec: &SamplerSpec,
    built: &BuiltTarget,
) -> Result<BuiltSampler, ConfigError> {
    let target = built.target.clone();
    let lambda = spec.lambda_ref.unwrap_or(1.0);
    if lambda < 0.0 {
        return Err(ConfigError::new("sampler.lambda_ref", "must be nonnegative"));
    }
    let refresh = spec.refresh.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&refresh) {
        return Err(ConfigError::new("sampler.refresh", "must lie in [0, 1]"));
    }
    let dt_kernel = |k: Box<dyn DiscreteKernel + Send + Sync>| {
        BuiltSampler::Dt(WithRefresh::new(k, refresh))
    };
    Ok(match spec.name.as_str() {
        "global-bps" => BuiltSampler::Ct(CtSampler::Global(
            GlobalBps::new(target, lambda)
                .with_bounce(parse_bounce(spec)?)
                .map_err(sampler_err)?,
        )),
        "local-bps" => BuiltSampler::Ct(CtSampler::Local(
            LocalBps::new(target, lambda).map_err(sampler_err)?,
        )),
        "zigzag" => {
            let d = built.d;
            let corners = target.with_velocity(VelocityLaw::HypercubeCorners { dim: d });
            BuiltSampler::Ct(CtSampler::Zig(
                ZigZag::new(corners, spec.lambda_ref.unwrap_or(0.0)).map_err(sampler_err)?,
            ))
        }
        "hamiltonian-bps" => BuiltSampler::Ct(CtSampler::Ham(
            HamiltonianBps::new(target, lambda, parse_bounce(spec)?).map_err(sampler_err)?,
        )),
        "guided-rw" => {
            let d = built.d;
            let corners = target.with_velocity(VelocityLaw::HypercubeCorners { dim: d });
            dt_kernel(Box::new(dt::guided_random_walk(corners, require_eps(spec)?)))
        }
        "hmc" => dt_kernel(Box::new(dt::hmc(
            target,
            require_eps(spec)?,
            spec.l.unwrap_or(10),
        ))),
        "reflective-slice-inner" => dt_kernel(Box::new(dt::reflective_slice(
            target,
            require_eps(spec)?,
            ReflectVariant::Inner,
        ))),
        "reflective-slice-outer" => dt_kernel(Box::new(dt::reflective_slice(
            target,
            require_eps(spec)?,
            ReflectVariant::Outer,
        ))),
        "dt-bps" => dt_kernel(Box::new(
            dt::DtBps::new(target, require_eps(spec)?, parse_bounce(spec)?)
                .map_err(sampler_err)?,
        )),
        "dt-hamiltonian-bps" => {
            let eps = require_eps(spec)?;
            let flow = match spec.l {
                Some(l) => HamFlow::Leapfrog { eps, steps: l },
                None => HamFlow::Rotation { eps },
            };
            dt_kernel(Box::new(
                dt::DtHamiltonianBps::new(target, flow).map_err(sampler_err)?,
            ))
        }
        "gradient-free-numdiff" => dt_kernel(Box::new(
            dt::DtGradientFreeBps::new(
                target,
                require_eps(spec)?,
                GradientFreeMode::NumDiff {
                    n_cpt: spec.n_cpt.unwrap_or(1),
                    h: spec.h.unwrap_or(1e-4),
                },
            )
            .map_err(sampler_err)?,
        )),
        "gradient-free-rejection" => dt_kernel(Box::new(
            dt::DtGradientFreeBps::new(target, require_eps(spec)?, GradientFreeMode::Rejection)
                .map_err(sampler_err)?,
        )),
        "local-dt-bps" => dt_kernel(Box::new(
            LocalBpsDt::new(target, require_eps(spec)?).map_err(sampler_err)?,
        )),
        "prefetch-local-bps" => dt_kernel(Box::new(
            PrefetchLocalBps::new(target, require_eps(spec)?).map_err(sampler_err)?,
        )),
        "subsampled-local-bps" => {
            let route = match spec.route.as_deref().unwrap_or("poisson") {
                "poisson" => SetRoute::Poisson,
                "binomial" => SetRoute::Binomial,
                other => {
                    return Err(ConfigError::new(
                        "sampler.route",
                        format!("unknown route `{other}`"),
                    ))
                }
            };
            dt_kernel(Box::new(
                SubsampledLocalBps::new(target, require_eps(spec)?, route)
                    .map_err(sampler_err)?,
            ))
        }
        "doubly-stochastic-bps" => dt_kernel(Box::new(
            pdmcmc::doubly::DoublyStochasticBps::new(
                const_slice_model(target)?,
                require_eps(spec)?,
            )
            .map_err(sampler_err)?,
        )),
        "noisy-mh" => BuiltSampler::Mh(
            NoisyMetropolis::new(const_slice_model(target)?, require_eps(spec)?)
                .map_err(sampler_err)?,
        ),
        other => {
            return Err(ConfigError::new(
                "sampler.name",
                format!("unknown sampler `{other}`"),
            ))
        }
    })
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| ConfigError::new("config", e.to_string()))?;
    cfg.budget.validate()?;
    if cfg.seeds.replicates == 0 {
        return Err(ConfigError::new("seeds.replicates", "must be positive"));
    }
    if cfg.output.as_os_str().is_empty() {
        return Err(ConfigError::new("output", "must name a file"));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str) -> TargetSpec {
        TargetSpec {
            name: name.into(),
            d: Some(4),
            ..Default::default()
        }
    }

    #[test]
    fn unknown_names_point_at_their_fields() {
        let err = build_target(&spec("no-such-target"), 1).unwrap_err();
        assert_eq!(err.field, "target.name");
        let t = build_target(&spec("isotropic"), 1).unwrap();
        let err = build_sampler(
            &SamplerSpec {
                name: "no-such-sampler".into(),
                ..Default::default()
            },
            &t,
        )
        .unwrap_err();
        assert_eq!(err.field, "sampler.name");
    }

    #[test]
    fn missing_step_size_is_reported() {
        let t = build_target(&spec("isotropic"), 1).unwrap();
        let err = build_sampler(
            &SamplerSpec {
                name: "dt-bps".into(),
                ..Default::default()
            },
            &t,
        )
        .unwrap_err();
        assert_eq!(err.field, "sampler.eps");
    }

    #[test]
    fn every_registered_sampler_builds_on_a_gaussian() {
        let t = build_target(&spec("isotropic"), 1).unwrap();
        for name in [
            "global-bps",
            "local-bps",
            "zigzag",
            "guided-rw",
            "hmc",
            "reflective-slice-inner",
            "reflective-slice-outer",
            "dt-bps",
            "gradient-free-numdiff",
            "gradient-free-rejection",
            "local-dt-bps",
            "prefetch-local-bps",
            "subsampled-local-bps",
            "doubly-stochastic-bps",
            "noisy-mh",
        ] {
            let s = SamplerSpec {
                name: name.into(),
                eps: Some(0.3),
                ..Default::default()
            };
            assert!(build_sampler(&s, &t).is_ok(), "{name}");
        }
        // rotation-flow samplers need the residual decomposition
        let rot = build_target(&spec("rotation-gaussian"), 1).unwrap();
        for name in ["hamiltonian-bps", "dt-hamiltonian-bps"] {
            let s = SamplerSpec {
                name: name.into(),
                eps: Some(0.3),
                ..Default::default()
            };
            assert!(build_sampler(&s, &rot).is_ok(), "{name}");
        }
    }

    #[test]
    fn whitened_observable_maps_to_original_coordinates() {
        let mut t = spec("latent-poisson-whitened");
        t.d = Some(8);
        t.obs_spacing = Some(4);
        let built = build_target(&t, 7).unwrap();
        let y = vec![0.5; 8];
        let chol =
            targets::BidiagonalCholesky::for_prior(targets::PriorKind::Bridge, 8);
        let x = chol.solve_transpose(&y);
        assert!(((built.observable.f)(&y) - x[4]).abs() < 1e-12);
    }
}
