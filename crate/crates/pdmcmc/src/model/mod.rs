//! State space, velocity laws, factorized potentials and deterministic flows.

mod flow;
pub mod targets;

pub use flow::{linear_flow, rotation_flow, Flow};

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg;

/// Position-velocity pair. Both halves always have the same length.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(x.len(), v.len(), "position/velocity length mismatch");
        assert!(
            x.iter().chain(v.iter()).all(|t| t.is_finite()),
            "non-finite state component"
        );
        State { x, v }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// The velocity-flip involution `(x, v) -> (x, -v)`.
    pub fn flipped(&self) -> State {
        State {
            x: self.x.clone(),
            v: self.v.iter().map(|t| -t).collect(),
        }
    }

    pub fn flip(&mut self) {
        for t in &mut self.v {
            *t = -*t;
        }
    }
}

/// Distribution the velocity is refreshed from.
#[derive(Clone, Debug)]
pub enum VelocityLaw {
    StandardNormal { dim: usize },
    UniformSphere { dim: usize, radius: f64 },
    /// Independent signs on each coordinate, unit speed per coordinate.
    HypercubeCorners { dim: usize },
}

impl VelocityLaw {
    pub fn dim(&self) -> usize {
        match self {
            VelocityLaw::StandardNormal { dim }
            | VelocityLaw::UniformSphere { dim, .. }
            | VelocityLaw::HypercubeCorners { dim } => *dim,
        }
    }

    pub fn sample(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        match self {
            VelocityLaw::StandardNormal { dim } => {
                (0..*dim).map(|_| rng.sample(StandardNormal)).collect()
            }
            VelocityLaw::UniformSphere { dim, radius } => loop {
                let v: Vec<f64> = (0..*dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = linalg::norm(&v);
                if n > 1e-12 {
                    return v.iter().map(|t| t * radius / n).collect();
                }
            },
            VelocityLaw::HypercubeCorners { dim } => (0..*dim)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        }
    }

    /// Log-density up to an additive constant. Uniform laws contribute zero;
    /// ratios across them are only meaningful between points of equal speed.
    pub fn log_density_term(&self, v: &[f64]) -> f64 {
        match self {
            VelocityLaw::StandardNormal { .. } => -0.5 * linalg::norm_sq(v),
            VelocityLaw::UniformSphere { .. } | VelocityLaw::HypercubeCorners { .. } => 0.0,
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

enum Form {
    /// Potential of one linear functional: `U_i(x) = f(<w, x>)`.
    Scalar {
        weights: Vec<(usize, f64)>,
        weight_norm: f64,
        f: ScalarFn,
        df: ScalarFn,
        convex: bool,
        /// `df_bound(c) >= sup { |f'(w)| : |w| <= c }`.
        df_bound: Option<ScalarFn>,
    },
    General {
        eval: FieldFn,
        grad: GradFn,
        /// `grad_bound(b) >= sup { |grad U_i(x)| : |x| <= b }`.
        grad_bound: Option<ScalarFn>,
    },
}

/// One additive term of a potential, touching only `support` coordinates.
pub struct Factor {
    support: Vec<usize>,
    form: Form,
}

impl Factor {
    pub fn scalar(
        weights: Vec<(usize, f64)>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(!weights.is_empty());
        let support: Vec<usize> = weights.iter().map(|&(i, _)| i).collect();
        let weight_norm = weights.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        Factor {
            support,
            form: Form::Scalar {
                weights,
                weight_norm,
                f: Arc::new(f),
                df: Arc::new(df),
                convex: false,
                df_bound: None,
            },
        }
    }

    /// Mark the scalar profile as convex (its slope is nondecreasing).
    pub fn convex(mut self) -> Self {
        match &mut self.form {
            Form::Scalar { convex, .. } => *convex = true,
            Form::General { .. } => panic!("convexity flag applies to scalar factors"),
        }
        self
    }

    /// Attach a slope bound `b(c) >= sup_{|w| <= c} |f'(w)|`.
    pub fn with_slope_bound(mut self, b: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        match &mut self.form {
            Form::Scalar { df_bound, .. } => *df_bound = Some(Arc::new(b)),
            Form::General { .. } => panic!("slope bound applies to scalar factors"),
        }
        self
    }

    pub fn general(
        support: Vec<usize>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Factor {
            support,
            form: Form::General {
                eval: Arc::new(eval),
                grad: Arc::new(grad),
                grad_bound: None,
            },
        }
    }

    /// Attach a gradient-norm bound `b(r) >= sup_{|x| <= r} |grad U_i(x)|`.
    pub fn with_grad_bound(mut self, b: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        match &mut self.form {
            Form::General { grad_bound, .. } => *grad_bound = Some(Arc::new(b)),
            Form::Scalar { .. } => panic!("use with_slope_bound for scalar factors"),
        }
        self
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.form {
            Form::Scalar { weights, f, .. } => {
                f(weights.iter().map(|&(i, w)| w * x[i]).sum())
            }
            Form::General { eval, .. } => eval(x),
        }
    }

    /// Accumulate the factor gradient into `out` (full-length buffer).
    pub fn add_grad(&self, x: &[f64], out: &mut [f64]) {
        match &self.form {
            Form::Scalar { weights, df, .. } => {
                let s = df(weights.iter().map(|&(i, w)| w * x[i]).sum());
                for &(i, w) in weights {
                    out[i] += s * w;
                }
            }
            Form::General { grad, .. } => {
                let mut buf = vec![0.0; x.len()];
                grad(x, &mut buf);
                for (o, g) in out.iter_mut().zip(&buf) {
                    *o += g;
                }
            }
        }
    }

    /// `d/dt U_i(x + t v)` at `t = 0`.
    pub fn directional_derivative(&self, x: &[f64], v: &[f64]) -> f64 {
        match &self.form {
            Form::Scalar { weights, df, .. } => {
                let w0: f64 = weights.iter().map(|&(i, w)| w * x[i]).sum();
                let wv: f64 = weights.iter().map(|&(i, w)| w * v[i]).sum();
                df(w0) * wv
            }
            Form::General { grad, .. } => {
                let mut buf = vec![0.0; x.len()];
                grad(x, &mut buf);
                linalg::dot(&buf, v)
            }
        }
    }

    /// Bound on `|grad U_i|` over the ball `|x| <= r`, if one is known.
    pub fn grad_norm_bound(&self, r: f64) -> Option<f64> {
        match &self.form {
            Form::Scalar {
                weight_norm,
                df_bound,
                ..
            } => df_bound.as_ref().map(|b| weight_norm * b(weight_norm * r)),
            Form::General { grad_bound, .. } => grad_bound.as_ref().map(|b| b(r)),
        }
    }

    /// Restriction to the line `x + t v`, available for scalar factors.
    pub fn scalar_ray(&self, x: &[f64], v: &[f64]) -> Option<ScalarRay<'_>> {
        match &self.form {
            Form::Scalar { weights, .. } => {
                let w0: f64 = weights.iter().map(|&(i, w)| w * x[i]).sum();
                let wv: f64 = weights.iter().map(|&(i, w)| w * v[i]).sum();
                Some(ScalarRay {
                    w0,
                    wv,
                    factor: self,
                })
            }
            Form::General { .. } => None,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(&self.form, Form::Scalar { .. })
    }

    pub fn is_convex_scalar(&self) -> bool {
        matches!(&self.form, Form::Scalar { convex: true, .. })
    }

    pub fn has_gradient_bound(&self) -> bool {
        match &self.form {
            Form::Scalar { df_bound, .. } => df_bound.is_some(),
            Form::General { grad_bound, .. } => grad_bound.is_some(),
        }
    }
}

/// A scalar factor restricted to a line: the projected coordinate moves as
/// `w(t) = w0 + wv t` under linear flow.
pub struct ScalarRay<'a> {
    pub w0: f64,
    pub wv: f64,
    factor: &'a Factor,
}

impl ScalarRay<'_> {
    pub fn value(&self, t: f64) -> f64 {
        match &self.factor.form {
            Form::Scalar { f, .. } => f(self.w0 + self.wv * t),
            Form::General { .. } => unreachable!(),
        }
    }

    /// `d/dt U_i(x + t v)`.
    pub fn slope(&self, t: f64) -> f64 {
        match &self.factor.form {
            Form::Scalar { df, .. } => df(self.w0 + self.wv * t) * self.wv,
            Form::General { .. } => unreachable!(),
        }
    }

    pub fn profile(&self, w: f64) -> f64 {
        match &self.factor.form {
            Form::Scalar { f, .. } => f(w),
            Form::General { .. } => unreachable!(),
        }
    }

    pub fn profile_slope(&self, w: f64) -> f64 {
        match &self.factor.form {
            Form::Scalar { df, .. } => df(w),
            Form::General { .. } => unreachable!(),
        }
    }

    /// Bound on `|f'(w)|` for `|w| <= c`, if the factor carries one.
    pub fn slope_bound(&self, c: f64) -> Option<f64> {
        match &self.factor.form {
            Form::Scalar { df_bound, .. } => df_bound.as_ref().map(|b| b(c)),
            Form::General { .. } => unreachable!(),
        }
    }
}

/// Negative log-density on position space, optionally with an additive
/// factor decomposition.
#[derive(Clone)]
pub struct Potential {
    dim: usize,
    eval: FieldFn,
    grad: GradFn,
    factors: Option<Arc<Vec<Factor>>>,
}

impl Potential {
    pub fn new(
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Potential {
            dim,
            eval: Arc::new(eval),
            grad: Arc::new(grad),
            factors: None,
        }
    }

    /// Sum of factors; evaluation and gradient are derived.
    pub fn from_factors(dim: usize, factors: Vec<Factor>) -> Self {
        let shared = Arc::new(factors);
        let fe = Arc::clone(&shared);
        let fg = Arc::clone(&shared);
        Potential {
            dim,
            eval: Arc::new(move |x| fe.iter().map(|f| f.eval(x)).sum()),
            grad: Arc::new(move |x, out| {
                out.fill(0.0);
                for f in fg.iter() {
                    f.add_grad(x, out);
                }
            }),
            factors: Some(shared),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        (self.grad)(x, out);
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.grad_into(x, &mut out);
        out
    }

    /// `d/dt U(x + t v)` at `t = 0`.
    pub fn directional_derivative(&self, x: &[f64], v: &[f64]) -> f64 {
        linalg::dot(&self.grad(x), v)
    }

    pub fn factors(&self) -> Option<&[Factor]> {
        self.factors.as_deref().map(|v| v.as_slice())
    }
}

/// Quadratic remainder `U - |x|^2/2`, factorized, for rotation-flow samplers.
#[derive(Clone)]
pub struct Residual {
    pub factors: Arc<Vec<Factor>>,
}

impl Residual {
    pub fn new(factors: Vec<Factor>) -> Self {
        Residual {
            factors: Arc::new(factors),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.factors.iter().map(|f| f.eval(x)).sum()
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for f in self.factors.iter() {
            f.add_grad(x, out);
        }
    }

    pub fn directional_derivative(&self, x: &[f64], v: &[f64]) -> f64 {
        self.factors
            .iter()
            .map(|f| f.directional_derivative(x, v))
            .sum()
    }
}

/// Target on the extended space: position potential, velocity law, and (for
/// rotation-flow samplers) the potential's remainder above the unit quadratic.
#[derive(Clone)]
pub struct ExtendedTarget {
    pub potential: Potential,
    pub velocity: VelocityLaw,
    pub residual: Option<Residual>,
}

impl ExtendedTarget {
    pub fn new(potential: Potential, velocity: VelocityLaw) -> Self {
        assert_eq!(potential.dim(), velocity.dim());
        ExtendedTarget {
            potential,
            velocity,
            residual: None,
        }
    }

    pub fn with_residual(mut self, residual: Residual) -> Self {
        self.residual = Some(residual);
        self
    }

    pub fn with_velocity(mut self, velocity: VelocityLaw) -> Self {
        assert_eq!(self.potential.dim(), velocity.dim());
        self.velocity = velocity;
        self
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    /// Log-density of the extended target, up to an additive constant.
    pub fn log_rho(&self, z: &State) -> f64 {
        -self.potential.eval(&z.x) + self.velocity.log_density_term(&z.v)
    }
}
