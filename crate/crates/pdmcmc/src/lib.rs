//! Samplers built from deterministic flows punctuated by random events.
//!
//! The continuous-time kernels (`ct`) move a state `(x, v)` along a flow and
//! trigger velocity events from state-dependent Poisson intensities. The
//! discrete-time kernels (`dt`, `local`, `doubly`) replace the flow by a fixed
//! step map and the intensities by per-step acceptance probabilities, which
//! removes all integrated-rate computations while keeping the target invariant.
//!
//! ```
//! use pdmcmc::model::{targets, State};
//! use pdmcmc::ct::{GlobalBps, StopRule};
//! use pdmcmc::stream::substream;
//!
//! let target = targets::gaussian_diag(&[1.0, 1.0]);
//! let sampler = GlobalBps::new(target, 1.0);
//! let mut rng = substream(7, 0, 0);
//! let z0 = State::new(vec![0.0, 0.0], vec![1.0, -1.0]);
//! let traj = sampler.run(z0, StopRule::Time(50.0), &mut rng).unwrap();
//! assert!(traj.total_time >= 50.0 - 1e-9);
//! ```

pub mod bounce;
pub mod ct;
pub mod diagnostics;
pub mod doubly;
pub mod dt;
mod error;
pub mod linalg;
pub mod local;
pub mod model;
pub mod quadrature;
pub mod stats;
pub mod stream;
pub mod suite;

pub use error::{Error, Result};
