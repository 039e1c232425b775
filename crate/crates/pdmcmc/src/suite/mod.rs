//! End-to-end battery exercising every shipped sampler against its
//! quantitative contract: stationarity on the standard 2-d Gaussian, the
//! small-step bounce-rate limit, exactness of the subsampling machinery,
//! reductions Hamiltonian flows must satisfy, qualitative orderings between
//! bounce operators and between local and global samplers, and pointwise
//! algebraic identities. Each criterion is deterministic given its
//! committed seed block and reports a verdict with a summary line.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bounce::BounceKind;
use crate::ct::{self, EventLabel, StopRule};
use crate::diagnostics::{ess_batch_means, stationarity_check, StationaritySettings};
use crate::doubly::{DoublyStochasticBps, NoisyMetropolis, OmegaModel};
use crate::dt::{
    self, DiscreteKernel, GradientFreeMode, HamFlow, ReflectVariant, StepKind, WithRefresh,
};
use crate::linalg;
use crate::local::{
    exact_logconcave_event_time, sample_bernoulli_set_binomial, sample_bernoulli_set_poisson,
    LocalBpsDt, PrefetchLocalBps, SetRoute, SubsampledLocalBps,
};
use crate::model::{targets, ExtendedTarget, Flow, State, VelocityLaw};
use crate::stats;
use crate::stream::substream;
use crate::Result;

/// Verdict for one criterion of the battery.
#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub details: String,
}

/// Run every criterion in order. Heavy by design; intended for the
/// acceptance harness rather than the unit cycle.
pub fn run_all() -> Result<Vec<CriterionOutcome>> {
    Ok(vec![
        stationarity_battery()?,
        weak_convergence_grid()?,
        set_sampler_exactness()?,
        exact_event_time_agreement()?,
        hamiltonian_reduction()?,
        randomized_bounce_ordering()?,
        local_vs_global_efficiency()?,
        identity_battery()?,
        noisy_mh_equivalence()?,
    ])
}

fn unit_cdf(x: f64) -> f64 {
    stats::normal_cdf(x, 0.0, 1.0)
}

/// Exact stationary start for a target whose coordinates are unit
/// Gaussians, with the velocity from the target's own law.
fn warm_unit_start(target: &ExtendedTarget, rng: &mut dyn rand::RngCore) -> State {
    let x = (0..target.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let v = target.velocity.sample(rng);
    State::new(x, v)
}

fn kernel_paths(
    k: &(impl DiscreteKernel + ?Sized),
    steps: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<Vec<f64>>> {
    let mut z = warm_unit_start(k.target(), rng);
    let d = z.dim();
    let mut paths = vec![Vec::with_capacity(steps); d];
    dt::run_chain(k, &mut z, steps, rng, |s| {
        for (p, &x) in paths.iter_mut().zip(&s.x) {
            p.push(x);
        }
    })?;
    Ok(paths)
}

fn trajectory_paths(traj: &ct::Trajectory, stride: f64) -> Vec<Vec<f64>> {
    let d = traj.segments.first().map_or(0, |s| s.start.dim());
    (0..d).map(|i| traj.coordinate_snapshots(i, stride)).collect()
}

/// Slice decomposition whose every slice is the full potential of the
/// standard Gaussian: the degenerate index model with exact envelopes.
fn const_slices(dim: usize) -> OmegaModel {
    let t = targets::isotropic(dim);
    let pe = t.potential.clone();
    let pg = t.potential.clone();
    let pb = t.potential.clone();
    OmegaModel::new(
        t,
        Arc::new(move |_w, x| pe.eval(x)),
        Arc::new(move |_w, x, g| {
            let full = pg.grad(x);
            for (gi, fi) in g.iter_mut().zip(&full) {
                *gi += fi;
            }
        }),
        vec![0.0, 1.0],
        Arc::new(move |_j, from, to| pb.eval(to) - pb.eval(from)),
    )
    .expect("two-point partition is valid")
}

type BatteryRun = Box<dyn Fn(&mut dyn rand::RngCore) -> Result<Vec<Vec<f64>>>>;

fn iso2() -> ExtendedTarget {
    targets::isotropic(2)
}

fn corners2() -> ExtendedTarget {
    targets::isotropic(2).with_velocity(VelocityLaw::HypercubeCorners { dim: 2 })
}

/// Every shipped sampler, configured for the standard 2-d Gaussian. The
/// straight-line walk with sign velocities lives on a position lattice of
/// its step size, so it gets a small step to keep the lattice below the
/// KS resolution, plus sign refreshes for irreducibility.
fn battery_entries() -> Vec<(&'static str, BatteryRun)> {
    let mut out: Vec<(&'static str, BatteryRun)> = Vec::new();
    out.push((
        "global-bps",
        Box::new(|rng| {
            let s = ct::GlobalBps::new(iso2(), 1.0);
            let z0 = warm_unit_start(s.target(), rng);
            let traj = s.run(z0, StopRule::Time(3000.0), rng)?;
            Ok(trajectory_paths(&traj, 1.5))
        }),
    ));
    out.push((
        "local-bps",
        Box::new(|rng| {
            let s = ct::LocalBps::new(iso2(), 1.0)?;
            let z0 = warm_unit_start(s.target(), rng);
            let traj = s.run(z0, StopRule::Time(3000.0), rng)?;
            Ok(trajectory_paths(&traj, 1.5))
        }),
    ));
    out.push((
        "zigzag",
        Box::new(|rng| {
            let s = ct::ZigZag::new(corners2(), 0.0)?;
            let z0 = warm_unit_start(s.target(), rng);
            let traj = s.run(z0, StopRule::Time(3000.0), rng)?;
            Ok(trajectory_paths(&traj, 1.5))
        }),
    ));
    out.push((
        "hamiltonian-bps",
        Box::new(|rng| {
            let s = ct::HamiltonianBps::new(
                targets::gaussian_for_rotation(2, 1.0),
                1.0,
                BounceKind::Reflect,
            )?;
            let z0 = warm_unit_start(s.target(), rng);
            let traj = s.run(z0, StopRule::Time(3000.0), rng)?;
            Ok(trajectory_paths(&traj, 1.5))
        }),
    ));
    out.push((
        "guided-rw",
        Box::new(|rng| {
            let k = WithRefresh::new(dt::guided_random_walk(corners2(), 0.05), 0.02);
            kernel_paths(&k, 1_000_000, rng)
        }),
    ));
    out.push((
        "hmc",
        Box::new(|rng| {
            let k = WithRefresh::new(dt::hmc(iso2(), 0.25, 4), 1.0);
            kernel_paths(&k, 100_000, rng)
        }),
    ));
    out.push((
        "reflective-slice-inner",
        Box::new(|rng| {
            let k = WithRefresh::new(
                dt::reflective_slice(iso2(), 0.3, ReflectVariant::Inner),
                0.1,
            );
            kernel_paths(&k, 200_000, rng)
        }),
    ));
    out.push((
        "reflective-slice-outer",
        Box::new(|rng| {
            let k = WithRefresh::new(
                dt::reflective_slice(iso2(), 0.3, ReflectVariant::Outer),
                0.1,
            );
            kernel_paths(&k, 200_000, rng)
        }),
    ));
    for (name, kind) in [
        ("dt-bps-reflect", BounceKind::Reflect),
        ("dt-bps-flip", BounceKind::Flip),
        ("dt-bps-independent", BounceKind::Independent),
        ("dt-bps-reverse-parallel", BounceKind::ReverseParallel),
    ] {
        out.push((
            name,
            Box::new(move |rng: &mut dyn rand::RngCore| {
                let k = WithRefresh::new(dt::DtBps::new(iso2(), 0.3, kind)?, 0.1);
                kernel_paths(&k, 200_000, rng)
            }),
        ));
    }
    out.push((
        "dt-hamiltonian-bps",
        Box::new(|rng| {
            let k = WithRefresh::new(
                dt::DtHamiltonianBps::new(
                    targets::gaussian_for_rotation(2, 1.0),
                    HamFlow::Rotation { eps: 0.7 },
                )?,
                0.3,
            );
            kernel_paths(&k, 150_000, rng)
        }),
    ));
    out.push((
        "gradient-free-numdiff",
        Box::new(|rng| {
            let k = WithRefresh::new(
                dt::DtGradientFreeBps::new(
                    iso2(),
                    0.3,
                    GradientFreeMode::NumDiff { n_cpt: 2, h: 1e-4 },
                )?,
                0.1,
            );
            kernel_paths(&k, 150_000, rng)
        }),
    ));
    out.push((
        "gradient-free-rejection",
        Box::new(|rng| {
            let k = WithRefresh::new(
                dt::DtGradientFreeBps::new(iso2(), 0.3, GradientFreeMode::Rejection)?,
                0.1,
            );
            kernel_paths(&k, 150_000, rng)
        }),
    ));
    out.push((
        "local-dt-bps",
        Box::new(|rng| {
            let k = WithRefresh::new(LocalBpsDt::new(iso2(), 0.3)?, 0.1);
            kernel_paths(&k, 200_000, rng)
        }),
    ));
    out.push((
        "prefetch-local-bps",
        Box::new(|rng| {
            let k = WithRefresh::new(PrefetchLocalBps::new(iso2(), 0.3)?, 0.1);
            kernel_paths(&k, 200_000, rng)
        }),
    ));
    out.push((
        "subsampled-local-bps",
        Box::new(|rng| {
            let k = WithRefresh::new(
                SubsampledLocalBps::new(iso2(), 0.3, SetRoute::Poisson)?,
                0.1,
            );
            kernel_paths(&k, 200_000, rng)
        }),
    ));
    out.push((
        "doubly-stochastic-bps",
        Box::new(|rng| {
            let k = WithRefresh::new(DoublyStochasticBps::new(const_slices(2), 0.3)?, 0.1);
            kernel_paths(&k, 150_000, rng)
        }),
    ));
    out.push((
        "noisy-mh",
        Box::new(|rng| {
            let model = const_slices(2);
            let mut z = warm_unit_start(model.target(), rng);
            let nm = NoisyMetropolis::new(model, 1.2)?;
            let n = 150_000;
            let mut paths = vec![Vec::with_capacity(n); 2];
            for _ in 0..n {
                nm.step(&mut z, rng)?;
                for (p, &x) in paths.iter_mut().zip(&z.x) {
                    p.push(x);
                }
            }
            Ok(paths)
        }),
    ));
    out
}

/// Criterion 1: every sampler holds the standard 2-d Gaussian at three
/// committed seeds — moment z-scores with ESS-adjusted errors plus a KS
/// test per coordinate — inside a ten-minute budget.
pub fn stationarity_battery() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let settings = StationaritySettings::default();
    let entries = battery_entries();
    let mut failures = Vec::new();
    let mut runs = 0usize;
    for rep in 0..3u64 {
        for (idx, (name, run)) in entries.iter().enumerate() {
            let mut rng = substream(200, rep, idx as u64);
            let paths = run(&mut rng)?;
            let report = stationarity_check(
                &paths,
                &vec![(0.0, 1.0); paths.len()],
                |_, x| unit_cdf(x),
                &settings,
            )?;
            runs += 1;
            if !report.pass {
                failures.push(format!("{name}/seed{rep}: {:?}", report.coords));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && elapsed < 600.0;
    let details = if failures.is_empty() {
        format!("{runs} sampler runs held N(0,I2) in {elapsed:.1}s")
    } else {
        format!("{} of {runs} runs failed: {}", failures.len(), failures.join("; "))
    };
    Ok(CriterionOutcome {
        name: "stationarity-battery",
        pass,
        details,
    })
}

/// Pooled events-per-time estimate for the sign-velocity discrete BPS on
/// the 1-d standard Gaussian. Each chain starts from its own stationary
/// draw so the position lattices carry independent offsets.
pub fn flip_walk_rate(eps: f64, n_per_chain: usize, chains: u64, role: u64) -> Result<f64> {
    let mut events = 0u64;
    let mut kept = 0u64;
    for c in 0..chains {
        let t = targets::gaussian_diag(&[1.0])
            .with_velocity(VelocityLaw::HypercubeCorners { dim: 1 });
        let k = dt::DtBps::new(t, eps, BounceKind::Flip)?;
        let mut rng = substream(201, c, role);
        let x0: f64 = rng.sample(StandardNormal);
        let v0 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let mut z = State::new(vec![x0], vec![v0]);
        let burn = n_per_chain / 10;
        for _ in 0..burn {
            k.step(&mut z, &mut rng)?;
        }
        for _ in burn..n_per_chain {
            if !matches!(k.step(&mut z, &mut rng)?, StepKind::Advance) {
                events += 1;
            }
        }
        kept += (n_per_chain - burn) as u64;
    }
    Ok(events as f64 / (kept as f64 * eps))
}

/// Criterion 2: the discrete chain's bounce rate per unit time approaches
/// `1/sqrt(2 pi)` as the step shrinks, with the gap closing monotonically
/// over the committed grid and under 0.01 at the finest step.
pub fn weak_convergence_grid() -> Result<CriterionOutcome> {
    let limit = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    // chain counts scale so the Monte Carlo floor tracks each step's gap
    let grid: [(f64, usize, u64); 3] = [
        (0.5, 2_000_000, 6),
        (0.1, 25_000_000, 8),
        (0.02, 125_000_000, 8),
    ];
    let mut gaps = Vec::new();
    let mut shown = Vec::new();
    for (role, &(eps, n, chains)) in grid.iter().enumerate() {
        let est = flip_walk_rate(eps, n, chains, role as u64)?;
        gaps.push((est - limit).abs());
        shown.push(format!("eps {eps}: {est:.6}"));
    }
    let pass = gaps[2] < 0.01 && gaps[0] > gaps[1] && gaps[1] > gaps[2];
    Ok(CriterionOutcome {
        name: "weak-convergence-grid",
        pass,
        details: format!(
            "{} vs limit {limit:.6}; gaps {:.2e} > {:.2e} > {:.2e}",
            shown.join(", "),
            gaps[0],
            gaps[1],
            gaps[2]
        ),
    })
}

fn independent_set_law(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    (0..1usize << n)
        .map(|mask| {
            (0..n)
                .map(|i| if mask >> i & 1 == 1 { p[i] } else { 1.0 - p[i] })
                .product()
        })
        .collect()
}

/// Output distribution of the binomial-count route, summed exactly over
/// its randomness: candidate count, uniform candidate choice, and
/// per-candidate thinning. Binomial count over uniform size-s subsets
/// makes each candidate set C occur with plain product probability
/// `p_bar^|C| (1-p_bar)^(n-|C|)`.
fn binomial_route_law(p: &[f64], p_bar: f64) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; 1 << n];
    for cand in 0..1usize << n {
        let s = (cand as u32).count_ones() as usize;
        let p_cand = p_bar.powi(s as i32) * (1.0 - p_bar).powi((n - s) as i32);
        let mut sub = cand;
        loop {
            let mut w = p_cand;
            for i in 0..n {
                if cand >> i & 1 == 1 {
                    w *= if sub >> i & 1 == 1 {
                        p[i] / p_bar
                    } else {
                        1.0 - p[i] / p_bar
                    };
                }
            }
            out[sub] += w;
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & cand;
        }
    }
    out
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn empirical_set_law(n_cells: usize, draws: usize, mut draw: impl FnMut() -> Result<Vec<usize>>) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; n_cells];
    for _ in 0..draws {
        let set = draw()?;
        let mask = set.iter().fold(0usize, |m, &i| m | 1 << i);
        counts[mask] += 1.0;
    }
    for c in counts.iter_mut() {
        *c /= draws as f64;
    }
    Ok(counts)
}

/// Criterion 3: the batched Bernoulli-set routes reproduce independent
/// sampling — exactly under enumeration of their randomness for small
/// index sets, empirically at a million draws, and at the chain level the
/// subsampled kernel is indistinguishable from the plain one.
pub fn set_sampler_exactness() -> Result<CriterionOutcome> {
    // closed-form check of the binomial route's output law
    let mut worst_closed = 0.0f64;
    for p in [&[0.7][..], &[0.2, 0.5][..], &[0.2, 0.5, 0.8][..]] {
        let d = tv(&binomial_route_law(p, 0.85), &independent_set_law(p));
        worst_closed = worst_closed.max(d);
    }
    // the per-index route cancels algebraically: candidate probability
    // (1 - e^{ln(1-pbar)}) times thinning p/pbar is p, so its law is the
    // independent one by construction; both routes face the empirical test
    let p3 = [0.2, 0.5, 0.8];
    let truth = independent_set_law(&p3);
    let mut rng = substream(202, 0, 0);
    let emp_bin = empirical_set_law(8, 1_000_000, || {
        sample_bernoulli_set_binomial(3, |i| p3[i], 0.85, &mut rng)
    })?;
    let mut rng = substream(202, 0, 1);
    let bounds = [0.3, 1.0, 0.9];
    let emp_poi = empirical_set_law(8, 1_000_000, || {
        sample_bernoulli_set_poisson(|i| p3[i], &bounds, &mut rng)
    })?;
    let tv_bin = tv(&emp_bin, &truth);
    let tv_poi = tv(&emp_poi, &truth);

    // chain-level agreement between the subsampled and plain local kernels
    let run = |sub: bool, rng: &mut dyn rand::RngCore| -> Result<Vec<f64>> {
        let t = targets::gaussian_diag(&[1.0, 0.7]);
        let mut z = State::new(vec![0.4, -0.2], t.velocity.sample(rng));
        let n = 1_000_000;
        let mut xs = Vec::with_capacity(n);
        if sub {
            let k = WithRefresh::new(SubsampledLocalBps::new(t, 0.25, SetRoute::Poisson)?, 0.1);
            dt::run_chain(&k, &mut z, n, rng, |s| xs.push(s.x[0]))?;
        } else {
            let k = WithRefresh::new(LocalBpsDt::new(t, 0.25)?, 0.1);
            dt::run_chain(&k, &mut z, n, rng, |s| xs.push(s.x[0]))?;
        }
        Ok(xs)
    };
    let mut rng_a = substream(202, 1, 0);
    let mut rng_b = substream(202, 1, 1);
    let a = stats::thin(&run(false, &mut rng_a)?, 2000);
    let b = stats::thin(&run(true, &mut rng_b)?, 2000);
    let (_, ks_p) = stats::ks_two_sample(&a, &b)?;

    let pass = worst_closed < 1e-12 && tv_bin < 0.005 && tv_poi < 0.005 && ks_p > 0.01;
    Ok(CriterionOutcome {
        name: "set-sampler-exactness",
        pass,
        details: format!(
            "enumeration TV {worst_closed:.1e}; empirical TV bin {tv_bin:.4} poi {tv_poi:.4}; chain KS p {ks_p:.3}"
        ),
    })
}

/// Criterion 4: the closed-form log-concave event-step sampler agrees with
/// sequential per-step Bernoulli simulation on the 1-d Gaussian ray.
pub fn exact_event_time_agreement() -> Result<CriterionOutcome> {
    let n = 100_000;
    let top = 50usize;
    let mut worst = 0.0f64;
    let mut shown = Vec::new();
    for (case, &x0) in [-3.0f64, 0.0].iter().enumerate() {
        let u = move |t: f64| 0.5 * (x0 + t) * (x0 + t);
        let slope = move |t: f64| x0 + t;
        let mut rng = substream(203, case as u64, 0);
        let mut h_exact = vec![0.0f64; top];
        for _ in 0..n {
            let tau = exact_logconcave_event_time(u, slope, 1.0, &mut rng)?;
            if (tau as usize) < top {
                h_exact[tau as usize] += 1.0 / n as f64;
            }
        }
        let mut rng = substream(203, case as u64, 1);
        let mut h_oracle = vec![0.0f64; top];
        for _ in 0..n {
            let mut j = 0usize;
            loop {
                let gap = u((j + 1) as f64) - u(j as f64);
                if rng.gen::<f64>() >= (-gap.max(0.0)).exp() {
                    break;
                }
                j += 1;
            }
            if j < top {
                h_oracle[j] += 1.0 / n as f64;
            }
        }
        let d = tv(&h_exact, &h_oracle);
        worst = worst.max(d);
        shown.push(format!("x={x0}: TV {d:.4}"));
    }
    Ok(CriterionOutcome {
        name: "exact-event-times",
        pass: worst < 0.01,
        details: shown.join(", "),
    })
}

/// Criterion 5: when the reference flow solves the target exactly, the
/// Hamiltonian sampler never bounces, conserves segment energy to
/// rounding, and its refresh-time positions are standard Gaussian.
pub fn hamiltonian_reduction() -> Result<CriterionOutcome> {
    let t = targets::gaussian_for_rotation(4, 1.0);
    let s = ct::HamiltonianBps::new(t, 1.0, BounceKind::Reflect)?;
    let mut rng = substream(204, 0, 0);
    let z0 = warm_unit_start(s.target(), &mut rng);
    let traj = s.run(z0, StopRule::Time(100_000.0), &mut rng)?;
    let bounces = traj.n_events_matching(|e| matches!(e, EventLabel::Bounce));
    let mut max_drift = 0.0f64;
    let mut refresh_xs = Vec::new();
    for seg in &traj.segments {
        let end = traj.flow.at(&seg.start, seg.duration);
        let h0 = linalg::norm_sq(&seg.start.x) + linalg::norm_sq(&seg.start.v);
        let h1 = linalg::norm_sq(&end.x) + linalg::norm_sq(&end.v);
        max_drift = max_drift.max((h1 - h0).abs());
        if seg.event == Some(EventLabel::Refresh) {
            refresh_xs.push(end.x[0]);
        }
    }
    let (_, ks_p) = stats::ks_test(&stats::thin(&refresh_xs, 2000), unit_cdf)?;
    let pass = bounces == 0 && max_drift < 1e-9 && ks_p > 0.01;
    Ok(CriterionOutcome {
        name: "hamiltonian-reduction",
        pass,
        details: format!(
            "{bounces} bounces over 1e5 time units, energy drift {max_drift:.1e}, refresh KS p {ks_p:.3}"
        ),
    })
}

/// Criterion 6: global sampler on the 64-dimensional isotropic Gaussian
/// with exact event clocks, error of the first coordinate's second moment
/// after 2^14 events, averaged over 20 seeds. Without refreshment the flip
/// operator's error collapses relative to the independent-sampling one;
/// with unit-rate refreshment the four operators land close together.
pub fn randomized_bounce_ordering() -> Result<CriterionOutcome> {
    let kinds = [
        BounceKind::Reflect,
        BounceKind::Flip,
        BounceKind::Independent,
        BounceKind::ReverseParallel,
    ];
    let dim = 64usize;
    let events = 1usize << 14;
    let seeds = 20u64;
    let f = ct::TestFunction::Coordinate { index: 0, power: 2 };
    let mut means = [[0.0f64; 4]; 2];
    for (phase, lambda) in [0.0f64, 1.0].iter().enumerate() {
        for (ki, &kind) in kinds.iter().enumerate() {
            let mut acc = 0.0;
            for seed in 0..seeds {
                let mut rng = substream(205, seed, (phase * 4 + ki) as u64);
                let t = targets::isotropic(dim);
                let z0 = warm_unit_start(&t, &mut rng);
                let s = ct::GlobalBps::new(t, *lambda)
                    .with_rule(ct::RayRule::AffineSlope)
                    .with_bounce(kind)?;
                let traj = s.run(z0, StopRule::Events(events), &mut rng)?;
                acc += (traj.moment(&f) - 1.0).abs();
            }
            means[phase][ki] = acc / seeds as f64;
        }
    }
    let frozen = means[0];
    let refreshed = means[1];
    let spread = refreshed.iter().cloned().fold(f64::MIN, f64::max)
        / refreshed.iter().cloned().fold(f64::MAX, f64::min);
    let pass = frozen[1] >= 2.0 * frozen[2] && spread <= 2.0;
    Ok(CriterionOutcome {
        name: "randomized-bounce-ordering",
        pass,
        details: format!(
            "no refresh [reflect {:.3}, flip {:.3}, independent {:.3}, reverse-parallel {:.3}]; \
             refreshed [{:.3}, {:.3}, {:.3}, {:.3}] spread {spread:.2}x",
            frozen[0], frozen[1], frozen[2], frozen[3],
            refreshed[0], refreshed[1], refreshed[2], refreshed[3]
        ),
    })
}

/// Criterion 7: on a sparse chain-structured Gaussian-Poisson posterior in
/// 256 dimensions, the local sampler beats the global one on wall time per
/// effective sample in at least 80% of seeded runs.
pub fn local_vs_global_efficiency() -> Result<CriterionOutcome> {
    let dim = 256usize;
    let sites = targets::evenly_spaced_indices(dim, 16);
    let events = 20_000usize;
    let seeds = 20u64;
    let mut wins = 0usize;
    let mut ratios = Vec::new();
    for seed in 0..seeds {
        let mut rng = substream(206, seed, 0);
        let obs = targets::synthesize_counts(targets::PriorKind::Bridge, dim, &sites, &mut rng);
        let t = targets::latent_poisson(targets::PriorKind::Bridge, dim, &obs);

        let ms_per_ess = |local: bool, rng: &mut dyn rand::RngCore| -> Result<f64> {
            let t = t.clone();
            let z0 = State::new(vec![0.0; dim], t.velocity.sample(rng));
            let clock = Instant::now();
            let traj = if local {
                ct::LocalBps::new(t, 0.1)?.run(z0, StopRule::Events(events), rng)?
            } else {
                ct::GlobalBps::new(t, 0.1).run(z0, StopRule::Events(events), rng)?
            };
            let wall = clock.elapsed().as_secs_f64() * 1e3;
            let xs = traj.coordinate_snapshots(dim / 2, traj.total_time / 1600.0);
            let ess = ess_batch_means(&xs[xs.len() / 10..])?;
            Ok(wall / ess)
        };
        let mut rng_l = substream(206, seed, 1);
        let mut rng_g = substream(206, seed, 2);
        let local = ms_per_ess(true, &mut rng_l)?;
        let global = ms_per_ess(false, &mut rng_g)?;
        ratios.push(local / global);
        if local < global {
            wins += 1;
        }
    }
    let mean_ratio = stats::mean(&ratios);
    Ok(CriterionOutcome {
        name: "local-vs-global",
        pass: wins * 5 >= seeds as usize * 4,
        details: format!(
            "local cheaper per effective sample in {wins}/{seeds} runs, mean ms/ESS ratio {mean_ratio:.2}"
        ),
    })
}

fn det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut sign = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs()))
            .unwrap();
        if p != k {
            m.swap(p, k);
            sign = -sign;
        }
        if m[k][k] == 0.0 {
            return 0.0;
        }
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    sign * (0..n).map(|k| m[k][k]).product::<f64>()
}

/// Criterion 8: the pointwise identities the kernels rely on — positive
/// part balance in continuous, discrete and sliced-discrete form,
/// reflection involution and isometry, flow semigroup, leapfrog
/// reversibility and volume preservation — hold at 100 random points.
pub fn identity_battery() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let t3 = targets::gaussian_diag(&[1.0, 0.8, 1.3]);
    let lb = ct::LocalBps::new(t3.clone(), 0.5)?;
    let pot = t3.potential.clone();
    let factors = t3.potential.factors().expect("diag target is factorized");
    let slice = |w: f64, x: &[f64]| (1.0 + w) * 0.5 * linalg::norm_sq(x);
    let mut rng = substream(207, 0, 0);
    let mut checks = 0usize;
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let v: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let z = State::new(x.clone(), v.clone());

        // positive-part balance, exact in IEEE arithmetic
        let a = 3.0 * rng.sample::<f64, _>(StandardNormal);
        assert_eq!(a.max(0.0) - (-a).max(0.0), a);
        checks += 1;

        // factor rate balance: bouncing off one factor's gradient negates
        // that factor's drift, so the rate difference is the drift itself
        for i in 0..factors.len() {
            let mut g = vec![0.0; 3];
            factors[i].add_grad(&x, &mut g);
            let drift = linalg::dot(&v, &g);
            let vr = crate::bounce::reflect(&g, &v)?;
            let zr = State::new(x.clone(), vr);
            let diff = lb.factor_rate(i, &z) - lb.factor_rate(i, &zr);
            assert!(
                (diff - drift).abs() <= 1e-10 * (1.0 + drift.abs()),
                "factor {i}: {diff} vs {drift}"
            );
            checks += 1;
        }

        // discrete balance through the shift map and its flipped return
        let eps = 0.4;
        let x_fwd: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x + eps * v).collect();
        let x_back: Vec<f64> = x_fwd.iter().zip(&v).map(|(x, v)| x - eps * v).collect();
        let d_fwd = pot.eval(&x_fwd) - pot.eval(&x);
        let d_back = pot.eval(&x_back) - pot.eval(&x_fwd);
        assert!(
            (d_fwd.max(0.0) - d_back.max(0.0) - d_fwd).abs() <= 1e-9 * (1.0 + d_fwd.abs())
        );
        checks += 1;

        // sliced-discrete balance at a random index
        let w: f64 = rng.gen();
        let s_fwd = slice(w, &x_fwd) - slice(w, &x);
        let s_back = slice(w, &x_back) - slice(w, &x_fwd);
        assert!(
            (s_fwd.max(0.0) - s_back.max(0.0) - s_fwd).abs() <= 1e-9 * (1.0 + s_fwd.abs())
        );
        checks += 1;

        // reflection is an isometric involution
        let g = pot.grad(&x);
        if linalg::norm(&g) > 1e-9 {
            let r = crate::bounce::reflect(&g, &v)?;
            let rr = crate::bounce::reflect(&g, &r)?;
            let back: f64 = rr.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(back.sqrt() <= 1e-9 * (1.0 + linalg::norm(&v)));
            assert!((linalg::norm(&r) - linalg::norm(&v)).abs() <= 1e-12 * (1.0 + linalg::norm(&v)));
            checks += 2;
        }

        // flow semigroup
        for flow in [Flow::Linear, Flow::Rotation] {
            let (s, t) = (0.7, 1.9);
            let once = flow.at(&z, s + t);
            let twice = flow.at(&flow.at(&z, s), t);
            for i in 0..3 {
                assert!((once.x[i] - twice.x[i]).abs() <= 1e-9);
                assert!((once.v[i] - twice.v[i]).abs() <= 1e-9);
            }
            checks += 1;
        }

        // leapfrog reversibility under velocity flip
        let (h, l) = (0.2, 3);
        let mut fwd = dt::leapfrog(&pot, &z, h, l);
        fwd.flip();
        let mut back = dt::leapfrog(&pot, &fwd, h, l);
        back.flip();
        for i in 0..3 {
            assert!((back.x[i] - z.x[i]).abs() <= 1e-9);
            assert!((back.v[i] - z.v[i]).abs() <= 1e-9);
        }
        checks += 1;
    }

    // leapfrog volume preservation: finite-difference Jacobian at a few
    // of the random points suffices, the map is quadratic in the state
    for _ in 0..5 {
        let x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let f = |pt: &[f64]| -> Vec<f64> {
            let z = State::new(pt[..3].to_vec(), pt[3..].to_vec());
            let w = dt::leapfrog(&pot, &z, 0.2, 3);
            w.x.iter().chain(&w.v).copied().collect()
        };
        let base: Vec<f64> = x.iter().chain(&v).copied().collect();
        let delta = 1e-5;
        let mut jac = vec![vec![0.0; 6]; 6];
        for j in 0..6 {
            let mut hi = base.clone();
            let mut lo = base.clone();
            hi[j] += delta;
            lo[j] -= delta;
            let (fh, fl) = (f(&hi), f(&lo));
            for i in 0..6 {
                jac[i][j] = (fh[i] - fl[i]) / (2.0 * delta);
            }
        }
        let d = det(jac);
        assert!((d - 1.0).abs() < 1e-5, "leapfrog Jacobian {d}");
        checks += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(CriterionOutcome {
        name: "identity-battery",
        pass: elapsed < 10.0,
        details: format!("{checks} identity checks in {elapsed:.2}s"),
    })
}

/// Criterion 9: with every slice equal to the full potential, the
/// Poisson-test acceptance frequency matches plain Metropolis.
pub fn noisy_mh_equivalence() -> Result<CriterionOutcome> {
    let scale = 1.2;
    let n = 100_000;
    let model = const_slices(1);
    let nm = NoisyMetropolis::new(model, scale)?;
    let mut rng = substream(208, 0, 0);
    let mut z = State::new(vec![rng.sample(StandardNormal)], vec![0.0]);
    let mut acc_noisy = Vec::with_capacity(n);
    for _ in 0..n {
        acc_noisy.push(if nm.step(&mut z, &mut rng)? { 1.0 } else { 0.0 });
    }
    let mut rng = substream(208, 1, 0);
    let mut x: f64 = rng.sample(StandardNormal);
    let mut acc_std = Vec::with_capacity(n);
    for _ in 0..n {
        let y = x + scale * rng.sample::<f64, _>(StandardNormal);
        if rng.gen::<f64>().ln() < 0.5 * (x * x - y * y) {
            x = y;
            acc_std.push(1.0);
        } else {
            acc_std.push(0.0);
        }
    }
    let (p1, p2) = (stats::mean(&acc_noisy), stats::mean(&acc_std));
    let se1 = (stats::variance(&acc_noisy) / ess_batch_means(&acc_noisy)?).sqrt();
    let se2 = (stats::variance(&acc_std) / ess_batch_means(&acc_std)?).sqrt();
    let sigma = (se1 * se1 + se2 * se2).sqrt();
    let pass = (p1 - p2).abs() < 3.0 * sigma;
    Ok(CriterionOutcome {
        name: "noisy-mh-equivalence",
        pass,
        details: format!("acceptance {p1:.4} vs {p2:.4}, 3-sigma {:.4}", 3.0 * sigma),
    })
}
