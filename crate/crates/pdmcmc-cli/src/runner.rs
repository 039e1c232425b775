//! Replicate executor and CSV writer. One row per replicate, fixed column
//! order, deterministic bytes whenever wall-clock measurement is off.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use pdmcmc::ct::{StopRule, Trajectory};
use pdmcmc::diagnostics::ess_batch_means;
use pdmcmc::dt::DiscreteKernel;
use pdmcmc::model::State;
use pdmcmc::stats;
use pdmcmc::stream::substream;

use crate::config::{
    build_sampler, Budget, BuiltSampler, BuiltTarget, ConfigError, CtSampler, Observable,
    RunConfig,
};

pub const CSV_HEADER: &str =
    "run_id,sampler,target,d,epsilon,seed,n_events_or_steps,wall_ms,ess,ms_per_ess,mean_f,var_f,error,checkpoint";

#[derive(Clone, Debug, Default)]
pub struct RunRecord {
    pub run_id: u64,
    pub sampler: String,
    pub target: String,
    pub d: usize,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub n: u64,
    pub wall_ms: f64,
    pub ess: Option<f64>,
    pub mean_f: Option<f64>,
    pub var_f: Option<f64>,
    pub error: Option<f64>,
    pub checkpoint: Option<u64>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl RunRecord {
    /// `ms_per_ess` is derived, never stored: the invariant
    /// `ms_per_ess = wall_ms / ess` holds by construction.
    pub fn csv_line(&self) -> String {
        let ms_per_ess = match self.ess {
            Some(e) if e > 0.0 => Some(self.wall_ms / e),
            _ => None,
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.sampler,
            self.target,
            self.d,
            opt(self.epsilon),
            self.seed,
            self.n,
            self.wall_ms,
            opt(self.ess),
            opt(ms_per_ess),
            opt(self.mean_f),
            opt(self.var_f),
            opt(self.error),
            self.checkpoint.map(|c| c.to_string()).unwrap_or_default(),
        )
    }
}

pub fn write_csv(path: &Path, rows: &[RunRecord]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// Raw material of one replicate: the recorded scalar series after
/// burn-in, the event or step count, and the sampling-loop wall time.
pub struct ReplicateOutput {
    pub series: Vec<f64>,
    pub n: u64,
    pub wall_ms: f64,
}

/// Snapshots per continuous-time run; chosen so batch-means ESS has
/// enough batches without drowning the estimate in storage.
const CT_SNAPSHOTS: usize = 2000;
const CT_WALL_CHUNK: usize = 2048;
const DT_WALL_CHECK: usize = 512;

fn ct_run(
    s: &CtSampler,
    z0: State,
    stop: StopRule,
    rng: &mut dyn rand::RngCore,
) -> pdmcmc::Result<Trajectory> {
    match s {
        CtSampler::Global(g) => g.run(z0, stop, rng),
        CtSampler::Local(l) => l.run(z0, stop, rng),
        CtSampler::Zig(z) => z.run(z0, stop, rng),
        CtSampler::Ham(h) => h.run(z0, stop, rng),
    }
}

fn ct_target(s: &CtSampler) -> &pdmcmc::model::ExtendedTarget {
    match s {
        CtSampler::Global(g) => g.target(),
        CtSampler::Local(l) => l.target(),
        CtSampler::Zig(z) => z.target(),
        CtSampler::Ham(h) => h.target(),
    }
}

fn series_of(traj: &Trajectory, f: &Observable) -> Vec<f64> {
    if traj.total_time <= 0.0 {
        return Vec::new();
    }
    let stride = traj.total_time / CT_SNAPSHOTS as f64;
    traj.snapshots(stride).iter().map(|z| (f.f)(&z.x)).collect()
}

/// Run one replicate. The wall clock wraps only the sampling loop; target
/// and sampler construction stay outside.
pub fn run_replicate(
    sampler: &BuiltSampler,
    observable: &Observable,
    budget: Budget,
    base_seed: u64,
    replicate: u64,
    measure_walltime: bool,
) -> pdmcmc::Result<ReplicateOutput> {
    let mut rng = substream(base_seed, replicate, 1);
    let (mut series, n, wall_ms) = match sampler {
        BuiltSampler::Ct(s) => {
            let t = ct_target(s);
            let z0 = State::new(vec![0.0; t.dim()], t.velocity.sample(&mut rng));
            match budget {
                Budget::Events(n) | Budget::Steps(n) => {
                    let clock = Instant::now();
                    let traj = ct_run(s, z0, StopRule::Events(n), &mut rng)?;
                    let wall = clock.elapsed().as_secs_f64() * 1e3;
                    (series_of(&traj, observable), traj.n_events() as u64, wall)
                }
                Budget::WallMs(ms) => {
                    let mut z = z0;
                    let mut series = Vec::new();
                    let mut events = 0u64;
                    let clock = Instant::now();
                    loop {
                        let traj = ct_run(s, z, StopRule::Events(CT_WALL_CHUNK), &mut rng)?;
                        events += traj.n_events() as u64;
                        let stride = traj.total_time / 128.0;
                        series.extend(traj.snapshots(stride).iter().map(|w| (observable.f)(&w.x)));
                        z = traj.end_state().expect("nonempty chunk");
                        if clock.elapsed().as_secs_f64() * 1e3 >= ms {
                            break;
                        }
                    }
                    (series, events, clock.elapsed().as_secs_f64() * 1e3)
                }
            }
        }
        BuiltSampler::Dt(k) => {
            let t = k.target();
            let mut z = State::new(vec![0.0; t.dim()], t.velocity.sample(&mut rng));
            match budget {
                Budget::Events(n) | Budget::Steps(n) => {
                    let mut series = Vec::with_capacity(n);
                    let clock = Instant::now();
                    for _ in 0..n {
                        k.step(&mut z, &mut rng)?;
                        series.push((observable.f)(&z.x));
                    }
                    let wall = clock.elapsed().as_secs_f64() * 1e3;
                    (series, n as u64, wall)
                }
                Budget::WallMs(ms) => {
                    let mut series = Vec::new();
                    let clock = Instant::now();
                    'outer: loop {
                        for _ in 0..DT_WALL_CHECK {
                            k.step(&mut z, &mut rng)?;
                            series.push((observable.f)(&z.x));
                        }
                        if clock.elapsed().as_secs_f64() * 1e3 >= ms {
                            break 'outer;
                        }
                    }
                    let n = series.len() as u64;
                    (series, n, clock.elapsed().as_secs_f64() * 1e3)
                }
            }
        }
        BuiltSampler::Mh(nm) => {
            let t = nm.model().target();
            let mut z = State::new(vec![0.0; t.dim()], vec![0.0; t.dim()]);
            let steps = match budget {
                Budget::Events(n) | Budget::Steps(n) => n,
                Budget::WallMs(_) => usize::MAX,
            };
            let mut series = Vec::new();
            let clock = Instant::now();
            let mut done = 0u64;
            while (done as usize) < steps {
                nm.step(&mut z, &mut rng)?;
                series.push((observable.f)(&z.x));
                done += 1;
                if done % DT_WALL_CHECK as u64 == 0 {
                    if let Budget::WallMs(ms) = budget {
                        if clock.elapsed().as_secs_f64() * 1e3 >= ms {
                            break;
                        }
                    }
                }
            }
            let wall = clock.elapsed().as_secs_f64() * 1e3;
            (series, done, wall)
        }
    };
    let burn = series.len() / 10;
    series.drain(..burn);
    Ok(ReplicateOutput {
        series,
        n,
        wall_ms: if measure_walltime { wall_ms } else { 0.0 },
    })
}

/// Fill the statistical columns of a record from a recorded series.
pub fn summarize(record: &mut RunRecord, out: &ReplicateOutput, truth: Option<f64>) {
    record.n = out.n;
    record.wall_ms = out.wall_ms;
    if out.series.is_empty() {
        return;
    }
    let mean = stats::mean(&out.series);
    record.mean_f = Some(mean);
    record.var_f = Some(stats::variance(&out.series));
    record.ess = ess_batch_means(&out.series).ok();
    record.error = truth.map(|t| (mean - t).abs());
}

/// Execute a full configuration: every replicate in parallel, rows in
/// replicate order, failures recorded in place of statistics.
pub fn run(cfg: &RunConfig) -> Result<Vec<RunRecord>, ConfigError> {
    let built = crate::config::build_target(&cfg.target, cfg.seeds.base)?;
    build_sampler(&cfg.sampler, &built)?; // surface config errors before fan-out
    let mut rows: Vec<RunRecord> = (0..cfg.seeds.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut record = RunRecord {
                run_id: rep,
                sampler: cfg.sampler.name.clone(),
                target: cfg.target.name.clone(),
                d: built.d,
                epsilon: cfg.sampler.eps,
                seed: rep,
                ..Default::default()
            };
            // the build was validated above; per-thread rebuild cannot fail
            let sampler = build_sampler(&cfg.sampler, &built).expect("validated config");
            match run_replicate(
                &sampler,
                &built.observable,
                cfg.budget,
                cfg.seeds.base,
                rep,
                cfg.measure_walltime,
            ) {
                Ok(out) => summarize(&mut record, &out, built.observable.truth),
                Err(e) => {
                    eprintln!("replicate {rep} failed: {e}");
                }
            }
            record
        })
        .collect();
    rows.sort_by_key(|r| r.run_id);
    write_csv(&cfg.output, &rows)
        .map_err(|e| ConfigError::new("output", format!("{}: {e}", cfg.output.display())))?;
    Ok(rows)
}
