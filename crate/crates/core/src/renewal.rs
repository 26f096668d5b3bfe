//! Online detection of renewal times and collection of i.i.d. cycle
//! statistics.
//!
//! The process regenerates at visits to the renewal point `(0, -g/(1+gamma))`.
//! A renewal is only counted after the velocity has first reached one of the
//! arming levels `a` (below) or `b` (above); after that the detector fires at
//! the first crossing of the renewal velocity that happens in boundary
//! contact. Since the velocity increases only on the boundary, an upcrossing
//! is automatically a contact; a downcrossing with positive gap does not fire
//! and the armed phase continues.

use crate::integrator::{IncrementSource, StepConfig, Stepper, Trajectory};
use crate::measure::{EmpiricalMeasure, GridSpec, MeasureError};
use crate::model::{derive_renewal_config, ModelError, ModelParams, RenewalConfig, SystemState};
use crate::stats::{self, KsResult, StatsError};
use crate::tail::TailAccumulator;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenewalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("insufficient cycles: need {need}, got {got}")]
    InsufficientCycles { need: usize, got: usize },
    #[error("batch parameter mismatch: {0}")]
    BatchMismatch(String),
    #[error("batch carries no occupation measure")]
    NoOccupation,
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Tail(#[from] crate::tail::TailError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("malformed cycle record file: {0}")]
    BadRecordFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Detector
// ---------------------------------------------------------------------------

/// Two-phase renewal detector. Feed it consecutive step pairs; it reports
/// interpolated firing times. Firing resets the detector, so detection after
/// a renewal depends only on the post-renewal stream.
#[derive(Debug, Clone)]
pub struct RenewalDetector {
    cfg: RenewalConfig,
    armed: bool,
}

impl RenewalDetector {
    pub fn new(cfg: RenewalConfig) -> Self {
        Self { cfg, armed: false }
    }

    pub fn reset(&mut self) {
        self.armed = false;
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    /// Fractional position in [0,1] at which the segment prev.v -> next.v
    /// crosses `level`, if it does.
    #[inline]
    fn crossing(prev_v: f64, next_v: f64, level: f64) -> Option<f64> {
        if (prev_v - level) * (next_v - level) > 0.0 || prev_v == next_v {
            return None;
        }
        Some((level - prev_v) / (next_v - prev_v))
    }

    /// Observe one step. `dl` is the step's local-time increment. Returns the
    /// interpolated renewal time if the step fires.
    pub fn observe(&mut self, prev: &SystemState, next: &SystemState, dl: f64) -> Option<f64> {
        let contact = dl > 0.0 || next.h <= self.cfg.boundary_tol;
        let f_rv = Self::crossing(prev.v, next.v, self.cfg.renewal_v);
        if !self.armed {
            let f_a = Self::crossing(prev.v, next.v, self.cfg.a);
            let f_b = Self::crossing(prev.v, next.v, self.cfg.b);
            let f_arm = match (f_a, f_b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
            let f_arm = f_arm?;
            self.armed = true;
            // a crossing of the renewal level earlier in this same step
            // happened before the arming level was reached and must not fire
            match f_rv {
                Some(f) if f >= f_arm && contact => {
                    self.armed = false;
                    Some(prev.t + f * (next.t - prev.t))
                }
                _ => None,
            }
        } else {
            match f_rv {
                Some(f) if contact => {
                    self.armed = false;
                    Some(prev.t + f * (next.t - prev.t))
                }
                _ => None,
            }
        }
    }
}

/// Renewal times of a recorded stride-1 trajectory. The first partial cycle
/// of a trajectory not started at the renewal point is implicitly discarded
/// by the caller taking differences of the returned times.
pub fn detect_renewals(traj: &Trajectory, cfg: &RenewalConfig) -> Vec<f64> {
    let mut det = RenewalDetector::new(*cfg);
    let mut fires = Vec::new();
    for w in traj.states.windows(2) {
        let dl = w[1].l - w[0].l;
        if let Some(t) = det.observe(&w[0], &w[1], dl) {
            fires.push(t);
        }
    }
    fires
}

// ---------------------------------------------------------------------------
// Cycle statistics
// ---------------------------------------------------------------------------

/// Identity of one cycle within the driving-noise address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathId {
    pub seed: u64,
    pub stream_id: u64,
    pub cycle_index: u64,
}

/// Statistics of one regeneration interval.
#[derive(Debug, Clone)]
pub struct RenewalCycle {
    pub duration: f64,
    pub max_v: f64,
    pub max_h: f64,
    /// Per-cycle occupation increment; populated only when the collector is
    /// asked to keep it (memory scales with cycle count).
    pub occupation: Option<EmpiricalMeasure>,
    pub path_id: PathId,
}

/// Options controlling what the collector accumulates beyond scalar stats.
#[derive(Debug, Clone, Default)]
pub struct CollectOptions {
    /// Accumulate batch-total occupation on this grid.
    pub bulk_grid: Option<GridSpec>,
    /// Also store each cycle's own occupation measure (test-scale only).
    pub keep_cycle_occupation: bool,
    /// Accumulate sub-batched 1-D tail occupation for gap and velocity.
    pub tails: Option<crate::tail::TailGrids>,
    /// Number of disjoint sub-batches for tail uncertainty (0 = default 16).
    pub n_tail_batches: usize,
}

/// A batch of completed cycles sharing params, dt, and renewal config.
#[derive(Debug, Clone)]
pub struct CycleBatch {
    pub params: ModelParams,
    pub renewal_cfg: RenewalConfig,
    pub dt: f64,
    pub seed: u64,
    pub cycles: Vec<RenewalCycle>,
    /// Unnormalized batch-total occupation (time mass) on the bulk grid.
    pub occupation: Option<EmpiricalMeasure>,
    pub tails: Option<TailAccumulator>,
    pub aborted: u64,
}

impl CycleBatch {
    pub fn durations(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.duration).collect()
    }

    pub fn total_duration(&self) -> f64 {
        self.cycles.iter().map(|c| c.duration).sum()
    }

    pub fn mean_duration(&self) -> f64 {
        self.total_duration() / self.cycles.len() as f64
    }

    pub fn abort_fraction(&self) -> f64 {
        let total = self.aborted + self.cycles.len() as u64;
        if total == 0 {
            0.0
        } else {
            self.aborted as f64 / total as f64
        }
    }

    /// Merge batches sharing params and dt. Associative; callers reduce in
    /// stream-id order for a canonical result. Each cycle's path id keeps its
    /// own (seed, stream) identity; the batch-level seed stays the left one.
    pub fn merge(&mut self, other: CycleBatch) -> Result<(), RenewalError> {
        if self.params != other.params || self.dt != other.dt {
            return Err(RenewalError::BatchMismatch("params and dt must match".into()));
        }
        self.cycles.extend(other.cycles);
        self.aborted += other.aborted;
        match (&mut self.occupation, other.occupation) {
            (Some(a), Some(b)) => a.merge(&b)?,
            (None, None) => {}
            _ => return Err(RenewalError::BatchMismatch("occupation presence differs".into())),
        }
        match (&mut self.tails, other.tails) {
            (Some(a), Some(b)) => a.merge(&b)?,
            (None, None) => {}
            _ => return Err(RenewalError::BatchMismatch("tail presence differs".into())),
        }
        Ok(())
    }

    /// Versioned record file: metadata header plus one line per cycle.
    pub fn write_records<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# inertdrift-cycles v1")?;
        writeln!(w, "# gamma = {:?}", self.params.gamma())?;
        writeln!(w, "# g = {:?}", self.params.g())?;
        writeln!(w, "# dt = {:?}", self.dt)?;
        writeln!(w, "# seed = {}", self.seed)?;
        writeln!(
            w,
            "# a = {:?}, b = {:?}, renewal_v = {:?}, boundary_tol = {:?}",
            self.renewal_cfg.a,
            self.renewal_cfg.b,
            self.renewal_cfg.renewal_v,
            self.renewal_cfg.boundary_tol
        )?;
        writeln!(w, "# n_cycles = {}, aborted = {}", self.cycles.len(), self.aborted)?;
        writeln!(w, "duration,max_v,max_h,stream_id,cycle_index")?;
        for c in &self.cycles {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{},{}",
                c.duration, c.max_v, c.max_h, c.path_id.stream_id, c.path_id.cycle_index
            )?;
        }
        Ok(())
    }
}

/// Sparse scratch buffer for one cycle's occupation: dense mass array plus a
/// touched-bin list, so commit and clear cost only what the cycle visited.
/// Mass from aborted cycles is dropped, never committed.
struct CycleScratch {
    bulk: Option<(Vec<f64>, Vec<u32>, f64, GridSpec)>,
    gap: Option<(Vec<f64>, Vec<u32>, f64, f64)>, // mass, touched, under, over
    vel: Option<(Vec<f64>, Vec<u32>, f64, f64)>,
}

impl CycleScratch {
    fn new(options: &CollectOptions) -> Self {
        Self {
            bulk: options
                .bulk_grid
                .map(|g| (vec![0.0; g.nh * g.nv], Vec::new(), 0.0, g)),
            gap: options.tails.map(|t| (vec![0.0; t.gap.n], Vec::new(), 0.0, 0.0)),
            vel: options.tails.map(|t| (vec![0.0; t.velocity.n], Vec::new(), 0.0, 0.0)),
        }
    }

    #[inline]
    fn add(&mut self, h: f64, v: f64, w: f64, grids: &Option<crate::tail::TailGrids>) {
        if let Some((mass, touched, overflow, grid)) = &mut self.bulk {
            match grid_index(grid, h, v) {
                Some(k) => {
                    if mass[k] == 0.0 {
                        touched.push(k as u32);
                    }
                    mass[k] += w;
                }
                None => *overflow += w,
            }
        }
        if let Some(t) = grids {
            if let Some((mass, touched, under, over)) = &mut self.gap {
                add_1d(&t.gap, mass, touched, under, over, h, w);
            }
            if let Some((mass, touched, under, over)) = &mut self.vel {
                add_1d(&t.velocity, mass, touched, under, over, v, w);
            }
        }
    }

    /// Commit this cycle's mass into the batch accumulators and reset.
    fn commit(
        &mut self,
        batch: &mut CycleBatch,
        tail_batch: usize,
        keep_cycle_occupation: bool,
    ) -> Option<EmpiricalMeasure> {
        let mut per_cycle = None;
        if let Some((mass, touched, overflow, grid)) = &mut self.bulk {
            let target = batch.occupation.as_mut().expect("bulk grid implies occupation");
            let mut own = keep_cycle_occupation.then(|| EmpiricalMeasure::new(*grid));
            let (he, ve) = cell_centers(grid);
            for &k in touched.iter() {
                let k = k as usize;
                let (i, j) = (k / grid.nv, k % grid.nv);
                target.add(he[i], ve[j], mass[k]);
                if let Some(own) = &mut own {
                    own.add(he[i], ve[j], mass[k]);
                }
                mass[k] = 0.0;
            }
            if *overflow > 0.0 {
                target.add_overflow(*overflow);
                if let Some(own) = &mut own {
                    own.add_overflow(*overflow);
                }
            }
            touched.clear();
            *overflow = 0.0;
            per_cycle = own;
        }
        if let Some(acc) = &mut batch.tails {
            if let Some((mass, touched, under, over)) = &mut self.gap {
                acc.commit_gap(tail_batch, mass, touched, *under, *over);
                for &k in touched.iter() {
                    mass[k as usize] = 0.0;
                }
                touched.clear();
                *under = 0.0;
                *over = 0.0;
            }
            if let Some((mass, touched, under, over)) = &mut self.vel {
                acc.commit_velocity(tail_batch, mass, touched, *under, *over);
                for &k in touched.iter() {
                    mass[k as usize] = 0.0;
                }
                touched.clear();
                *under = 0.0;
                *over = 0.0;
            }
        }
        per_cycle
    }

    fn discard(&mut self) {
        if let Some((mass, touched, overflow, _)) = &mut self.bulk {
            for &k in touched.iter() {
                mass[k as usize] = 0.0;
            }
            touched.clear();
            *overflow = 0.0;
        }
        for part in [&mut self.gap, &mut self.vel] {
            if let Some((mass, touched, under, over)) = part {
                for &k in touched.iter() {
                    mass[k as usize] = 0.0;
                }
                touched.clear();
                *under = 0.0;
                *over = 0.0;
            }
        }
    }
}

#[inline]
fn add_1d(
    grid: &crate::tail::TailGrid,
    mass: &mut [f64],
    touched: &mut Vec<u32>,
    under: &mut f64,
    over: &mut f64,
    x: f64,
    w: f64,
) {
    if x < grid.lo {
        *under += w;
    } else if x >= grid.hi {
        *over += w;
    } else {
        let i = (((x - grid.lo) / (grid.hi - grid.lo)) * grid.n as f64) as usize;
        let i = i.min(grid.n - 1);
        if mass[i] == 0.0 {
            touched.push(i as u32);
        }
        mass[i] += w;
    }
}

#[inline]
fn grid_index(grid: &GridSpec, h: f64, v: f64) -> Option<usize> {
    if h < 0.0 || h > grid.h_max || v < grid.v_min || v > grid.v_max {
        return None;
    }
    let i = ((h / grid.h_max) * grid.nh as f64) as usize;
    let j = (((v - grid.v_min) / (grid.v_max - grid.v_min)) * grid.nv as f64) as usize;
    Some(i.min(grid.nh - 1) * grid.nv + j.min(grid.nv - 1))
}

fn cell_centers(grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let dh = grid.h_max / grid.nh as f64;
    let dv = (grid.v_max - grid.v_min) / grid.nv as f64;
    (
        (0..grid.nh).map(|i| (i as f64 + 0.5) * dh).collect(),
        (0..grid.nv).map(|j| grid.v_min + (j as f64 + 0.5) * dv).collect(),
    )
}

/// Collect `n_cycles` completed cycles from one driving path started at the
/// renewal point. Aborted cycles (cap hit) restart the path at the renewal
/// point, are excluded with their occupation mass, and are counted.
pub fn collect_cycles<N: IncrementSource + Copy>(
    params: &ModelParams,
    n_cycles: u64,
    cfg: &StepConfig,
    noise: &N,
    t_cap_per_cycle: f64,
    path: PathId,
    options: &CollectOptions,
) -> Result<CycleBatch, RenewalError> {
    if n_cycles == 0 {
        return Err(RenewalError::InsufficientCycles { need: 1, got: 0 });
    }
    let rc = derive_renewal_config(params)?;
    let init = SystemState::initial(0.0, rc.renewal_v);
    let mut stepper = Stepper::new(*params, init, cfg.dt, *noise);
    let mut detector = RenewalDetector::new(rc);

    let n_tail_batches =
        if options.n_tail_batches == 0 { 16 } else { options.n_tail_batches };
    let mut batch = CycleBatch {
        params: *params,
        renewal_cfg: rc,
        dt: cfg.dt,
        seed: path.seed,
        cycles: Vec::with_capacity(n_cycles as usize),
        occupation: options.bulk_grid.map(EmpiricalMeasure::new),
        tails: options.tails.map(|g| TailAccumulator::new(g, n_tail_batches)),
        aborted: 0,
    };
    let mut scratch = CycleScratch::new(options);

    let mut cycle_start = 0.0;
    let mut cycle_index = 0u64;
    let mut max_v = f64::NEG_INFINITY;
    let mut max_h: f64 = 0.0;

    while batch.cycles.len() < n_cycles as usize {
        let prev = *stepper.state();
        let dl = stepper.step();
        let next = *stepper.state();
        max_v = max_v.max(next.v);
        max_h = max_h.max(next.h);

        // a firing step's weight is split at the crossing fraction so a
        // cycle's time mass equals its duration
        match detector.observe(&prev, &next, dl) {
            None => scratch.add(next.h, next.v, cfg.dt, &options.tails),
            Some(fire_t) => {
                let frac = ((fire_t - prev.t) / cfg.dt).clamp(0.0, 1.0);
                scratch.add(prev.h, prev.v, frac * cfg.dt, &options.tails);
                let tail_batch = (cycle_index % n_tail_batches as u64) as usize;
                let occupation =
                    scratch.commit(&mut batch, tail_batch, options.keep_cycle_occupation);
                batch.cycles.push(RenewalCycle {
                    duration: fire_t - cycle_start,
                    max_v,
                    max_h,
                    occupation,
                    path_id: PathId { cycle_index, ..path },
                });
                cycle_index += 1;
                cycle_start = fire_t;
                max_v = next.v;
                max_h = next.h;
                scratch.add(next.h, next.v, (1.0 - frac) * cfg.dt, &options.tails);
            }
        }

        if next.t - cycle_start > t_cap_per_cycle {
            // cycle aborted: flag it and restart the path at the renewal point
            batch.aborted += 1;
            cycle_index += 1;
            scratch.discard();
            let restart = SystemState { h: 0.0, v: rc.renewal_v, ..next };
            stepper = resume_stepper(params, restart, cfg.dt, &stepper, noise);
            detector.reset();
            cycle_start = restart.t;
            max_v = restart.v;
            max_h = 0.0;
        }
    }
    Ok(batch)
}

fn resume_stepper<N: IncrementSource + Copy>(
    params: &ModelParams,
    state: SystemState,
    dt: f64,
    old: &Stepper<N>,
    noise: &N,
) -> Stepper<N> {
    // keep consuming the same counter sequence
    Stepper::with_counter(*params, state, dt, *noise, old.counter())
}

/// Parallel cycle collection: `n_streams` independent driving paths, each
/// with its own noise stream, merged in stream order.
#[allow(clippy::too_many_arguments)]
pub fn collect_cycles_parallel(
    params: &ModelParams,
    n_cycles: u64,
    cfg: &StepConfig,
    seed: u64,
    t_cap_per_cycle: f64,
    n_streams: u64,
    threads: usize,
    options: &CollectOptions,
) -> Result<CycleBatch, RenewalError> {
    derive_renewal_config(params)?;
    let counts = crate::lanes::unit_counts(n_cycles, n_streams);
    let parts = crate::lanes::run_indexed(counts.len(), threads, |i| {
        let noise = crate::noise::NoiseSource::new(seed, i as u64);
        if counts[i] == 0 {
            return Ok(None);
        }
        collect_cycles(
            params,
            counts[i],
            cfg,
            &noise,
            t_cap_per_cycle,
            PathId { seed, stream_id: i as u64, cycle_index: 0 },
            options,
        )
        .map(Some)
    });
    let mut merged: Option<CycleBatch> = None;
    for part in parts {
        if let Some(part) = part? {
            match &mut merged {
                None => merged = Some(part),
                Some(m) => m.merge(part)?,
            }
        }
    }
    merged.ok_or(RenewalError::InsufficientCycles { need: 1, got: 0 })
}

// ---------------------------------------------------------------------------
// Zeta tail
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ZetaTailReport {
    /// Grid in t (the abscissa of the log-survival of zeta at t^2).
    pub t_grid: Vec<f64>,
    pub log_survival: Vec<f64>,
    /// Fitted decay rate c in log P(zeta > t^2) ~ -c t.
    pub c_fit: f64,
    /// 95% confidence interval for c.
    pub c_ci: (f64, f64),
    pub degenerate: bool,
    /// Concavity proxy: the late-range slope is at least as steep as the
    /// early-range slope (within noise).
    pub concave_ok: bool,
    pub n_cycles: usize,
}

pub fn zeta_tail_check(batch: &CycleBatch) -> Result<ZetaTailReport, RenewalError> {
    zeta_tail_from_durations(&batch.durations())
}

/// Same analysis on raw durations (exposed for synthetic inputs).
pub fn zeta_tail_from_durations(durations: &[f64]) -> Result<ZetaTailReport, RenewalError> {
    let n = durations.len();
    if n < 1000 {
        return Err(RenewalError::InsufficientCycles { need: 1000, got: n });
    }
    let mut sorted = durations.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN duration"));
    if sorted[0] == sorted[n - 1] {
        return Ok(ZetaTailReport {
            t_grid: vec![sorted[0].max(0.0).sqrt()],
            log_survival: vec![0.0],
            c_fit: 0.0,
            c_ci: (0.0, 0.0),
            degenerate: true,
            concave_ok: false,
            n_cycles: n,
        });
    }

    // survival levels, geometric from 0.4 down to the resolvable tail
    let s_min = (30.0 / n as f64).max(2e-4);
    let k_points = 10;
    let ratio = (s_min / 0.4).powf(1.0 / (k_points - 1) as f64);
    let mut t_grid = Vec::with_capacity(k_points);
    let mut log_surv = Vec::with_capacity(k_points);
    let mut weights = Vec::with_capacity(k_points);
    let mut s = 0.4;
    for _ in 0..k_points {
        let idx = ((1.0 - s) * n as f64) as usize;
        let tau = sorted[idx.min(n - 1)];
        let t = tau.max(0.0).sqrt();
        if t_grid.last().is_none_or(|&last| t > last) {
            t_grid.push(t);
            log_surv.push(s.ln());
            weights.push(n as f64 * s / (1.0 - s)); // 1 / var(log S-hat)
        }
        s *= ratio;
    }
    if t_grid.len() < 3 {
        return Err(RenewalError::Stats(StatsError::Degenerate(
            "survival grid collapsed; durations nearly equal".into(),
        )));
    }
    let fit = stats::wls_fit(&t_grid, &log_surv, &weights)?;
    let c = -fit.slope;
    let half = stats::Z_95 * fit.slope_se;
    // concavity proxy: compare early vs late slopes
    let mid = t_grid.len() / 2;
    let concave_ok = if t_grid.len() >= 6 {
        let early = stats::wls_fit(&t_grid[..mid], &log_surv[..mid], &weights[..mid]);
        let late = stats::wls_fit(&t_grid[mid..], &log_surv[mid..], &weights[mid..]);
        match (early, late) {
            (Ok(e), Ok(l)) => {
                let tol = 2.0 * (e.slope_se.powi(2) + l.slope_se.powi(2)).sqrt();
                l.slope <= e.slope + tol
            }
            _ => false,
        }
    } else {
        true
    };
    Ok(ZetaTailReport {
        t_grid,
        log_survival: log_surv,
        c_fit: c,
        c_ci: (c - half, c + half),
        degenerate: false,
        concave_ok,
        n_cycles: n,
    })
}

// ---------------------------------------------------------------------------
// i.i.d. diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct IidReport {
    pub lag1: f64,
    pub lag2: f64,
    /// Null band for the autocorrelations, 2/sqrt(n).
    pub null_band: f64,
    pub ks_halves: KsResult,
    pub consistent: bool,
    pub n: usize,
}

pub fn cycle_iid_diagnostics(batch: &CycleBatch) -> Result<IidReport, RenewalError> {
    iid_diagnostics(&batch.durations())
}

/// Lag-1/lag-2 autocorrelations against the i.i.d. null band plus a
/// two-sample KS between the first and second halves.
pub fn iid_diagnostics(durations: &[f64]) -> Result<IidReport, RenewalError> {
    let n = durations.len();
    if n < 1000 {
        return Err(RenewalError::InsufficientCycles { need: 1000, got: n });
    }
    let lag1 = stats::autocorrelation(durations, 1);
    let lag2 = stats::autocorrelation(durations, 2);
    let band = 2.0 / (n as f64).sqrt();
    let ks = stats::ks_test_two_sample(&durations[..n / 2], &durations[n / 2..])?;
    let consistent = lag1.abs() < band && lag2.abs() < band && ks.p_value > 0.01;
    Ok(IidReport { lag1, lag2, null_band: band, ks_halves: ks, consistent, n })
}
