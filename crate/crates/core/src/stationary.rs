//! Stationary-law estimation: the renewal-reward ratio estimator over cycle
//! occupation, and the long-run time-average occupation of a single path.
//! Both target the same measure; their binned TV distance is the consistency
//! diagnostic.

use crate::integrator::{IncrementSource, StepConfig, Stepper, Trajectory};
use crate::measure::{EmpiricalMeasure, GridSpec, MeasureError};
use crate::model::{ModelParams, SystemState};
use crate::renewal::{CollectOptions, CycleBatch, PathId, RenewalError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StationaryError {
    #[error("batch holds no cycles")]
    EmptyBatch,
    #[error("batch was collected without an occupation grid")]
    NoOccupation,
    #[error("overflow fraction {0:.3} exceeds 10%: binning too narrow")]
    OverflowTooLarge(f64),
    #[error("horizon {horizon} does not exceed burn-in {burn_in}")]
    HorizonTooShort { horizon: f64, burn_in: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Renewal(#[from] RenewalError),
    #[error(transparent)]
    Integrator(#[from] crate::integrator::IntegratorError),
}

/// Renewal-reward estimator of the stationary law: summed per-cycle
/// occupation divided by summed durations (the normalization), as a
/// probability measure on the batch's grid.
pub fn estimate_pi(batch: &CycleBatch) -> Result<EmpiricalMeasure, StationaryError> {
    if batch.cycles.is_empty() {
        return Err(StationaryError::EmptyBatch);
    }
    let occupation = batch.occupation.as_ref().ok_or(StationaryError::NoOccupation)?;
    let overflow = occupation.overflow_fraction();
    if overflow > 0.10 {
        return Err(StationaryError::OverflowTooLarge(overflow));
    }
    Ok(occupation.normalized()?)
}

/// Occupation measure of a recorded trajectory after `burn_in`, normalized.
/// Each recorded state carries the time span back to its predecessor, so the
/// estimate is exact for stride-1 recordings and stride-weighted otherwise.
pub fn time_average_measure(
    traj: &Trajectory,
    grid: GridSpec,
    burn_in: f64,
) -> Result<EmpiricalMeasure, StationaryError> {
    let t0 = traj.states.first().map_or(0.0, |s| s.t);
    let horizon = traj.terminal().t - t0;
    if horizon <= burn_in {
        return Err(StationaryError::HorizonTooShort { horizon, burn_in });
    }
    let mut m = EmpiricalMeasure::new(grid);
    for w in traj.states.windows(2) {
        if w[1].t - t0 > burn_in {
            m.add(w[1].h, w[1].v, w[1].t - w[0].t);
        }
    }
    Ok(m.normalized()?)
}

/// Streaming time average for horizons too long to record: integrates the
/// occupation online and returns the normalized measure.
pub fn time_average_stream<N: IncrementSource + Copy>(
    params: &ModelParams,
    init: SystemState,
    cfg: &StepConfig,
    noise: &N,
    horizon: f64,
    burn_in: f64,
    grid: GridSpec,
) -> Result<EmpiricalMeasure, StationaryError> {
    if horizon <= burn_in {
        return Err(StationaryError::HorizonTooShort { horizon, burn_in });
    }
    init.validate(params).map_err(crate::integrator::IntegratorError::from)?;
    let mut stepper = Stepper::new(*params, init, cfg.dt, *noise);
    let mut m = EmpiricalMeasure::new(grid);
    let n_steps = (horizon / cfg.dt).ceil() as u64;
    for _ in 0..n_steps {
        stepper.step();
        let st = stepper.state();
        if st.t - init.t > burn_in {
            m.add(st.h, st.v, cfg.dt);
        }
    }
    Ok(m.normalized()?)
}

/// Bulk grid sized from a pilot cycle run: ranges cover the 1e-4 .. 1-1e-4
/// quantiles of the pilot occupation with 25% padding.
pub fn pilot_grid(
    params: &ModelParams,
    cfg: &StepConfig,
    seed: u64,
    n_pilot_cycles: u64,
    nh: usize,
    nv: usize,
) -> Result<GridSpec, StationaryError> {
    // generous scan grid; quantiles come off its marginals
    let scan = GridSpec::new(
        200.0 * params.gamma() / params.g(),
        params.velocity_floor().max(-50.0 * params.g()),
        50.0 * params.g(),
        4000,
        4000,
    )?;
    let noise = crate::noise::NoiseSource::new(seed, u64::MAX - 1);
    let batch = crate::renewal::collect_cycles(
        params,
        n_pilot_cycles,
        cfg,
        &noise,
        1e6,
        PathId { seed, stream_id: u64::MAX - 1, cycle_index: 0 },
        &CollectOptions { bulk_grid: Some(scan), ..Default::default() },
    )?;
    let occ = batch.occupation.as_ref().expect("pilot collects occupation");
    let q = 1e-4;
    let (h_hi, v_lo, v_hi) = marginal_quantiles(occ, q)?;
    let pad_h = 0.25 * h_hi.max(1e-6);
    let v_span = (v_hi - v_lo).max(1e-6);
    let v_lo = (v_lo - 0.25 * v_span).max(params.velocity_floor());
    Ok(GridSpec::new(h_hi + pad_h, v_lo, v_hi + 0.25 * v_span, nh, nv)?)
}

fn marginal_quantiles(
    occ: &EmpiricalMeasure,
    q: f64,
) -> Result<(f64, f64, f64), StationaryError> {
    let grid = occ.grid;
    let total = occ.total_mass();
    if !(total > 0.0) {
        return Err(StationaryError::Measure(MeasureError::Empty));
    }
    let mass = occ.bin_mass();
    let mut h_marg = vec![0.0; grid.nh];
    let mut v_marg = vec![0.0; grid.nv];
    for i in 0..grid.nh {
        for j in 0..grid.nv {
            let m = mass[i * grid.nv + j];
            h_marg[i] += m;
            v_marg[j] += m;
        }
    }
    let h_edges = grid.h_edges();
    let v_edges = grid.v_edges();
    let upper_quantile = |marg: &[f64], edges: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (i, &m) in marg.iter().enumerate().rev() {
            acc += m;
            if acc > q * total {
                return edges[i + 1];
            }
        }
        edges[edges.len() - 1]
    };
    let lower_quantile = |marg: &[f64], edges: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (i, &m) in marg.iter().enumerate() {
            acc += m;
            if acc > q * total {
                return edges[i];
            }
        }
        edges[0]
    };
    Ok((
        upper_quantile(&h_marg, &h_edges),
        lower_quantile(&v_marg, &v_edges),
        upper_quantile(&v_marg, &v_edges),
    ))
}
