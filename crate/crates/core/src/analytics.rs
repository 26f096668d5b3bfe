//! Long-run diagnostics: fluctuation running-max ratios, the trajectory law
//! of large numbers, exponential decay of the binned TV distance to the
//! stationary law, and the gamma-zero product-form oracle.

use crate::integrator::{IncrementSource, StepConfig, Stepper, Trajectory};
use crate::measure::{tv_distance, EmpiricalMeasure, GridSpec, MeasureError};
use crate::model::{ModelParams, SystemState};
use crate::stats::{self, Chi2Result, KsResult, StatsError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("horizon too short: {0}")]
    HorizonTooShort(String),
    #[error("checkpoints must be increasing and start at t >= e")]
    BadCheckpoints,
    #[error("operation requires gamma-zero mode")]
    NotGammaZero,
    #[error("need at least {need} samples/chains, got {got}")]
    TooFew { need: u64, got: u64 },
    #[error("all TV values at noise floor: horizon too long or too few chains")]
    AllAtNoiseFloor,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Integrator(#[from] crate::integrator::IntegratorError),
}

// ---------------------------------------------------------------------------
// Fluctuation running maxima
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatioPoint {
    pub t: f64,
    pub running_max_v: f64,
    pub running_max_h: f64,
    /// sup_{s<=t} V_s / sqrt(log t)
    pub v_ratio: f64,
    /// sup_{s<=t} H_s / log t
    pub h_ratio: f64,
}

/// Running-max ratios at the given checkpoints, computed online over one
/// path (recorded trajectories drop the in-between peaks, so this streams).
pub fn fluctuation_ratios<N: IncrementSource + Copy>(
    params: &ModelParams,
    init: SystemState,
    cfg: &StepConfig,
    noise: &N,
    checkpoints: &[f64],
) -> Result<Vec<RatioPoint>, AnalyticsError> {
    if checkpoints.is_empty()
        || checkpoints[0] < std::f64::consts::E
        || checkpoints.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(AnalyticsError::BadCheckpoints);
    }
    init.validate(params).map_err(crate::integrator::IntegratorError::from)?;
    let mut stepper = Stepper::new(*params, init, cfg.dt, *noise);
    let mut max_v = init.v;
    let mut max_h = init.h;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut cp_iter = checkpoints.iter().copied().peekable();
    while let Some(&cp) = cp_iter.peek() {
        stepper.step();
        let st = stepper.state();
        max_v = max_v.max(st.v);
        max_h = max_h.max(st.h);
        if st.t >= cp {
            let logt = st.t.ln();
            out.push(RatioPoint {
                t: st.t,
                running_max_v: max_v,
                running_max_h: max_h,
                v_ratio: max_v / logt.sqrt(),
                h_ratio: max_h / logt,
            });
            cp_iter.next();
        }
    }
    Ok(out)
}

/// Finite-horizon proxy checks for the limsup brackets: the final ratio must
/// sit below `upper * upper_slack` and the running-max ratio over the last
/// decade must reach `lower * lower_slack`.
#[derive(Debug, Clone, Serialize)]
pub struct FluctuationCheck {
    pub v_bracket: (f64, f64),
    pub h_bracket: (f64, f64),
    pub upper_slack: f64,
    pub lower_slack: f64,
    pub v_final_ratio: f64,
    pub h_final_ratio: f64,
    pub v_last_decade_max: f64,
    pub h_last_decade_max: f64,
    pub pass: bool,
}

pub fn fluctuation_check(
    params: &ModelParams,
    points: &[RatioPoint],
    upper_slack: f64,
    lower_slack: f64,
) -> Result<FluctuationCheck, AnalyticsError> {
    let last = points.last().ok_or_else(|| {
        AnalyticsError::HorizonTooShort("no fluctuation checkpoints recorded".into())
    })?;
    let gamma = params.gamma();
    let g = params.g();
    let v_bracket = (1.0 / (2.0 * (1.0 + gamma)).sqrt(), 2.0 / (1.0 + gamma).sqrt());
    let h_bracket = (gamma / (2.0 * g), 16.0 * gamma / g);
    let decade_start = last.t / 10.0;
    let mut v_max = f64::NEG_INFINITY;
    let mut h_max = f64::NEG_INFINITY;
    for p in points.iter().filter(|p| p.t >= decade_start) {
        v_max = v_max.max(p.v_ratio);
        h_max = h_max.max(p.h_ratio);
    }
    let pass = last.v_ratio <= v_bracket.1 * upper_slack
        && last.h_ratio <= h_bracket.1 * upper_slack
        && v_max >= v_bracket.0 * lower_slack
        && h_max >= h_bracket.0 * lower_slack;
    Ok(FluctuationCheck {
        v_bracket,
        h_bracket,
        upper_slack,
        lower_slack,
        v_final_ratio: last.v_ratio,
        h_final_ratio: last.h_ratio,
        v_last_decade_max: v_max,
        h_last_decade_max: h_max,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Law of large numbers
// ---------------------------------------------------------------------------

/// Terminal trajectory drift estimates (S_t/t, X_t/t); both converge to
/// -g/(1+gamma).
pub fn lln_estimate(traj: &Trajectory) -> Result<(f64, f64), AnalyticsError> {
    let last = traj.terminal();
    let t0 = traj.states.first().map_or(0.0, |s| s.t);
    let span = last.t - t0;
    if span < 1.0 {
        return Err(AnalyticsError::HorizonTooShort(format!("horizon {span} < 1")));
    }
    Ok((last.s / last.t, last.x / last.t))
}

// ---------------------------------------------------------------------------
// TV decay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub tv_values: Vec<f64>,
    pub noise_floor: f64,
    /// Times used for the fit (above the noise floor).
    pub fit_points: usize,
    pub lambda_fit: f64,
    pub slope_ci: (f64, f64),
    pub r2: f64,
}

/// Ensemble TV decay: from `init`, run `n_chains` independent chains,
/// snapshot the empirical law at each checkpoint, and fit log TV(t) against
/// `pi_hat` on the range above the noise floor.
#[allow(clippy::too_many_arguments)]
pub fn tv_decay_curve(
    params: &ModelParams,
    init: SystemState,
    times: &[f64],
    n_chains: u64,
    grid: GridSpec,
    pi_hat: &EmpiricalMeasure,
    noise_floor: f64,
    cfg: &StepConfig,
    noise: &crate::noise::NoiseSource,
    threads: usize,
) -> Result<DecayFit, AnalyticsError> {
    if n_chains < 1_000 {
        return Err(AnalyticsError::TooFew { need: 1_000, got: n_chains });
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
        return Err(AnalyticsError::BadCheckpoints);
    }
    init.validate(params).map_err(crate::integrator::IntegratorError::from)?;

    let lanes = crate::lanes::unit_counts(n_chains, threads.max(1) as u64 * 4);
    let lane_measures = crate::lanes::run_indexed(lanes.len(), threads, |lane| {
        let mut per_time: Vec<EmpiricalMeasure> =
            times.iter().map(|_| EmpiricalMeasure::new(grid)).collect();
        for c in 0..lanes[lane] {
            let chain_noise = noise.substream((lane as u64) << 32 | c);
            let mut stepper = Stepper::new(*params, init, cfg.dt, chain_noise);
            let mut k = 0usize;
            while k < times.len() {
                stepper.step();
                let st = stepper.state();
                if st.t >= times[k] {
                    per_time[k].add(st.h, st.v, 1.0);
                    k += 1;
                }
            }
        }
        per_time
    });
    let mut per_time: Vec<EmpiricalMeasure> =
        times.iter().map(|_| EmpiricalMeasure::new(grid)).collect();
    for lane in lane_measures {
        for (total, part) in per_time.iter_mut().zip(&lane) {
            total.merge(part)?;
        }
    }

    let mut tv_values = Vec::with_capacity(times.len());
    for m in &per_time {
        tv_values.push(tv_distance(m, pi_hat)?);
    }

    // fit on the decaying range: above the noise floor, and below the
    // saturation ceiling (TV is capped at 1, so values near 1 carry no rate
    // information -- the geometric envelope is vacuous there)
    let tv_min = tv_values.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = (1.5 * noise_floor).max(2.0 * tv_min);
    const SATURATION: f64 = 0.9;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &tv) in times.iter().zip(&tv_values) {
        if tv > cutoff && tv <= SATURATION {
            xs.push(t);
            ys.push(tv.ln());
        }
    }
    if xs.len() < 3 {
        return Err(AnalyticsError::AllAtNoiseFloor);
    }
    let fit = stats::ols_fit(&xs, &ys)?;
    Ok(DecayFit {
        times: times.to_vec(),
        tv_values,
        noise_floor,
        fit_points: xs.len(),
        lambda_fit: fit.slope.exp(),
        slope_ci: (
            fit.slope - stats::Z_95 * fit.slope_se,
            fit.slope + stats::Z_95 * fit.slope_se,
        ),
        r2: fit.r2,
    })
}

// ---------------------------------------------------------------------------
// Gamma-zero oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ProductFormReport {
    pub n: usize,
    /// KS of the gap against the best-fit Exponential.
    pub ks_gap: KsResult,
    pub gap_rate_hat: f64,
    /// KS of the velocity against the best-fit Gaussian.
    pub ks_velocity: KsResult,
    pub vel_mean_hat: f64,
    pub vel_sd_hat: f64,
    /// Chi-squared independence on marginal-quantile bins.
    pub independence: Chi2Result,
    /// All three tests accepted at the 1% level.
    pub product_form_ok: bool,
}

/// Decorrelated samples of (H, V) along independent paths: each lane burns
/// in, then records a sample every `spacing` time units.
#[allow(clippy::too_many_arguments)]
pub fn sample_spaced(
    params: &ModelParams,
    init: SystemState,
    cfg: &StepConfig,
    noise: &crate::noise::NoiseSource,
    n_samples: u64,
    spacing: f64,
    burn_in: f64,
    threads: usize,
) -> Result<Vec<(f64, f64)>, AnalyticsError> {
    init.validate(params).map_err(crate::integrator::IntegratorError::from)?;
    let lanes = crate::lanes::unit_counts(n_samples, (threads.max(1) as u64) * 4);
    let parts = crate::lanes::run_indexed(lanes.len(), threads, |lane| {
        let lane_noise = noise.substream(0xace0_0000 + lane as u64);
        let mut stepper = Stepper::new(*params, init, cfg.dt, lane_noise);
        let mut samples = Vec::with_capacity(lanes[lane] as usize);
        let mut next_t = burn_in + spacing;
        while (samples.len() as u64) < lanes[lane] {
            stepper.step();
            let st = stepper.state();
            if st.t >= next_t {
                samples.push((st.h, st.v));
                next_t += spacing;
            }
        }
        samples
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Shape and independence tests for the product-form law (Exponential gap,
/// Gaussian velocity, independent coordinates). Parameters are estimated
/// from the data; shapes are what is being tested.
///
/// The projection scheme thickens the gap law in an O(sqrt(dt)) layer at the
/// boundary, so exponentiality is tested on exceedances above
/// `gap_threshold` (exact for exponentials by memorylessness). Pass 0 for
/// raw-sample testing.
pub fn product_form_tests(
    samples: &[(f64, f64)],
    gap_threshold: f64,
) -> Result<ProductFormReport, AnalyticsError> {
    if samples.len() < 100 {
        return Err(AnalyticsError::TooFew { need: 100, got: samples.len() as u64 });
    }
    let hs: Vec<f64> =
        samples.iter().filter(|s| s.0 > gap_threshold).map(|s| s.0 - gap_threshold).collect();
    if hs.len() < 100 {
        return Err(AnalyticsError::TooFew { need: 100, got: hs.len() as u64 });
    }
    let vs: Vec<f64> = samples.iter().map(|s| s.1).collect();

    let rate = 1.0 / stats::mean(&hs);
    let ks_gap = stats::ks_test_cdf(&hs, |x| 1.0 - (-rate * x.max(0.0)).exp())?;

    let mu = stats::mean(&vs);
    let sd = stats::sd(&vs);
    let ks_velocity = stats::ks_test_cdf(&vs, |x| stats::normal_cdf((x - mu) / sd))?;

    // 8x8 contingency table on marginal quantile bins over the raw samples
    let k = 8usize;
    let raw_hs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let h_edges = stats::quantile_edges(&raw_hs, k);
    let v_edges = stats::quantile_edges(&vs, k);
    let cell = |edges: &[f64], x: f64| edges.partition_point(|&e| e <= x);
    let mut table = vec![vec![0u64; k]; k];
    for &(h, v) in samples {
        table[cell(&h_edges, h)][cell(&v_edges, v)] += 1;
    }
    let independence = stats::chi2_independence(&table)?;

    let product_form_ok =
        ks_gap.p_value > 0.01 && ks_velocity.p_value > 0.01 && independence.p_value > 0.01;
    Ok(ProductFormReport {
        n: samples.len(),
        ks_gap,
        gap_rate_hat: rate,
        ks_velocity,
        vel_mean_hat: mu,
        vel_sd_hat: sd,
        independence,
        product_form_ok,
    })
}

/// The gamma-zero oracle end to end: sample the gamma-zero system at spaced
/// times and run the product-form tests. Rejects gamma > 0 parameters.
pub fn gamma_zero_oracle(
    params: &ModelParams,
    n_samples: u64,
    cfg: &StepConfig,
    noise: &crate::noise::NoiseSource,
    spacing: f64,
    burn_in: f64,
    threads: usize,
) -> Result<ProductFormReport, AnalyticsError> {
    if !params.is_gamma_zero() {
        return Err(AnalyticsError::NotGammaZero);
    }
    if n_samples < 100 {
        return Err(AnalyticsError::TooFew { need: 100, got: n_samples });
    }
    let init = SystemState::initial(1.0, 0.0);
    let samples = sample_spaced(params, init, cfg, noise, n_samples, spacing, burn_in, threads)?;
    // exceedance threshold clears the reflection scheme's boundary layer
    product_form_tests(&samples, 5.0 * cfg.dt.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_renewal_config;
    use crate::noise::NoiseSource;

    fn params() -> ModelParams {
        ModelParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn fluctuation_checkpoints_validated() {
        let p = params();
        let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
        let noise = NoiseSource::new(1, 0);
        let init = SystemState::initial(0.0, -0.5);
        // first checkpoint below e
        assert!(matches!(
            fluctuation_ratios(&p, init, &cfg, &noise, &[2.0, 10.0]),
            Err(AnalyticsError::BadCheckpoints)
        ));
        assert!(matches!(
            fluctuation_ratios(&p, init, &cfg, &noise, &[10.0, 5.0]),
            Err(AnalyticsError::BadCheckpoints)
        ));
        let pts = fluctuation_ratios(&p, init, &cfg, &noise, &[3.0, 10.0, 30.0]).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.windows(2).all(|w| w[1].running_max_v >= w[0].running_max_v));
    }

    #[test]
    fn lln_estimate_needs_a_horizon() {
        let p = params();
        let cfg = StepConfig::new(1e-3, u64::MAX, 100).unwrap();
        let noise = NoiseSource::new(2, 0);
        let short =
            crate::integrator::simulate(&p, SystemState::initial(1.0, 0.0), &cfg, &noise, 0.5)
                .unwrap();
        assert!(matches!(lln_estimate(&short), Err(AnalyticsError::HorizonTooShort(_))));
        let traj =
            crate::integrator::simulate(&p, SystemState::initial(0.0, -0.5), &cfg, &noise, 2000.0)
                .unwrap();
        let (s_t, x_t) = lln_estimate(&traj).unwrap();
        assert!((s_t + 0.5).abs() < 0.1, "S_t/t = {s_t}");
        // the two estimates differ by H_t/t, which vanishes
        assert!((s_t - x_t).abs() < 0.05);
    }

    #[test]
    fn decay_curve_guards() {
        let p = params();
        let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
        let grid = crate::measure::GridSpec::new(4.0, -1.0, 1.2, 10, 10).unwrap();
        let pi = {
            let mut m = EmpiricalMeasure::new(grid);
            m.add(0.1, -0.5, 1.0);
            m
        };
        let noise = NoiseSource::new(3, 0);
        let init = SystemState::initial(1.0, 0.0);
        assert!(matches!(
            tv_decay_curve(&p, init, &[1.0, 2.0], 10, grid, &pi, 0.01, &cfg, &noise, 1),
            Err(AnalyticsError::TooFew { .. })
        ));
        assert!(matches!(
            tv_decay_curve(&p, init, &[2.0, 1.0], 2000, grid, &pi, 0.01, &cfg, &noise, 1),
            Err(AnalyticsError::BadCheckpoints)
        ));
    }

    #[test]
    fn stationary_start_sits_at_the_noise_floor() {
        // from the renewal point the chain law is already near pi within a
        // couple of cycles, so every checkpoint is floor-level and the fit
        // must refuse
        let p = params();
        let rc = derive_renewal_config(&p).unwrap();
        let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
        let grid = crate::measure::GridSpec::new(4.0, -1.0, 1.2, 12, 12).unwrap();
        let noise = NoiseSource::new(4, 0);
        let batch = crate::renewal::collect_cycles(
            &p,
            3000,
            &cfg,
            &noise,
            1e4,
            crate::renewal::PathId { seed: 4, stream_id: 0, cycle_index: 0 },
            &crate::renewal::CollectOptions { bulk_grid: Some(grid), ..Default::default() },
        )
        .unwrap();
        let pi = crate::stationary::estimate_pi(&batch).unwrap();
        let init = SystemState::initial(0.0, rc.renewal_v);
        let result = tv_decay_curve(
            &p,
            init,
            &[8.0, 16.0, 24.0, 32.0],
            4000,
            grid,
            &pi,
            0.05,
            &cfg,
            &NoiseSource::new(5, 0),
            2,
        );
        assert!(
            matches!(result, Err(AnalyticsError::AllAtNoiseFloor)),
            "expected noise-floor refusal, got {result:?}"
        );
    }

    #[test]
    fn oracle_rejects_wrong_mode_and_small_samples() {
        let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
        let noise = NoiseSource::new(6, 0);
        assert!(matches!(
            gamma_zero_oracle(&params(), 10_000, &cfg, &noise, 5.0, 10.0, 1),
            Err(AnalyticsError::NotGammaZero)
        ));
        let p0 = ModelParams::gamma_zero(1.0).unwrap();
        assert!(matches!(
            gamma_zero_oracle(&p0, 50, &cfg, &noise, 5.0, 10.0, 1),
            Err(AnalyticsError::TooFew { .. })
        ));
    }
}
