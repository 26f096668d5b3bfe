//! Command execution: orchestrates the library modules, writes artifacts,
//! and enforces the run-level budgets (abort fraction, module errors).

use crate::config::{CommandArgs, ExperimentConfig};
use crate::report;
use inertdrift_core::analytics;
use inertdrift_core::bounds;
use inertdrift_core::integrator::{simulate, StepConfig};
use inertdrift_core::measure::tv_distance;
use inertdrift_core::model::{derive_renewal_config, SystemState};
use inertdrift_core::noise::NoiseSource;
use inertdrift_core::renewal::{self, CollectOptions};
use inertdrift_core::stationary;
use inertdrift_core::tail::{TailGrid, TailGrids};
use serde::Serialize;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Abort-budget guard: aborted-cycle fraction above this is a run failure.
pub const ABORT_BUDGET: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("abort fraction {0:.2e} exceeds budget 1e-4 (check t_cap / parameters)")]
    AbortBudget(f64),
    #[error("{0}")]
    Module(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Plot(#[from] report::PlotError),
}

macro_rules! module_err {
    ($($ty:ty),*) => {
        $(impl From<$ty> for RunError {
            fn from(e: $ty) -> Self {
                RunError::Module(e.to_string())
            }
        })*
    };
}

module_err!(
    inertdrift_core::integrator::IntegratorError,
    inertdrift_core::model::ModelError,
    inertdrift_core::renewal::RenewalError,
    inertdrift_core::stationary::StationaryError,
    inertdrift_core::tail::TailError,
    inertdrift_core::analytics::AnalyticsError,
    inertdrift_core::bounds::BoundsError,
    inertdrift_core::measure::MeasureError,
    inertdrift_core::stats::StatsError
);

fn check_abort_budget(batch: &renewal::CycleBatch) -> Result<(), RunError> {
    let frac = batch.abort_fraction();
    if frac >= ABORT_BUDGET {
        return Err(RunError::AbortBudget(frac));
    }
    Ok(())
}

fn step_config(cfg: &ExperimentConfig) -> Result<StepConfig, RunError> {
    Ok(StepConfig::new(cfg.dt, cfg.max_steps, cfg.record_stride)?)
}

/// Execute the configured command, writing all artifacts into `out_dir`.
/// Deterministic given (config, seed, workers); `threads` only schedules.
pub fn run(cfg: &ExperimentConfig, threads: usize, out_dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(out_dir)?;
    let started = std::time::Instant::now();
    let step = step_config(cfg)?;
    match &cfg.args {
        CommandArgs::Simulate { h0, v0, horizon } => {
            let noise = NoiseSource::new(cfg.seed, 0);
            let traj =
                simulate(&cfg.params, SystemState::initial(*h0, *v0), &step, &noise, *horizon)?;
            let mut f = fs::File::create(out_dir.join("trajectory.csv"))?;
            traj.write_csv(&mut f)?;
        }
        CommandArgs::Cycles { n_cycles, t_cap } => {
            let batch = renewal::collect_cycles_parallel(
                &cfg.params,
                *n_cycles,
                &step,
                cfg.seed,
                *t_cap,
                cfg.workers,
                threads,
                &CollectOptions::default(),
            )?;
            check_abort_budget(&batch)?;
            let mut f = fs::File::create(out_dir.join("cycles.csv"))?;
            batch.write_records(&mut f)?;
            let zeta = renewal::zeta_tail_check(&batch)?;
            report::write_json(out_dir, "zeta_tail.json", &zeta)?;
            let iid = renewal::cycle_iid_diagnostics(&batch)?;
            report::write_json(out_dir, "iid.json", &iid)?;
        }
        CommandArgs::Stationary { n_cycles, t_cap, nh, nv, pilot_cycles } => {
            let grid = stationary::pilot_grid(
                &cfg.params,
                &step,
                cfg.seed,
                *pilot_cycles,
                *nh as usize,
                *nv as usize,
            )?;
            let opts = CollectOptions { bulk_grid: Some(grid), ..Default::default() };
            let batch = renewal::collect_cycles_parallel(
                &cfg.params,
                *n_cycles,
                &step,
                cfg.seed,
                *t_cap,
                cfg.workers,
                threads,
                &opts,
            )?;
            check_abort_budget(&batch)?;
            let pi = stationary::estimate_pi(&batch)?;
            let rc = derive_renewal_config(&cfg.params)?;
            let horizon = batch.total_duration();
            let avg_noise = NoiseSource::new(cfg.seed.wrapping_add(0x9e37_79b9), 0);
            let avg = stationary::time_average_stream(
                &cfg.params,
                SystemState::initial(0.0, rc.renewal_v),
                &step,
                &avg_noise,
                horizon,
                0.0,
                grid,
            )?;
            let tv = tv_distance(&pi, &avg)?;
            write_measure(out_dir, "pi.csv", &pi, cfg, batch.cycles.len())?;
            write_measure(out_dir, "time_average.csv", &avg, cfg, batch.cycles.len())?;
            #[derive(Serialize)]
            struct StationaryReport {
                n_cycles: usize,
                mean_cycle: f64,
                matched_horizon: f64,
                overflow_fraction: f64,
                tv_renewal_vs_time_average: f64,
            }
            report::write_json(
                out_dir,
                "stationary.json",
                &StationaryReport {
                    n_cycles: batch.cycles.len(),
                    mean_cycle: batch.mean_duration(),
                    matched_horizon: horizon,
                    overflow_fraction: pi.overflow_fraction(),
                    tv_renewal_vs_time_average: tv,
                },
            )?;
        }
        CommandArgs::Tails { n_cycles, t_cap, v_window, h_window } => {
            let tails = default_tail_grids(cfg);
            let opts = CollectOptions { tails: Some(tails), ..Default::default() };
            let batch = renewal::collect_cycles_parallel(
                &cfg.params,
                *n_cycles,
                &step,
                cfg.seed,
                *t_cap,
                cfg.workers,
                threads,
                &opts,
            )?;
            check_abort_budget(&batch)?;
            let velocity = inertdrift_core::tail::fit_velocity_tail(&batch, &cfg.params, *v_window)?;
            let gap = inertdrift_core::tail::fit_gap_tail(&batch, &cfg.params, *h_window)?;
            #[derive(Serialize)]
            struct TailsReport {
                n_cycles: usize,
                velocity: inertdrift_core::tail::TailFit,
                gap: inertdrift_core::tail::TailFit,
            }
            report::write_json(
                out_dir,
                "tails.json",
                &TailsReport { n_cycles: batch.cycles.len(), velocity, gap },
            )?;
        }
        CommandArgs::Fluctuations { horizon, n_checkpoints } => {
            let rc = derive_renewal_config(&cfg.params)?;
            let checkpoints = log_spaced(std::f64::consts::E + 0.1, *horizon, *n_checkpoints);
            let noise = NoiseSource::new(cfg.seed, 0);
            let points = analytics::fluctuation_ratios(
                &cfg.params,
                SystemState::initial(0.0, rc.renewal_v),
                &step,
                &noise,
                &checkpoints,
            )?;
            let check = analytics::fluctuation_check(&cfg.params, &points, 1.1, 0.5)?;
            #[derive(Serialize)]
            struct FluctArtifact {
                points: Vec<analytics::RatioPoint>,
                check: analytics::FluctuationCheck,
            }
            report::write_json(out_dir, "fluctuations.json", &FluctArtifact { points, check })?;
        }
        CommandArgs::Lln { horizon, n_seeds } => {
            let per_seed = inertdrift_core::lanes::run_indexed(
                *n_seeds as usize,
                threads,
                |i| -> Result<(f64, f64), String> {
                    let noise = NoiseSource::new(cfg.seed, i as u64);
                    let rc = derive_renewal_config(&cfg.params).map_err(|e| e.to_string())?;
                    let mut lane_step = step;
                    lane_step.record_stride = u64::MAX; // terminal state only
                    let traj = simulate(
                        &cfg.params,
                        SystemState::initial(0.0, rc.renewal_v),
                        &lane_step,
                        &noise,
                        *horizon,
                    )
                    .map_err(|e| e.to_string())?;
                    analytics::lln_estimate(&traj).map_err(|e| e.to_string())
                },
            );
            let per_seed: Vec<(f64, f64)> =
                per_seed.into_iter().collect::<Result<_, _>>().map_err(RunError::Module)?;
            let s_vals: Vec<f64> = per_seed.iter().map(|p| p.0).collect();
            #[derive(Serialize)]
            struct LlnReport {
                target: f64,
                mean_s_over_t: f64,
                sd_s_over_t: f64,
                per_seed: Vec<(f64, f64)>,
            }
            report::write_json(
                out_dir,
                "lln.json",
                &LlnReport {
                    target: cfg.params.renewal_velocity(),
                    mean_s_over_t: inertdrift_core::stats::mean(&s_vals),
                    sd_s_over_t: inertdrift_core::stats::sd(&s_vals),
                    per_seed,
                },
            )?;
        }
        CommandArgs::Ergodicity { pi_cycles, n_chains, t_max, n_times, init_h, init_v } => {
            let grid = stationary::pilot_grid(&cfg.params, &step, cfg.seed, 1000, 25, 25)?;
            let opts = CollectOptions { bulk_grid: Some(grid), ..Default::default() };
            let seed_b = cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let half_a = renewal::collect_cycles_parallel(
                &cfg.params,
                pi_cycles / 2,
                &step,
                cfg.seed,
                1e3,
                cfg.workers,
                threads,
                &opts,
            )?;
            let half_b = renewal::collect_cycles_parallel(
                &cfg.params,
                pi_cycles - pi_cycles / 2,
                &step,
                seed_b,
                1e3,
                cfg.workers,
                threads,
                &opts,
            )?;
            check_abort_budget(&half_a)?;
            check_abort_budget(&half_b)?;
            let pi_a = stationary::estimate_pi(&half_a)?;
            let pi_b = stationary::estimate_pi(&half_b)?;
            let floor = tv_distance(&pi_a, &pi_b)?;
            let mut merged = half_a;
            merged.merge(half_b)?;
            let pi = stationary::estimate_pi(&merged)?;
            let times: Vec<f64> =
                (1..=*n_times).map(|i| t_max * i as f64 / *n_times as f64).collect();
            let chain_noise = NoiseSource::new(cfg.seed.wrapping_add(1), 0);
            let fit_a = analytics::tv_decay_curve(
                &cfg.params,
                SystemState::initial(*init_h, *init_v),
                &times,
                *n_chains,
                grid,
                &pi,
                floor,
                &step,
                &chain_noise,
                threads,
            )?;
            #[derive(Serialize)]
            struct ErgodicityReport {
                noise_floor: f64,
                fit_a: analytics::DecayFit,
            }
            report::write_json(
                out_dir,
                "ergodicity.json",
                &ErgodicityReport { noise_floor: floor, fit_a },
            )?;
        }
        CommandArgs::Bounds { n_trials } => {
            let specs = bounds::registry(&cfg.params)?;
            let noise = NoiseSource::new(cfg.seed, 0);
            let mut results = Vec::with_capacity(specs.len());
            for spec in &specs {
                results.push(bounds::run_spec(&cfg.params, spec, *n_trials, &step, &noise, threads)?);
            }
            report::write_json(out_dir, "bounds.json", &results)?;
            write_bounds_table(out_dir, &results)?;
        }
        CommandArgs::Oracle { n_samples, spacing, burn_in, negative_control } => {
            let noise = NoiseSource::new(cfg.seed, 0);
            let rep = if *negative_control {
                let samples = analytics::sample_spaced(
                    &cfg.params,
                    SystemState::initial(1.0, 0.0),
                    &step,
                    &noise,
                    *n_samples,
                    *spacing,
                    *burn_in,
                    threads,
                )?;
                analytics::product_form_tests(&samples, 5.0 * step.dt.sqrt())?
            } else {
                analytics::gamma_zero_oracle(
                    &cfg.params,
                    *n_samples,
                    &step,
                    &noise,
                    *spacing,
                    *burn_in,
                    threads,
                )?
            };
            #[derive(Serialize)]
            struct OracleReport {
                negative_control: bool,
                report: analytics::ProductFormReport,
            }
            report::write_json(
                out_dir,
                "oracle.json",
                &OracleReport { negative_control: *negative_control, report: rep },
            )?;
        }
        CommandArgs::Convergence { n_seeds, horizon } => {
            let factors = [2u64, 4, 8, 16];
            let fine_dt = step.dt / 16.0;
            let lanes = inertdrift_core::lanes::run_indexed(
                *n_seeds as usize,
                threads,
                |i| -> Result<Vec<f64>, String> {
                    let noise = NoiseSource::new(cfg.seed, i as u64);
                    let errs = inertdrift_core::integrator::strong_order_study(
                        &cfg.params,
                        SystemState::initial(0.0, cfg.params.renewal_velocity()),
                        fine_dt,
                        &factors,
                        *horizon,
                        &noise,
                    )
                    .map_err(|e| e.to_string())?;
                    Ok(errs.into_iter().map(|(_, e)| e).collect())
                },
            );
            let mut mean_errs = vec![0.0f64; factors.len()];
            let mut n_ok = 0u64;
            for lane in lanes {
                let errs = lane.map_err(RunError::Module)?;
                for (m, e) in mean_errs.iter_mut().zip(errs) {
                    *m += e;
                }
                n_ok += 1;
            }
            for m in &mut mean_errs {
                *m /= n_ok as f64;
            }
            let errors: Vec<(f64, f64)> = factors
                .iter()
                .zip(&mean_errs)
                .map(|(&f, &e)| (fine_dt * f as f64, e))
                .collect();
            let ratios: Vec<f64> =
                mean_errs.windows(2).map(|w| w[1] / w[0]).collect();
            #[derive(Serialize)]
            struct ConvergenceReport {
                fine_dt: f64,
                n_seeds: u64,
                errors: Vec<(f64, f64)>,
                /// err(2 dt) / err(dt), coarsening upward.
                ratios: Vec<f64>,
            }
            report::write_json(
                out_dir,
                "convergence.json",
                &ConvergenceReport { fine_dt, n_seeds: n_ok, errors, ratios },
            )?;
        }
    }

    // plot-ready CSVs for whatever this command produced (trajectory and
    // measure exports are already plot-ready)
    match report::emit_plot_data(out_dir) {
        Ok(_) => {}
        Err(report::PlotError::MissingArtifacts(_)) => {}
        Err(e) => return Err(e.into()),
    }

    report::write_manifest(out_dir, &cfg.to_text(), threads, started.elapsed().as_secs_f64())?;
    Ok(())
}

fn write_measure(
    dir: &Path,
    name: &str,
    m: &inertdrift_core::measure::EmpiricalMeasure,
    cfg: &ExperimentConfig,
    n_cycles: usize,
) -> Result<(), RunError> {
    let f = fs::File::create(dir.join(name))?;
    m.write_csv(
        f,
        &[
            ("gamma", format!("{:?}", cfg.params.gamma())),
            ("g", format!("{:?}", cfg.params.g())),
            ("dt", format!("{:?}", cfg.dt)),
            ("seed", format!("{}", cfg.seed)),
            ("n_cycles", format!("{n_cycles}")),
        ],
    )?;
    Ok(())
}

fn write_bounds_table(dir: &Path, results: &[bounds::SpecResult]) -> std::io::Result<()> {
    use std::io::Write as _;
    let mut f = fs::File::create(dir.join("bounds_table.txt"))?;
    writeln!(
        f,
        "{:<34} {:<28} {:>10} {:>22} {:>11} {:>8}",
        "spec", "args", "p_hat", "wilson_99", "bound", "verdict"
    )?;
    for res in results {
        for r in &res.reports {
            writeln!(
                f,
                "{:<34} {:<28} {:>10.3e} ({:>9.2e},{:>9.2e}) {:>11} {:>8}",
                r.spec,
                r.label,
                r.p_hat,
                r.wilson_ci.0,
                r.wilson_ci.1,
                r.bound_value.map_or_else(|| "shape".to_string(), |b| format!("{b:.3e}")),
                format!("{:?}", r.verdict),
            )?;
        }
        if let Some(sh) = &res.shape {
            writeln!(
                f,
                "  -> shape: slope {:.3} in ({:.3}, {:.3}), claimed rate {:?}, verdict {:?}",
                sh.slope, sh.slope_ci.0, sh.slope_ci.1, sh.claimed_rate, sh.verdict
            )?;
        }
        writeln!(f, "  => {:?}", res.verdict)?;
    }
    Ok(())
}

fn default_tail_grids(cfg: &ExperimentConfig) -> TailGrids {
    let g = cfg.params.g();
    let gamma = cfg.params.gamma();
    TailGrids {
        gap: TailGrid::new(0.0, 24.0 * gamma / g, 4096).expect("static grid"),
        velocity: TailGrid::new(
            cfg.params.velocity_floor().max(-20.0 * g),
            8.0 * (g / (1.0 + gamma)).max(1.0),
            4096,
        )
        .expect("static grid"),
    }
}

fn log_spaced(lo: f64, hi: f64, n: u64) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}
