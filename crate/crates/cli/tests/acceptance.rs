//! Acceptance suite: one test per acceptance criterion, each printing a
//! single PASS line with the measured values (run with --nocapture to see
//! them). Tolerances and frozen constants are pinned here, in code.
//!
//!     cargo test -p inertdrift --test acceptance -- --nocapture

use inertdrift_core::analytics;
use inertdrift_core::bounds::{self, Verdict};
use inertdrift_core::integrator::{
    simulate, strong_order_study, StepConfig, Stepper, ZeroNoise,
};
use inertdrift_core::measure::{tv_distance, GridSpec};
use inertdrift_core::model::{
    derive_renewal_config, interior_hitting_time, interior_velocity, ModelParams, SystemState,
};
use inertdrift_core::noise::NoiseSource;
use inertdrift_core::renewal::{self, CollectOptions, CycleBatch};
use inertdrift_core::stationary;
use inertdrift_core::tail::{fit_gap_tail, fit_velocity_tail, TailGrid, TailGrids};
use std::sync::OnceLock;

fn p11() -> ModelParams {
    ModelParams::new(1.0, 1.0).unwrap()
}

const THREADS: usize = 2;

/// Shared 1e5-cycle batch at dt = 1e-4 with bulk and tail occupation
/// (criteria 5 and 6). Built once; roughly three minutes of simulation.
fn big_batch() -> &'static CycleBatch {
    static BATCH: OnceLock<CycleBatch> = OnceLock::new();
    BATCH.get_or_init(|| {
        let p = p11();
        let cfg = StepConfig::new(1e-4, u64::MAX, 1).unwrap();
        let grid = GridSpec::new(8.0, -1.0, 2.0, 200, 200).unwrap();
        let tails = TailGrids {
            gap: TailGrid::new(0.0, 24.0, 4096).unwrap(),
            velocity: TailGrid::new(-1.0, 8.0, 4096).unwrap(),
        };
        let opts = CollectOptions { bulk_grid: Some(grid), tails: Some(tails), ..Default::default() };
        renewal::collect_cycles_parallel(&p, 100_000, &cfg, 60_001, 1e3, 4, THREADS, &opts)
            .expect("big batch collection")
    })
}

#[test]
fn criterion_01_skorohod_complementarity_suite() {
    let start = std::time::Instant::now();
    let n_total: u64 = 1_000_000;
    let mut checked = 0u64;
    for (lane, (gamma, g, h0)) in
        [(1.0, 1.0, 0.5), (0.5, 2.0, 0.0), (2.0, 0.5, 1.5), (1.0, 1.0, 0.0)].iter().enumerate()
    {
        let p = ModelParams::new(*gamma, *g).unwrap();
        let noise = NoiseSource::new(10_100, lane as u64);
        let v0 = p.renewal_velocity();
        let mut stepper = Stepper::new(p, SystemState::initial(*h0, v0), 1e-3, noise);
        for _ in 0..n_total / 4 {
            let prev = *stepper.state();
            let dl = stepper.step();
            let st = stepper.state();
            assert!(st.h >= 0.0, "h went negative");
            assert!(dl >= 0.0, "negative local time increment");
            assert!(dl * st.h == 0.0, "complementarity violated: dl={dl} h={}", st.h);
            let db = st.b - prev.b;
            let residual = st.h - prev.h - prev.v * 1e-3 + db - dl;
            assert!(residual.abs() <= 1e-12, "identity residual {residual}");
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert_eq!(checked, n_total);
    assert!(elapsed.as_secs_f64() < 10.0, "suite took {elapsed:.2?}, budget 10 s");
    println!(
        "ACCEPTANCE 01 PASS skorohod/complementarity: {n_total} steps, all invariants hold, {elapsed:.2?} < 10 s"
    );
}

#[test]
fn criterion_02_closed_form_interior_dynamics() {
    // frozen from the calibration run: worst measured K over the grid was
    // 0.736 (gamma = g = 2), dt-independent to three digits
    const K_FROZEN: f64 = 1.0;
    let mut worst_k: f64 = 0.0;
    for gamma in [0.5, 1.0, 2.0] {
        for g in [0.5, 1.0, 2.0] {
            let p = ModelParams::new(gamma, g).unwrap();
            let mut k_of_dt = Vec::new();
            for dt in [1e-3, 1e-4] {
                let cfg = StepConfig::new(dt, u64::MAX, 1).unwrap();
                // h0 far from the boundary keeps the path interior over [0, 1]
                let traj = simulate(&p, SystemState::initial(50.0, 1.0), &cfg, &ZeroNoise, 1.0)
                    .unwrap();
                let mut err: f64 = 0.0;
                for st in &traj.states {
                    err = err.max((st.v - interior_velocity(&p, 1.0, st.t)).abs());
                }
                assert!(
                    err <= K_FROZEN * dt,
                    "gamma={gamma} g={g} dt={dt}: err {err} > K dt"
                );
                k_of_dt.push(err / dt);
                worst_k = worst_k.max(err / dt);
            }
            // K is a dt-independent constant for this scheme
            assert!(
                (k_of_dt[0] - k_of_dt[1]).abs() <= 0.05 * k_of_dt[0].max(1e-12),
                "K drifts with dt at gamma={gamma}, g={g}: {k_of_dt:?}"
            );
            // composition identity on a (v0, a) grid
            for v0 in [2.0, 0.5, -0.2] {
                for frac in [0.9, 0.5, 0.1] {
                    let floor = p.velocity_floor();
                    let a = floor + frac * (v0 - floor);
                    if a >= v0 {
                        continue;
                    }
                    let tau = interior_hitting_time(&p, v0, a).unwrap();
                    let back = interior_velocity(&p, v0, tau);
                    assert!(
                        ((back - a) / a.abs().max(1e-12)).abs() <= 1e-12,
                        "composition identity broke at gamma={gamma}, g={g}, v0={v0}, a={a}"
                    );
                }
            }
        }
    }
    println!(
        "ACCEPTANCE 02 PASS closed-form interior dynamics: max measured K = {worst_k:.3} <= {K_FROZEN} (frozen), composition identity to 1e-12"
    );
}

#[test]
fn criterion_03_lln() {
    let p = p11();
    let horizon = 1e5;
    let cfg = StepConfig::new(1e-3, u64::MAX, u64::MAX).unwrap();
    let estimates = inertdrift_core::lanes::run_indexed(20, THREADS, |seed| {
        let noise = NoiseSource::new(30_000 + seed as u64, 0);
        let traj = simulate(&p, SystemState::initial(0.0, -0.5), &cfg, &noise, horizon).unwrap();
        analytics::lln_estimate(&traj).unwrap()
    });
    let s_vals: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    let mean = inertdrift_core::stats::mean(&s_vals);
    let target = -0.5;
    assert!(
        (mean - target).abs() <= 0.02,
        "mean S_t/t = {mean} not within 0.02 of {target}"
    );
    // X_t/t shares the limit: the gap over t vanishes
    let max_gap = estimates.iter().map(|e| (e.0 - e.1).abs()).fold(0.0, f64::max);
    assert!(max_gap < 1e-3, "S/t and X/t diverge: {max_gap}");
    println!(
        "ACCEPTANCE 03 PASS lln: mean S_t/t = {mean:.5} within +-0.02 of -0.5 (20 seeds, horizon 1e5, dt 1e-3)"
    );
}

#[test]
fn criterion_04_renewal_reward_vs_time_average() {
    let p = p11();
    let rc = derive_renewal_config(&p).unwrap();
    let pilot_cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
    let grid = stationary::pilot_grid(&p, &pilot_cfg, 40_001, 2000, 200, 200).unwrap();
    let cfg = StepConfig::new(1e-4, u64::MAX, 1).unwrap();
    let opts = CollectOptions { bulk_grid: Some(grid), ..Default::default() };
    let batch =
        renewal::collect_cycles_parallel(&p, 10_000, &cfg, 40_002, 1e3, 4, THREADS, &opts)
            .unwrap();
    assert!(batch.abort_fraction() < 1e-4, "abort budget violated");
    let pi = stationary::estimate_pi(&batch).unwrap();
    let horizon = batch.total_duration();
    let avg = stationary::time_average_stream(
        &p,
        SystemState::initial(0.0, rc.renewal_v),
        &cfg,
        &NoiseSource::new(40_003, 0),
        horizon,
        0.0,
        grid,
    )
    .unwrap();
    let tv = tv_distance(&pi, &avg).unwrap();
    assert!(tv < 0.05, "TV(renewal-reward, time-average) = {tv} >= 0.05");
    println!(
        "ACCEPTANCE 04 PASS renewal-reward vs time-average: TV = {tv:.4} < 0.05 (1e4 cycles, matched horizon {horizon:.0}, 200x200 grid)"
    );
}

#[test]
fn criterion_05_zeta_tail() {
    let batch = big_batch();
    // the criterion is stated at 1e4 cycles; use the first 1e4 of the batch
    let durations: Vec<f64> = batch.durations().into_iter().take(10_000).collect();
    let report = renewal::zeta_tail_from_durations(&durations).unwrap();
    assert!(!report.degenerate);
    assert!(report.c_fit > 0.0, "decay rate not positive: {report:?}");
    assert!(report.c_ci.0 > 0.0, "95% CI does not exclude 0: {:?}", report.c_ci);
    assert!(report.concave_ok, "log-survival not concave-decreasing: {report:?}");
    assert!(
        report.log_survival.windows(2).all(|w| w[1] <= w[0]),
        "survival curve not monotone"
    );
    println!(
        "ACCEPTANCE 05 PASS zeta tail: log P(zeta > t^2) concave-decreasing, c = {:.3}, 95% CI ({:.3}, {:.3}) excludes 0 (1e4 cycles)",
        report.c_fit, report.c_ci.0, report.c_ci.1
    );
}

#[test]
fn criterion_06_tail_sandwiches() {
    let p = p11();
    let v_bracket = (-8.0, -0.25);
    let h_bracket = (-4.0, -1.0 / 32.0);
    let mut batch = std::borrow::Cow::Borrowed(big_batch());
    for escalation in 0..2 {
        let v_fit = fit_velocity_tail(&batch, &p, (1e-3, 3e-2)).unwrap();
        let h_fit = fit_gap_tail(&batch, &p, (3e-3, 5e-2)).unwrap();
        let inside = |ci: (f64, f64), br: (f64, f64)| ci.0 >= br.0 && ci.1 <= br.1;
        let straddles = |ci: (f64, f64), br: (f64, f64)| {
            (ci.0 < br.0 && ci.1 > br.0) || (ci.0 < br.1 && ci.1 > br.1)
        };
        if inside(v_fit.ci, v_bracket) && inside(h_fit.ci, h_bracket) {
            println!(
                "ACCEPTANCE 06 PASS tail sandwiches: velocity slope {:.3} CI ({:.3},{:.3}) in [-8,-0.25]; gap slope {:.3} CI ({:.3},{:.3}) in [-4,-1/32] ({} cycles)",
                v_fit.slope, v_fit.ci.0, v_fit.ci.1, h_fit.slope, h_fit.ci.0, h_fit.ci.1,
                batch.cycles.len()
            );
            return;
        }
        // documented escalation: a CI straddling a bracket edge is
        // inconclusive; rerun at 4x cycles before judging
        if escalation == 0 && (straddles(v_fit.ci, v_bracket) || straddles(h_fit.ci, h_bracket)) {
            eprintln!("criterion 06 inconclusive at 1e5 cycles; escalating to 4x");
            let cfg = StepConfig::new(1e-4, u64::MAX, 1).unwrap();
            let grid = GridSpec::new(8.0, -1.0, 2.0, 200, 200).unwrap();
            let tails = TailGrids {
                gap: TailGrid::new(0.0, 24.0, 4096).unwrap(),
                velocity: TailGrid::new(-1.0, 8.0, 4096).unwrap(),
            };
            let opts =
                CollectOptions { bulk_grid: Some(grid), tails: Some(tails), ..Default::default() };
            batch = std::borrow::Cow::Owned(
                renewal::collect_cycles_parallel(&p, 400_000, &cfg, 60_002, 1e3, 4, THREADS, &opts)
                    .unwrap(),
            );
            continue;
        }
        panic!(
            "tail sandwich failed: velocity CI {:?} vs {:?}, gap CI {:?} vs {:?}",
            v_fit.ci, v_bracket, h_fit.ci, h_bracket
        );
    }
}

#[test]
fn criterion_07_fluctuation_proxies() {
    let p = p11();
    let rc = derive_renewal_config(&p).unwrap();
    // 1e7 steps at dt = 1e-3
    let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
    let horizon = 1e7 * 1e-3;
    let checkpoints: Vec<f64> = (0..40)
        .map(|i| 2.8 * (horizon / 2.8_f64).powf(i as f64 / 39.0))
        .collect();
    let points = analytics::fluctuation_ratios(
        &p,
        SystemState::initial(0.0, rc.renewal_v),
        &cfg,
        &NoiseSource::new(70_001, 0),
        &checkpoints,
    )
    .unwrap();
    let check = analytics::fluctuation_check(&p, &points, 1.1, 0.5).unwrap();
    assert!(
        check.pass,
        "fluctuation proxy failed: {check:?}"
    );
    println!(
        "ACCEPTANCE 07 PASS fluctuation proxies at 1e7 steps: V ratio final {:.3} <= {:.3}, last-decade max {:.3} >= {:.3}; H ratio final {:.3} <= {:.3}, last-decade max {:.3} >= {:.3}",
        check.v_final_ratio, check.v_bracket.1 * 1.1, check.v_last_decade_max, check.v_bracket.0 * 0.5,
        check.h_final_ratio, check.h_bracket.1 * 1.1, check.h_last_decade_max, check.h_bracket.0 * 0.5,
    );
}

#[test]
fn criterion_08_exponential_ergodicity() {
    let p = p11();
    let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
    let grid = GridSpec::new(4.0, -1.0, 1.2, 25, 25).unwrap();
    let opts = CollectOptions { bulk_grid: Some(grid), ..Default::default() };
    let half_a =
        renewal::collect_cycles_parallel(&p, 10_000, &cfg, 80_001, 1e3, 4, THREADS, &opts).unwrap();
    let half_b =
        renewal::collect_cycles_parallel(&p, 10_000, &cfg, 80_002, 1e3, 4, THREADS, &opts).unwrap();
    let floor = tv_distance(
        &stationary::estimate_pi(&half_a).unwrap(),
        &stationary::estimate_pi(&half_b).unwrap(),
    )
    .unwrap();
    let mut merged = half_a;
    merged.merge(half_b).unwrap();
    let pi = stationary::estimate_pi(&merged).unwrap();
    let times: Vec<f64> = vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0];
    let mut summaries = Vec::new();
    for (k, init) in [SystemState::initial(5.0, 2.0), SystemState::initial(2.0, -0.9)]
        .into_iter()
        .enumerate()
    {
        let fit = analytics::tv_decay_curve(
            &p,
            init,
            &times,
            10_000,
            grid,
            &pi,
            floor,
            &cfg,
            &NoiseSource::new(80_010 + k as u64, 0),
            THREADS,
        )
        .unwrap();
        assert!(
            fit.lambda_fit > 0.0 && fit.lambda_fit < 1.0,
            "lambda_fit {} outside (0,1) for init ({}, {})",
            fit.lambda_fit,
            init.h,
            init.v
        );
        assert!(
            fit.r2 >= 0.9,
            "r2 {} below 0.9 for init ({}, {}): {fit:?}",
            fit.r2,
            init.h,
            init.v
        );
        assert!(
            fit.slope_ci.1 < 0.0,
            "decay slope CI does not exclude 0: {:?}",
            fit.slope_ci
        );
        summaries.push(format!(
            "init ({}, {}): lambda {:.3}, r2 {:.3}",
            init.h, init.v, fit.lambda_fit, fit.r2
        ));
    }
    println!(
        "ACCEPTANCE 08 PASS exponential ergodicity: {} (noise floor {:.4}, 1e4 chains)",
        summaries.join("; "),
        floor
    );
}

#[test]
fn criterion_09_bounds_suite() {
    let p = p11();
    let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
    let noise = NoiseSource::new(90_001, 0);
    let specs = bounds::registry(&p).unwrap();
    assert!(specs.len() >= 10);
    let mut level = 0;
    let mut shape = 0;
    for spec in &specs {
        assert!(spec.cases.len() >= 3, "{} has fewer than 3 argument settings", spec.name);
        let result = bounds::run_spec(&p, spec, 30_000, &cfg, &noise, THREADS).unwrap();
        assert_eq!(
            result.verdict,
            Verdict::Pass,
            "spec {} did not pass: {:?}",
            spec.name,
            result
        );
        match spec.mode {
            bounds::Mode::Level => level += 1,
            bounds::Mode::Shape { .. } => shape += 1,
        }
    }
    println!(
        "ACCEPTANCE 09 PASS bounds suite: {} specs ({level} level-mode, {shape} shape-mode), 3 settings each, 99% Wilson, all Pass",
        specs.len()
    );
}

#[test]
fn criterion_10_gamma_zero_oracle() {
    let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
    let p0 = ModelParams::gamma_zero(1.0).unwrap();
    let report = analytics::gamma_zero_oracle(
        &p0,
        10_000,
        &cfg,
        &NoiseSource::new(100_001, 0),
        5.0,
        20.0,
        THREADS,
    )
    .unwrap();
    assert!(report.ks_gap.p_value > 0.01, "Exponential gap rejected: {report:?}");
    assert!(report.ks_velocity.p_value > 0.01, "Gaussian velocity rejected: {report:?}");
    assert!(report.independence.p_value > 0.01, "independence rejected: {report:?}");
    assert!(report.product_form_ok);

    // gamma = 1 negative control must be flagged as non-product
    let p1 = p11();
    let samples = analytics::sample_spaced(
        &p1,
        SystemState::initial(1.0, 0.0),
        &cfg,
        &NoiseSource::new(100_002, 0),
        10_000,
        5.0,
        20.0,
        THREADS,
    )
    .unwrap();
    let control = analytics::product_form_tests(&samples, 5.0 * cfg.dt.sqrt()).unwrap();
    assert!(
        !control.product_form_ok,
        "gamma=1 control not flagged: {control:?}"
    );
    println!(
        "ACCEPTANCE 10 PASS gamma-zero oracle: Exp gap p={:.3}, Gauss velocity p={:.3}, independence p={:.3} (all > 0.01, 1e4 samples); gamma=1 control flagged (independence p={:.1e})",
        report.ks_gap.p_value,
        report.ks_velocity.p_value,
        report.independence.p_value,
        control.independence.p_value
    );
}

#[test]
fn criterion_11_shared_noise_continuity() {
    let p = p11();
    let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
    // frozen regression threshold from calibration: measured C in [0.7, 1.2]
    const C_MAX: f64 = 2.0;
    let mut worst_spread: f64 = 0.0;
    for seed in 0..10u64 {
        let noise = NoiseSource::new(110_000 + seed, 0);
        let mut ratios = Vec::new();
        for delta in [1e-6, 1e-5, 1e-4, 1e-3] {
            let d = delta / std::f64::consts::SQRT_2;
            let i1 = SystemState::initial(0.3, -0.5);
            let i2 = SystemState::initial(0.3 + d, -0.5 + d);
            let (a, b) =
                inertdrift_core::shared_noise_pair(&p, i1, i2, &cfg, &noise, 1.0).unwrap();
            let mut sup: f64 = 0.0;
            for (x, y) in a.states.iter().zip(&b.states) {
                sup = sup.max((x.h - y.h).abs().max((x.v - y.v).abs()));
            }
            assert!(sup <= C_MAX * delta, "seed {seed}: sup distance {sup} > {C_MAX} delta");
            ratios.push(sup / delta);
        }
        let spread = ratios.iter().copied().fold(f64::MIN, f64::max)
            / ratios.iter().copied().fold(f64::MAX, f64::min);
        assert!(
            spread <= 3.0,
            "seed {seed}: ratio spread {spread} over 3 decades exceeds factor 3 ({ratios:?})"
        );
        worst_spread = worst_spread.max(spread);
    }
    println!(
        "ACCEPTANCE 11 PASS shared-noise continuity: sup-path distance linear over 1e-6..1e-3, worst spread factor {worst_spread:.3} <= 3 (10 seeds, C <= {C_MAX})"
    );
}

// Strong-order convergence backs criterion 2's error budget; measured, not
// assumed (spec invariant in the integrator module).
#[test]
fn integrator_strong_order_measured() {
    let p = p11();
    let n_seeds = 400u64;
    let mut mean_errs = [0.0f64; 4];
    for seed in 0..n_seeds {
        let noise = NoiseSource::new(900, seed);
        let errs = strong_order_study(
            &p,
            SystemState::initial(0.0, -0.5),
            1e-3 / 16.0,
            &[2, 4, 8, 16],
            1.0,
            &noise,
        )
        .unwrap();
        for (k, (_, e)) in errs.iter().enumerate() {
            mean_errs[k] += e / n_seeds as f64;
        }
    }
    let mut ratios = Vec::new();
    for w in mean_errs.windows(2) {
        let r = w[1] / w[0];
        assert!(
            (1.4..=2.6).contains(&r),
            "halving ratio {r} outside 2 +- 30% (errors {mean_errs:?})"
        );
        ratios.push(r);
    }
    println!(
        "strong order measured: halving ratios {ratios:?} within [1.4, 2.6] vs dt/16 reference (400 paths)"
    );
}

// Module invariant (analytics): the LLN estimate variance scales as 1/t
// over t in {1e3, 1e4, 1e5} within a factor 2. Nested checkpoints reuse one
// path per seed.
#[test]
fn lln_variance_scales_inversely_with_horizon() {
    let p = p11();
    let cfg = StepConfig::new(1e-3, u64::MAX, 1_000_000).unwrap();
    let checkpoints = [1e3, 1e4, 1e5];
    let per_seed = inertdrift_core::lanes::run_indexed(24, THREADS, |seed| {
        let noise = NoiseSource::new(120_000 + seed as u64, 0);
        let traj = simulate(&p, SystemState::initial(0.0, -0.5), &cfg, &noise, 1e5).unwrap();
        checkpoints.map(|t| {
            let k = traj.states.partition_point(|s| s.t < t);
            let st = &traj.states[k.min(traj.states.len() - 1)];
            st.s / st.t
        })
    });
    let scaled: Vec<f64> = (0..3)
        .map(|j| {
            let vals: Vec<f64> = per_seed.iter().map(|v| v[j]).collect();
            inertdrift_core::stats::variance(&vals) * checkpoints[j]
        })
        .collect();
    let max = scaled.iter().copied().fold(f64::MIN, f64::max);
    let min = scaled.iter().copied().fold(f64::MAX, f64::min);
    assert!(
        max / min <= 2.0,
        "t * var(S_t/t) not stable within factor 2: {scaled:?}"
    );
    println!(
        "lln variance scaling: t * var = {scaled:?} across t in 1e3..1e5, spread {:.2} <= 2",
        max / min
    );
}

// Module invariant (analytics): enlarging the sample narrows the tail-fit
// CI and keeps the point estimate where a passing bracket put it.
#[test]
fn tail_fit_monotone_in_data() {
    let p = p11();
    let cfg = StepConfig::new(1e-3, u64::MAX, 1).unwrap();
    let tails = TailGrids {
        gap: TailGrid::new(0.0, 24.0, 4096).unwrap(),
        velocity: TailGrid::new(-1.0, 8.0, 4096).unwrap(),
    };
    let opts = CollectOptions { tails: Some(tails), ..Default::default() };
    let small =
        renewal::collect_cycles_parallel(&p, 15_000, &cfg, 130_001, 1e3, 4, THREADS, &opts)
            .unwrap();
    let mut large = small.clone();
    large
        .merge(
            renewal::collect_cycles_parallel(&p, 30_000, &cfg, 130_002, 1e3, 4, THREADS, &opts)
                .unwrap(),
        )
        .unwrap();
    let f_small = fit_velocity_tail(&small, &p, (1e-3, 3e-2)).unwrap();
    let f_large = fit_velocity_tail(&large, &p, (1e-3, 3e-2)).unwrap();
    let w_small = f_small.ci.1 - f_small.ci.0;
    let w_large = f_large.ci.1 - f_large.ci.0;
    assert!(
        w_large < 1.2 * w_small,
        "tripling the data failed to narrow the CI: {w_small} -> {w_large}"
    );
    assert!(
        (f_large.slope - f_small.slope).abs() <= w_small,
        "point estimate moved by more than the small-sample CI width: {} -> {}",
        f_small.slope,
        f_large.slope
    );
    println!(
        "tail-fit stability: CI width {w_small:.3} -> {w_large:.3} at 3x data, slope {:.3} -> {:.3}",
        f_small.slope, f_large.slope
    );
}

#[test]
fn criterion_12_pipeline_determinism() {
    use std::fs;
    use std::path::PathBuf;
    use std::process::Command;

    let base = std::env::temp_dir().join(format!("inertdrift-acc12-{}", std::process::id()));
    let _ = fs::remove_dir_all(&base);
    fs::create_dir_all(&base).unwrap();

    let model = "[model]\ngamma = 1.0\ng = 1.0\n";
    let zero_model = "[model]\ngamma = 0\ngamma_zero = true\ng = 1.0\n";
    let seeds = "[seeds]\nseed = 12\nworkers = 2\n";
    let jobs: Vec<(&str, String)> = vec![
        ("simulate", format!("{model}[step]\ndt = 1e-3\nrecord_stride = 100\n{seeds}[simulate]\nh0 = 1.0\nv0 = 0.0\nhorizon = 50.0\n")),
        ("cycles", format!("{model}[step]\ndt = 1e-3\n{seeds}[cycles]\nn_cycles = 1500\n")),
        ("stationary", format!("{model}[step]\ndt = 1e-3\n{seeds}[stationary]\nn_cycles = 1500\nnh = 50\nnv = 50\npilot_cycles = 300\n")),
        ("tails", format!("{model}[step]\ndt = 1e-3\n{seeds}[tails]\nn_cycles = 8000\nv_window_lo = 0.01\nv_window_hi = 0.08\nh_window_lo = 0.01\nh_window_hi = 0.08\n")),
        ("fluctuations", format!("{model}[step]\ndt = 1e-3\n{seeds}[fluctuations]\nhorizon = 500.0\nn_checkpoints = 12\n")),
        ("lln", format!("{model}[step]\ndt = 1e-3\n{seeds}[lln]\nhorizon = 2000.0\nn_seeds = 4\n")),
        ("ergodicity", format!("{model}[step]\ndt = 1e-3\n{seeds}[ergodicity]\npi_cycles = 2000\nn_chains = 4000\nt_max = 4.0\nn_times = 8\ninit_h = 2.0\ninit_v = -0.9\n")),
        ("bounds", format!("{model}[step]\ndt = 1e-3\n{seeds}[bounds]\nn_trials = 10000\n")),
        ("oracle", format!("{zero_model}[step]\ndt = 1e-3\n{seeds}[oracle]\nn_samples = 2000\nspacing = 2.0\nburn_in = 10.0\n")),
        ("convergence", format!("{model}[step]\ndt = 1e-3\n{seeds}[convergence]\nn_seeds = 50\n")),
    ];

    let run_all = |tag: &str| -> Vec<(String, String, Vec<u8>)> {
        let mut artifacts = Vec::new();
        for (cmd, body) in &jobs {
            let out: PathBuf = base.join(tag).join(cmd);
            let conf = format!("[run]\ncommand = {cmd}\nout_dir = {}\n{body}", out.display());
            let path = base.join(format!("{tag}-{cmd}.conf"));
            fs::write(&path, conf).unwrap();
            let status = Command::new(env!("CARGO_BIN_EXE_inertdrift"))
                .arg(cmd)
                .arg("--config")
                .arg(&path)
                .status()
                .unwrap();
            assert!(status.success(), "{cmd} failed in determinism pipeline");
            let mut files: Vec<_> = fs::read_dir(&out)
                .unwrap()
                .map(|e| e.unwrap())
                .filter(|e| e.file_name() != "manifest.txt")
                .map(|e| {
                    (
                        cmd.to_string(),
                        e.file_name().to_string_lossy().into_owned(),
                        fs::read(e.path()).unwrap(),
                    )
                })
                .collect();
            files.sort_by(|a, b| a.1.cmp(&b.1));
            artifacts.extend(files);
        }
        artifacts
    };

    let first = run_all("a");
    let second = run_all("b");
    assert_eq!(first.len(), second.len());
    let mut n_bytes = 0usize;
    for ((cmd_a, name_a, bytes_a), (cmd_b, name_b, bytes_b)) in first.iter().zip(&second) {
        assert_eq!((cmd_a, name_a), (cmd_b, name_b));
        assert_eq!(
            bytes_a, bytes_b,
            "artifact {cmd_a}/{name_a} differs between identical runs"
        );
        n_bytes += bytes_a.len();
    }
    let _ = fs::remove_dir_all(&base);
    println!(
        "ACCEPTANCE 12 PASS determinism: full pipeline ({} commands, {} artifacts, {n_bytes} bytes) byte-identical across reruns",
        jobs.len(),
        first.len()
    );
}
