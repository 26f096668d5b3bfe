//! Monte Carlo verification of the closed-form hitting-time probability
//! bounds. Each bound becomes a testable inequality: simulate the event many
//! times from the stated initial law and compare the Wilson interval of the
//! empirical probability against the analytic value.
//!
//! Bounds whose constants are fully explicit run in *level* mode (the
//! interval must not sit on the wrong side of the value). Bounds stated up
//! to a non-constructive prefactor run in *shape* mode: the empirical
//! log-probability is regressed against the variable the exponent is stated
//! in, and the fitted slope must be at least as steep as the claimed rate.
//! Asymptotic thresholds of the form "for all t large enough" are likewise
//! non-constructive, so shape fits use the window where the probabilities
//! are measurable.
//!
//! Hitting events on the gap use Brownian-bridge crossing corrections: the
//! gap diffuses, so endpoint-only detection misses crossings at rate
//! O(sqrt(dt)); velocity crossings are smooth and need no correction.

use crate::integrator::{bridge_touch_probability, StepConfig, Stepper};
use crate::model::{derive_renewal_config, ModelError, ModelParams, SystemState};
use crate::noise::NoiseSource;
use crate::renewal::RenewalDetector;
use crate::stats::{self, StatsError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("invalid arguments for {name}: {reason}")]
    InvalidArgs { name: &'static str, reason: String },
    #[error("need at least 10^4 trials, got {0}")]
    TooFewTrials(u64),
    #[error("shape fit needs >= 3 cases with nonzero counts, got {0}")]
    TooFewShapePoints(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mode {
    /// Compare the Wilson interval against the bound value directly.
    Level,
    /// Fit the log-probability slope in the transform variable; `rate` is
    /// the claimed decay rate (None when even the rate is non-constructive
    /// and only decay itself is checkable).
    Shape { rate: Option<f64> },
}

/// Stopping event simulated by one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Event {
    /// From (0, y): velocity reaches 2y before y/2.
    VelRace { y: f64 },
    /// From the renewal point: running max of V reaches y within one cycle.
    CycleMaxV { y: f64 },
    /// From the renewal point: gap reaches x within one cycle.
    CycleMaxH { x: f64 },
    /// From (h0, v0): gap reaches x before contact.
    GapRiseBeforeContact { x: f64, h0: f64, v0: f64 },
    /// From (x/2, v0): contact before the velocity drops to `a`.
    ContactBeforeVelDrop { x: f64, v0: f64, a: f64 },
    /// From (0, v0), v0 in (a, b): velocity hits a before b AND the first
    /// contact after that takes longer than `delay`.
    ContactDelayAfterVelDrop { delay: f64, v0: f64 },
    /// From (h0, v0), v0 > u: velocity stays above u until time t.
    VelStaysAbove { u: f64, h0: f64, v0: f64, t: f64 },
    /// From (h0, v0), v0 < u: velocity stays below u until time t.
    VelStaysBelow { u: f64, h0: f64, v0: f64, t: f64 },
    /// From (0, v0): velocity stays inside [lo, hi] until time t.
    VelConfined { lo: f64, hi: f64, v0: f64, t: f64 },
}

/// One argument setting of a bound spec.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCase {
    pub label: String,
    pub event: Event,
    /// Analytic bound value; None when no level claim is checkable.
    pub bound_value: Option<f64>,
    /// Abscissa for shape-mode regression.
    pub transform_value: f64,
    pub t_cap: f64,
    /// Noise-stream salt so cases never share trial randomness.
    pub salt: u64,
    /// Lower abscissa threshold transcribed from an asymptotic statement
    /// ("for all t large enough"): the level value is certified only beyond
    /// it. Shape fits may run below it, on the measurable window.
    pub asymptotic_threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSpec {
    pub name: &'static str,
    /// What the inequality says, in words.
    pub statement: &'static str,
    pub direction: Direction,
    pub mode: Mode,
    /// True when `bound_value` is a certified probability bound on the whole
    /// validity domain (explicit constants).
    pub certified_level: bool,
    pub cases: Vec<BoundCase>,
}

// ---------------------------------------------------------------------------
// Trial simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    Occurred,
    NotOccurred,
    Undecided,
}

#[inline]
fn crossed_up(prev: f64, next: f64, level: f64) -> bool {
    prev < level && next >= level
}

#[inline]
fn crossed_down(prev: f64, next: f64, level: f64) -> bool {
    prev > level && next <= level
}

/// Simulate one trial of `event`. `t_cap` bounds the search for hitting
/// events that have no intrinsic horizon.
pub fn run_trial(
    params: &ModelParams,
    cfg: &StepConfig,
    noise: &NoiseSource,
    event: &Event,
    t_cap: f64,
) -> TrialOutcome {
    let dt = cfg.dt;
    match *event {
        Event::VelRace { y } => {
            let mut st = Stepper::new(*params, SystemState::initial(0.0, y), dt, *noise);
            loop {
                let prev = st.state().v;
                st.step();
                let next = st.state().v;
                if crossed_up(prev, next, 2.0 * y) {
                    return TrialOutcome::Occurred;
                }
                if crossed_down(prev, next, y / 2.0) {
                    return TrialOutcome::NotOccurred;
                }
                if st.state().t > t_cap {
                    return TrialOutcome::Undecided;
                }
            }
        }
        Event::CycleMaxV { y } => cycle_trial(params, cfg, noise, t_cap, |prev, next, _, _| {
            crossed_up(prev.v, next.v, y)
        }),
        Event::CycleMaxH { x } => cycle_trial(params, cfg, noise, t_cap, |prev, next, aux, dt| {
            next.h >= x
                || (prev.h < x
                    && next.h < x
                    && aux < bridge_touch_probability(x - prev.h, x - next.h, dt))
        }),
        Event::GapRiseBeforeContact { x, h0, v0 } => {
            let mut st = Stepper::new(*params, SystemState::initial(h0, v0), dt, *noise);
            loop {
                let prev = *st.state();
                let dl = st.step();
                let next = *st.state();
                if next.h >= x {
                    return TrialOutcome::Occurred;
                }
                if dl > 0.0 {
                    return TrialOutcome::NotOccurred;
                }
                // both endpoints interior: bridge checks against both barriers
                let aux = st.last_aux_uniform();
                let p_up = bridge_touch_probability(x - prev.h, x - next.h, dt);
                let p_dn = bridge_touch_probability(prev.h, next.h, dt);
                if aux < p_up || aux < p_dn {
                    // ambiguous double-touch resolves toward the closer barrier
                    return if p_up >= p_dn {
                        TrialOutcome::Occurred
                    } else {
                        TrialOutcome::NotOccurred
                    };
                }
                if next.t > t_cap {
                    return TrialOutcome::Undecided;
                }
            }
        }
        Event::ContactBeforeVelDrop { x, v0, a } => {
            let mut st = Stepper::new(*params, SystemState::initial(x / 2.0, v0), dt, *noise);
            loop {
                let prev = *st.state();
                let dl = st.step();
                let next = *st.state();
                let vel_hit = crossed_down(prev.v, next.v, a);
                if dl > 0.0 || next.h == 0.0 {
                    // contact inside the step; a simultaneous velocity
                    // crossing is resolved by the unconstrained-chord order
                    if vel_hit {
                        let f_contact = if prev.h > 0.0 {
                            prev.h / (prev.h + dl.max(1e-300))
                        } else {
                            0.0
                        };
                        let f_vel = (prev.v - a) / (prev.v - next.v);
                        if f_vel < f_contact {
                            return TrialOutcome::NotOccurred;
                        }
                    }
                    return TrialOutcome::Occurred;
                }
                if vel_hit {
                    return TrialOutcome::NotOccurred;
                }
                let aux = st.last_aux_uniform();
                if prev.h > 0.0 && next.h > 0.0 && aux < bridge_touch_probability(prev.h, next.h, dt) {
                    return TrialOutcome::Occurred;
                }
                if next.t > t_cap {
                    return TrialOutcome::Undecided;
                }
            }
        }
        Event::ContactDelayAfterVelDrop { delay, v0 } => {
            let rc = derive_renewal_config(params).expect("caller validated params");
            let mut st = Stepper::new(*params, SystemState::initial(0.0, v0), dt, *noise);
            // phase 1: race between a (continue) and b (event impossible)
            let t_a = loop {
                let prev = st.state().v;
                let t_prev = st.state().t;
                st.step();
                let next = st.state().v;
                if crossed_down(prev, next, rc.a) {
                    let frac = (prev - rc.a) / (prev - next);
                    break t_prev + frac * dt;
                }
                if crossed_up(prev, next, rc.b) {
                    return TrialOutcome::NotOccurred;
                }
                if st.state().t > t_cap {
                    return TrialOutcome::Undecided;
                }
            };
            // phase 2: time to first contact after t_a
            loop {
                if st.state().t - t_a > delay {
                    return TrialOutcome::Occurred;
                }
                let prev_h = st.state().h;
                let dl = st.step();
                let next_h = st.state().h;
                if dl > 0.0
                    || next_h == 0.0
                    || (prev_h > 0.0
                        && next_h > 0.0
                        && st.last_aux_uniform() < bridge_touch_probability(prev_h, next_h, dt))
                {
                    return TrialOutcome::NotOccurred;
                }
            }
        }
        Event::VelStaysAbove { u, h0, v0, t } => {
            let mut st = Stepper::new(*params, SystemState::initial(h0, v0), dt, *noise);
            loop {
                let prev = st.state().v;
                st.step();
                if crossed_down(prev, st.state().v, u) {
                    return TrialOutcome::NotOccurred;
                }
                if st.state().t >= t {
                    return TrialOutcome::Occurred;
                }
            }
        }
        Event::VelStaysBelow { u, h0, v0, t } => {
            let mut st = Stepper::new(*params, SystemState::initial(h0, v0), dt, *noise);
            loop {
                let prev = st.state().v;
                st.step();
                if crossed_up(prev, st.state().v, u) {
                    return TrialOutcome::NotOccurred;
                }
                if st.state().t >= t {
                    return TrialOutcome::Occurred;
                }
            }
        }
        Event::VelConfined { lo, hi, v0, t } => {
            let mut st = Stepper::new(*params, SystemState::initial(0.0, v0), dt, *noise);
            loop {
                let prev = st.state().v;
                st.step();
                let next = st.state().v;
                if crossed_down(prev, next, lo) || crossed_up(prev, next, hi) {
                    return TrialOutcome::NotOccurred;
                }
                if st.state().t >= t {
                    return TrialOutcome::Occurred;
                }
            }
        }
    }
}

/// One renewal cycle from the renewal point; `hit` watches each step for the
/// event. Returns Occurred/NotOccurred at the cycle end, Undecided at cap.
fn cycle_trial<F: Fn(&SystemState, &SystemState, f64, f64) -> bool>(
    params: &ModelParams,
    cfg: &StepConfig,
    noise: &NoiseSource,
    t_cap: f64,
    hit: F,
) -> TrialOutcome {
    let rc = derive_renewal_config(params).expect("caller validated params");
    let init = SystemState::initial(0.0, rc.renewal_v);
    let mut st = Stepper::new(*params, init, cfg.dt, *noise);
    let mut detector = RenewalDetector::new(rc);
    let mut occurred = false;
    loop {
        let prev = *st.state();
        let dl = st.step();
        let next = *st.state();
        if !occurred && hit(&prev, &next, st.last_aux_uniform(), cfg.dt) {
            occurred = true;
        }
        if detector.observe(&prev, &next, dl).is_some() {
            return if occurred { TrialOutcome::Occurred } else { TrialOutcome::NotOccurred };
        }
        if next.t > t_cap {
            return TrialOutcome::Undecided;
        }
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub spec: &'static str,
    pub label: String,
    pub direction: Direction,
    pub n_trials: u64,
    pub occurred: u64,
    pub undecided: u64,
    pub p_hat: f64,
    /// 99% Wilson interval.
    pub wilson_ci: (f64, f64),
    pub bound_value: Option<f64>,
    pub transform_value: f64,
    pub verdict: Verdict,
    /// The interval contains the bound value.
    pub tight: bool,
    /// Undecided trials counted as non-events in a direction where that is
    /// anti-conservative.
    pub truncation_flagged: bool,
}

/// Monte Carlo run of one case: Wilson 99% interval and level verdict.
/// Undecided trials count as "did not occur" (conservative for upper
/// bounds; flagged for lower bounds).
pub fn run_bound(
    params: &ModelParams,
    spec: &BoundSpec,
    case: &BoundCase,
    n_trials: u64,
    cfg: &StepConfig,
    noise: &NoiseSource,
    threads: usize,
) -> Result<BoundReport, BoundsError> {
    if n_trials < 10_000 {
        return Err(BoundsError::TooFewTrials(n_trials));
    }
    let case_noise = noise.substream(case.salt);
    let lanes = crate::lanes::unit_counts(n_trials, threads.max(1) as u64 * 4);
    let mut offsets = Vec::with_capacity(lanes.len());
    let mut acc = 0u64;
    for &c in &lanes {
        offsets.push(acc);
        acc += c;
    }
    let counts = crate::lanes::run_indexed(lanes.len(), threads, |i| {
        let mut occurred = 0u64;
        let mut undecided = 0u64;
        for trial in offsets[i]..offsets[i] + lanes[i] {
            match run_trial(params, cfg, &case_noise.substream(trial), &case.event, case.t_cap) {
                TrialOutcome::Occurred => occurred += 1,
                TrialOutcome::NotOccurred => {}
                TrialOutcome::Undecided => undecided += 1,
            }
        }
        (occurred, undecided)
    });
    let occurred: u64 = counts.iter().map(|c| c.0).sum();
    let undecided: u64 = counts.iter().map(|c| c.1).sum();

    let p_hat = occurred as f64 / n_trials as f64;
    let wilson_ci = stats::wilson_interval(occurred, n_trials, stats::Z_99);
    let (verdict, tight) = match case.bound_value {
        None => (Verdict::Inconclusive, false),
        Some(bound) => {
            let tight = wilson_ci.0 <= bound && bound <= wilson_ci.1;
            let verdict = match spec.direction {
                Direction::Upper => {
                    if wilson_ci.0 > bound {
                        Verdict::Fail
                    } else {
                        Verdict::Pass
                    }
                }
                Direction::Lower => {
                    if wilson_ci.1 < bound {
                        // undecided-as-non-event can only deflate p_hat here
                        if undecided > 0 {
                            Verdict::Inconclusive
                        } else {
                            Verdict::Fail
                        }
                    } else {
                        Verdict::Pass
                    }
                }
            };
            (verdict, tight)
        }
    };
    let verdict = if undecided * 10 > n_trials { Verdict::Inconclusive } else { verdict };
    Ok(BoundReport {
        spec: spec.name,
        label: case.label.clone(),
        direction: spec.direction,
        n_trials,
        occurred,
        undecided,
        p_hat,
        wilson_ci,
        bound_value: case.bound_value,
        transform_value: case.transform_value,
        verdict,
        tight,
        truncation_flagged: undecided > 0 && spec.direction == Direction::Lower,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeReport {
    pub spec: &'static str,
    pub direction: Direction,
    pub claimed_rate: Option<f64>,
    /// Fitted slope of log p against the transform variable.
    pub slope: f64,
    /// 99% interval for the slope.
    pub slope_ci: (f64, f64),
    pub used_points: usize,
    pub verdict: Verdict,
}

/// Shape-mode comparison across a spec's cases: weighted fit of log p-hat
/// against the transform variable; the claimed decay rate must not be
/// statistically violated.
pub fn shape_check(spec: &BoundSpec, reports: &[BoundReport]) -> Result<ShapeReport, BoundsError> {
    let rate = match spec.mode {
        Mode::Shape { rate } => rate,
        Mode::Level => {
            return Err(BoundsError::InvalidArgs {
                name: spec.name,
                reason: "shape_check on a level-mode spec".into(),
            })
        }
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for r in reports {
        if r.occurred > 0 {
            let p = r.p_hat;
            xs.push(r.transform_value);
            ys.push(p.ln());
            ws.push(r.n_trials as f64 * p / (1.0 - p).max(1e-12));
        }
    }
    if xs.len() < 3 {
        return Err(BoundsError::TooFewShapePoints(xs.len()));
    }
    let fit = stats::wls_fit(&xs, &ys, &ws)?;
    let ci = (fit.slope - stats::Z_99 * fit.slope_se, fit.slope + stats::Z_99 * fit.slope_se);
    let verdict = match (spec.direction, rate) {
        // upper bound ~ e^{-k u}: decay must be at least as steep as -k
        (Direction::Upper, Some(k)) => {
            if ci.0 > -k {
                Verdict::Fail
            } else {
                Verdict::Pass
            }
        }
        // lower bound ~ e^{-k u}: decay must not be steeper than -k
        (Direction::Lower, Some(k)) => {
            if ci.1 < -k {
                Verdict::Fail
            } else {
                Verdict::Pass
            }
        }
        // only exponential decay itself is claimed
        (_, None) => {
            if ci.1 < 0.0 {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
    };
    Ok(ShapeReport {
        spec: spec.name,
        direction: spec.direction,
        claimed_rate: rate,
        slope: fit.slope,
        slope_ci: ci,
        used_points: xs.len(),
        verdict,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecResult {
    pub spec: BoundSpec,
    pub reports: Vec<BoundReport>,
    pub shape: Option<ShapeReport>,
    pub verdict: Verdict,
}

/// Run every case of a spec and combine: level specs need every case to
/// pass; shape specs are judged by the slope comparison.
pub fn run_spec(
    params: &ModelParams,
    spec: &BoundSpec,
    n_trials: u64,
    cfg: &StepConfig,
    noise: &NoiseSource,
    threads: usize,
) -> Result<SpecResult, BoundsError> {
    let mut reports = Vec::with_capacity(spec.cases.len());
    for case in &spec.cases {
        reports.push(run_bound(params, spec, case, n_trials, cfg, noise, threads)?);
    }
    let (shape, verdict) = match spec.mode {
        Mode::Level => {
            let verdict = if reports.iter().any(|r| r.verdict == Verdict::Fail) {
                Verdict::Fail
            } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
                Verdict::Inconclusive
            } else {
                Verdict::Pass
            };
            (None, verdict)
        }
        Mode::Shape { .. } => {
            let shape = shape_check(spec, &reports)?;
            let verdict = shape.verdict;
            (Some(shape), verdict)
        }
    };
    Ok(SpecResult { spec: spec.clone(), reports, shape, verdict })
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

fn invalid(name: &'static str, reason: String) -> BoundsError {
    BoundsError::InvalidArgs { name, reason }
}

/// From (0, y): P(velocity doubles before halving) with its explicit
/// proof-form constant exp(-2y(g + (1+gamma) y / 2)).
pub fn vel_race_case(params: &ModelParams, y: f64) -> Result<BoundCase, BoundsError> {
    if y <= 0.0 {
        return Err(invalid("vel_race", format!("y = {y} must be > 0")));
    }
    let g = params.g();
    let gamma = params.gamma();
    let shift = y + g / (1.0 + gamma);
    Ok(BoundCase {
        label: format!("y = {y}"),
        event: Event::VelRace { y },
        bound_value: Some((-2.0 * y * (g + (1.0 + gamma) * y / 2.0)).exp()),
        transform_value: shift * shift,
        t_cap: 200.0,
        salt: 0,
        asymptotic_threshold: None,
    })
}

pub fn cycle_max_v_case(params: &ModelParams, y: f64) -> Result<BoundCase, BoundsError> {
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported.into());
    }
    let shift = y + params.g() / (1.0 + params.gamma());
    Ok(BoundCase {
        label: format!("y = {y}"),
        event: Event::CycleMaxV { y },
        bound_value: None,
        transform_value: shift * shift,
        t_cap: 2000.0,
        salt: 0,
        asymptotic_threshold: None,
    })
}

pub fn cycle_max_h_case(params: &ModelParams, x: f64) -> Result<BoundCase, BoundsError> {
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported.into());
    }
    if x <= 0.0 {
        return Err(invalid("cycle_max_h", format!("x = {x} must be > 0")));
    }
    Ok(BoundCase {
        label: format!("x = {x}"),
        event: Event::CycleMaxH { x },
        bound_value: None,
        transform_value: x,
        t_cap: 2000.0,
        salt: 0,
        asymptotic_threshold: None,
    })
}

/// Upper side: from (x/2, v0) with v0 <= gamma x/4 - g/gamma, the gap doubles
/// before contact with probability at most exp(-x g / 2 gamma).
pub fn gap_rise_upper_case(params: &ModelParams, x: f64, v0: f64) -> Result<BoundCase, BoundsError> {
    let g = params.g();
    let gamma = params.gamma();
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported.into());
    }
    if x <= 0.0 {
        return Err(invalid("gap_rise_upper", format!("x = {x} must be > 0")));
    }
    if v0 <= -g / gamma || v0 > gamma * x / 4.0 - g / gamma {
        return Err(invalid(
            "gap_rise_upper",
            format!("v0 = {v0} outside (-g/gamma, gamma x/4 - g/gamma]"),
        ));
    }
    Ok(BoundCase {
        label: format!("x = {x}, v0 = {v0}"),
        event: Event::GapRiseBeforeContact { x, h0: x / 2.0, v0 },
        bound_value: Some((-x * g / (2.0 * gamma)).exp()),
        transform_value: x,
        t_cap: 500.0,
        salt: 0,
        asymptotic_threshold: None,
    })
}

/// Lower side: from (h0, v0) with h0 >= (gamma/2g) log 2, the gap reaches x
/// before contact with probability at least exp(-2 x g / gamma).
pub fn gap_rise_lower_case(
    params: &ModelParams,
    x: f64,
    h0: f64,
    v0: f64,
) -> Result<BoundCase, BoundsError> {
    let g = params.g();
    let gamma = params.gamma();
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported.into());
    }
    let h_min = gamma / (2.0 * g) * std::f64::consts::LN_2;
    if h0 < h_min {
        return Err(invalid(
            "gap_rise_lower",
            format!("h0 = {h0} below (gamma/2g) log 2 = {h_min}"),
        ));
    }
    if x <= h0 {
        return Err(invalid("gap_rise_lower", format!("x = {x} must exceed h0 = {h0}")));
    }
    if v0 <= -g / gamma {
        return Err(invalid("gap_rise_lower", format!("v0 = {v0} at or below the floor")));
    }
    Ok(BoundCase {
        label: format!("x = {x}, h0 = {h0:.4}, v0 = {v0}"),
        event: Event::GapRiseBeforeContact { x, h0, v0 },
        bound_value: Some((-2.0 * x * g / gamma).exp()),
        transform_value: x,
        t_cap: 500.0,
        salt: 0,
        asymptotic_threshold: None,
    })
}

/// From (x/2, v0): contact before the velocity falls to `a`, bounded by
/// (2 sqrt(2 gamma) / sqrt(pi g x)) exp(-x g / 8 gamma).
pub fn contact_before_vel_drop_case(
    params: &ModelParams,
    x: f64,
    a: f64,
    v0_frac: f64,
) -> Result<BoundCase, BoundsError> {
    let g = params.g();
    let gamma = params.gamma();
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported.into());
    }
    if x <= 0.0 || a <= -g / gamma {
        return Err(invalid("contact_before_vel_drop", format!("x = {x}, a = {a}")));
    }
    let v_limit = (a + g / gamma) * (gamma * gamma * x / (4.0 * g)).exp() - g / gamma;
    if !(0.0..=1.0).contains(&v0_frac) {
        return Err(invalid("contact_before_vel_drop", format!("v0_frac = {v0_frac}")));
    }
    let v0 = a + v0_frac * (v_limit - a);
    if v0 < a || v0 > v_limit {
        return Err(invalid(
            "contact_before_vel_drop",
            format!("empty validity interval at x = {x}: [{a}, {v_limit}]"),
        ));
    }
    let prefactor = 2.0 * (2.0 * gamma).sqrt() / (std::f64::consts::PI * g * x).sqrt();
    Ok(BoundCase {
        label: format!("x = {x}, v0 = {v0:.4}"),
        event: Event::ContactBeforeVelDrop { x, v0, a },
        bound_value: Some(prefactor * (-x * g / (8.0 * gamma)).exp()),
        transform_value: x,
        t_cap: 500.0,
        salt: 0,
        asymptotic_threshold: None,
    })
}

/// From (0, v0) with v0 between the renewal levels: the velocity reaches `a`
/// before `b` and the gap then stays positive longer than `delay`.
pub fn contact_delay_case(params: &ModelParams, delay: f64, v0: f64) -> Result<BoundCase, BoundsError> {
    let rc = derive_renewal_config(params)?;
    if delay <= 0.0 {
        return Err(invalid("contact_delay", format!("delay = {delay} must be > 0")));
    }
    if v0 <= rc.a || v0 >= rc.b {
        return Err(invalid(
            "contact_delay",
            format!("v0 = {v0} outside ({}, {})", rc.a, rc.b),
        ));
    }
    Ok(BoundCase {
        label: format!("t = {delay}, v0 = {v0}"),
        event: Event::ContactDelayAfterVelDrop { delay, v0 },
        bound_value: None,
        transform_value: delay,
        t_cap: 500.0,
        salt: 0,
        asymptotic_threshold: None,
    })
}

/// From (0, v0), v0 in (u, 0], u in (-g/(1+gamma), 0): the velocity stays
/// above u for t, bounded by the explicit Gaussian form.
pub fn vel_drop_above_case(
    params: &ModelParams,
    u: f64,
    v0: f64,
    t: f64,
) -> Result<BoundCase, BoundsError> {
    let g = params.g();
    let gamma = params.gamma();
    if u <= -g / (1.0 + gamma) || u >= 0.0 {
        return Err(invalid("vel_drop_above", format!("u = {u} outside (-g/(1+gamma), 0)")));
    }
    if v0 <= u || v0 > 0.0 {
        return Err(invalid("vel_drop_above", format!("v0 = {v0} outside (u, 0]")));
    }
    let arg = t * ((1.0 + gamma) * u + g) + u - v0;
    if arg < 0.0 {
        return Err(invalid(
            "vel_drop_above",
            format!("t = {t} too small: bound argument {arg} negative (bound vacuous)"),
        ));
    }
    Ok(BoundCase {
        label: format!("u = {u}, v0 = {v0}, t = {t}"),
        event: Event::VelStaysAbove { u, h0: 0.0, v0, t },
        bound_value: Some((-arg * arg / (2.0 * t)).exp()),
        transform_value: t,
        t_cap: t,
        salt: 0,
        asymptotic_threshold: None,
    })
}

/// From (h0, v0) below u = -(g + eps0)/(1+gamma): the velocity stays below u
/// for t. The statement constant is non-constructive; the stored value is
/// the proof-form exp(eps0 (h0 + g/gamma + u)) exp(-eps0^2 t / 2).
pub fn vel_rise_below_case(
    params: &ModelParams,
    eps0: f64,
    h0: f64,
    v0: f64,
    t: f64,
) -> Result<BoundCase, BoundsError> {
    let g = params.g();
    let gamma = params.gamma();
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported.into());
    }
    if eps0 <= 0.0 || eps0 >= g / gamma {
        return Err(invalid("vel_rise_below", format!("eps0 = {eps0} outside (0, g/gamma)")));
    }
    let u = -(g + eps0) / (1.0 + gamma);
    if v0 <= -g / gamma || v0 >= u {
        return Err(invalid("vel_rise_below", format!("v0 = {v0} outside (-g/gamma, {u})")));
    }
    if h0 < 0.0 || t <= 0.0 {
        return Err(invalid("vel_rise_below", format!("h0 = {h0}, t = {t}")));
    }
    let theta = h0 + g / gamma + u;
    // threshold transcribed from the statement:
    // t0 = 2h/eps0 + 2g/(eps0 gamma (1+gamma)) + 4/eps0^2
    let t0 = 2.0 * h0 / eps0
        + 2.0 * g / (eps0 * gamma * (1.0 + gamma))
        + 4.0 / (eps0 * eps0);
    Ok(BoundCase {
        label: format!("eps0 = {eps0}, h0 = {h0}, v0 = {v0}, t = {t}"),
        event: Event::VelStaysBelow { u, h0, v0, t },
        bound_value: Some((eps0 * theta).exp() * (-eps0 * eps0 * t / 2.0).exp()),
        transform_value: t,
        t_cap: t,
        salt: 0,
        asymptotic_threshold: Some(t0),
    })
}

/// From (h0, v0), v0 > u > 0: the velocity stays above u for t, bounded by
/// 1 AND exp(-2u(u - v0 + t(gamma u + g))).
pub fn vel_drop_positive_case(
    params: &ModelParams,
    u: f64,
    h0: f64,
    v0: f64,
    t: f64,
) -> Result<BoundCase, BoundsError> {
    let g = params.g();
    let gamma = params.gamma();
    if u <= 0.0 || v0 <= u {
        return Err(invalid("vel_drop_positive", format!("need v0 > u > 0, got u={u}, v0={v0}")));
    }
    if h0 < 0.0 || t < 0.0 {
        return Err(invalid("vel_drop_positive", format!("h0 = {h0}, t = {t}")));
    }
    let bound = (-2.0 * u * (u - v0 + t * (gamma * u + g))).exp().min(1.0);
    Ok(BoundCase {
        label: format!("u = {u}, v0 = {v0}, t = {t}"),
        event: Event::VelStaysAbove { u, h0, v0, t },
        bound_value: Some(bound),
        transform_value: t,
        t_cap: t,
        salt: 0,
        asymptotic_threshold: None,
    })
}

/// From (0, v0), v0 in [lo, hi]: the velocity stays inside [lo, hi] for
/// m(ell+1), bounded by Phi(hi - lo + (1+gamma) hi + g)^m.
pub fn vel_confined_case(
    params: &ModelParams,
    lo: f64,
    hi: f64,
    v0: f64,
    ell: f64,
    m: u64,
) -> Result<BoundCase, BoundsError> {
    let g = params.g();
    let gamma = params.gamma();
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported.into());
    }
    if lo <= -g / gamma || hi <= lo {
        return Err(invalid("vel_confined", format!("levels lo={lo}, hi={hi}")));
    }
    let drift = gamma * lo + g;
    if drift <= 0.0 {
        return Err(invalid("vel_confined", format!("gamma lo + g = {drift} not positive")));
    }
    if ell <= (hi - lo) / drift {
        return Err(invalid(
            "vel_confined",
            format!("ell = {ell} must exceed (hi-lo)/(gamma lo + g) = {}", (hi - lo) / drift),
        ));
    }
    if v0 < lo || v0 > hi || m == 0 {
        return Err(invalid("vel_confined", format!("v0 = {v0}, m = {m}")));
    }
    let t = m as f64 * (ell + 1.0);
    let phi = stats::normal_cdf(hi - lo + (1.0 + gamma) * hi + g);
    Ok(BoundCase {
        label: format!("m = {m}, ell = {ell}, v0 = {v0}"),
        event: Event::VelConfined { lo, hi, v0, t },
        bound_value: Some(phi.powi(m as i32)),
        transform_value: t,
        t_cap: t,
        salt: 0,
        asymptotic_threshold: None,
    })
}

/// The full suite: every closed-form hitting-time bound as a spec with three
/// default argument settings, tuned to be measurable near gamma = g = 1.
pub fn registry(params: &ModelParams) -> Result<Vec<BoundSpec>, BoundsError> {
    let rc = derive_renewal_config(params)?;
    let g = params.g();
    let gamma = params.gamma();
    let rv_scale = g / (1.0 + gamma);
    let mut specs = Vec::new();

    let with_salts = |mut cases: Vec<BoundCase>, spec_idx: u64| {
        for (i, c) in cases.iter_mut().enumerate() {
            c.salt = (spec_idx << 16) | i as u64;
        }
        cases
    };

    specs.push(BoundSpec {
        name: "vel_hits_large_before_small",
        statement: "P_(0,y)(velocity doubles before halving) <= e^c exp(-(1+gamma)(y + g/(1+gamma))^2)",
        direction: Direction::Upper,
        mode: Mode::Shape { rate: Some(1.0 + gamma) },
        certified_level: true,
        cases: with_salts(
            [1.0, 1.25, 1.5]
                .iter()
                .map(|&k| vel_race_case(params, k * rv_scale))
                .collect::<Result<_, _>>()?,
            1,
        ),
    });

    let vy: Vec<BoundCase> = [1.0, 1.5, 2.0]
        .iter()
        .map(|&k| cycle_max_v_case(params, k * rv_scale))
        .collect::<Result<_, _>>()?;
    specs.push(BoundSpec {
        name: "cycle_sup_velocity_upper",
        statement: "P(sup V over a cycle >= y) <= e^c exp(-(1+gamma)/4 (y + g/(1+gamma))^2)",
        direction: Direction::Upper,
        mode: Mode::Shape { rate: Some((1.0 + gamma) / 4.0) },
        certified_level: false,
        cases: with_salts(vy.clone(), 2),
    });
    specs.push(BoundSpec {
        name: "cycle_sup_velocity_lower",
        statement: "P(sup V over a cycle >= y) >= e^-C exp(-2(1+gamma)(y + g/(1+gamma))^2)",
        direction: Direction::Lower,
        mode: Mode::Shape { rate: Some(2.0 * (1.0 + gamma)) },
        certified_level: false,
        cases: with_salts(vy, 3),
    });

    specs.push(BoundSpec {
        name: "gap_increases_before_zero_upper",
        statement: "P_(x/2,v)(gap hits x before 0) <= exp(-x g / 2 gamma)",
        direction: Direction::Upper,
        mode: Mode::Level,
        certified_level: true,
        cases: with_salts(
            [3.0, 4.0, 6.0]
                .iter()
                .map(|&k| gap_rise_upper_case(params, k * gamma / g, -rv_scale))
                .collect::<Result<_, _>>()?,
            4,
        ),
    });

    let h_min = gamma / (2.0 * g) * std::f64::consts::LN_2;
    specs.push(BoundSpec {
        name: "gap_increases_before_zero_lower",
        statement: "P_(h,v)(gap hits x before 0) >= exp(-2 x g / gamma) for h >= (gamma/2g) log 2",
        direction: Direction::Lower,
        mode: Mode::Level,
        certified_level: true,
        cases: with_salts(
            [1.0, 2.0, 4.0]
                .iter()
                .map(|&k| gap_rise_lower_case(params, k * gamma / g, h_min, -rv_scale))
                .collect::<Result<_, _>>()?,
            5,
        ),
    });

    specs.push(BoundSpec {
        name: "gap_hits_zero_before_vel_drop",
        statement: "P_(x/2,v)(contact before velocity hits a) <= C x^-1/2 exp(-x g / 8 gamma)",
        direction: Direction::Upper,
        mode: Mode::Shape { rate: Some(g / (8.0 * gamma)) },
        certified_level: false,
        cases: with_salts(
            [2.0, 4.0, 6.0]
                .iter()
                .map(|&k| contact_before_vel_drop_case(params, k * gamma / g, rc.a, 0.5))
                .collect::<Result<_, _>>()?,
            6,
        ),
    });

    let hx: Vec<BoundCase> = [2.0, 3.0, 4.0]
        .iter()
        .map(|&k| cycle_max_h_case(params, k * gamma / g))
        .collect::<Result<_, _>>()?;
    specs.push(BoundSpec {
        name: "cycle_sup_gap_upper",
        statement: "P(gap hits x within a cycle) <= e^C exp(-x g / 16 gamma)",
        direction: Direction::Upper,
        mode: Mode::Shape { rate: Some(g / (16.0 * gamma)) },
        certified_level: false,
        cases: with_salts(hx.clone(), 7),
    });
    specs.push(BoundSpec {
        name: "cycle_sup_gap_lower",
        statement: "P(gap hits x within a cycle) >= e^-C' exp(-2 x g / gamma)",
        direction: Direction::Lower,
        mode: Mode::Shape { rate: Some(2.0 * g / gamma) },
        certified_level: false,
        cases: with_salts(hx, 8),
    });

    let ell = 1.6 * (rc.b - rc.a) / (gamma * rc.a + g).max(1e-12);
    specs.push(BoundSpec {
        name: "vel_escape_interval",
        statement: "P(velocity confined to [a,b] for m(ell+1)) <= Phi(b - a + (1+gamma) b + g)^m",
        direction: Direction::Upper,
        mode: Mode::Level,
        certified_level: true,
        cases: with_salts(
            (1..=3)
                .map(|m| vel_confined_case(params, rc.a, rc.b, rc.renewal_v, ell, m))
                .collect::<Result<_, _>>()?,
            9,
        ),
    });

    specs.push(BoundSpec {
        name: "contact_delay_after_vel_drop",
        statement: "P(sigma(tau_a) - tau_a > t, tau_a < tau_b) <= e^-c t",
        direction: Direction::Upper,
        mode: Mode::Shape { rate: None },
        certified_level: false,
        cases: with_salts(
            [0.5, 1.0, 1.5]
                .iter()
                .map(|&t| contact_delay_case(params, t, rc.renewal_v))
                .collect::<Result<_, _>>()?,
            10,
        ),
    });

    let u4 = -0.5 * rv_scale;
    specs.push(BoundSpec {
        name: "vel_drop_from_above",
        statement: "P_(0,v)(tau_u > t) <= exp(-(t((1+gamma)u + g) + u - v)^2 / 2t)",
        direction: Direction::Upper,
        mode: Mode::Level,
        certified_level: true,
        cases: with_salts(
            [1.0, 2.0, 4.0]
                .iter()
                .map(|&t| vel_drop_above_case(params, u4, 0.0, t))
                .collect::<Result<_, _>>()?,
            11,
        ),
    });

    let eps0 = 0.8 * g / gamma;
    let u5 = -(g + eps0) / (1.0 + gamma);
    let v5 = 0.5 * (params.velocity_floor() + u5);
    specs.push(BoundSpec {
        name: "vel_rise_from_below",
        statement: "P_(h,v)(tau_u > t) <= e^c e^{eps0 h} exp(-eps0^2 t / 2), v < u < -g/(1+gamma)",
        direction: Direction::Upper,
        mode: Mode::Shape { rate: Some(eps0 * eps0 / 2.0) },
        certified_level: false,
        cases: with_salts(
            [0.15, 0.3, 0.45]
                .iter()
                .map(|&t| vel_rise_below_case(params, eps0, 0.0, v5, t))
                .collect::<Result<_, _>>()?,
            12,
        ),
    });

    let u6 = rv_scale;
    specs.push(BoundSpec {
        name: "vel_drop_to_positive_level",
        statement: "P_(h,v)(tau_u > t) <= 1 AND exp(-2u(u - v + t(gamma u + g))), v > u > 0",
        direction: Direction::Upper,
        mode: Mode::Level,
        certified_level: true,
        cases: with_salts(
            [1.0, 2.0, 3.0]
                .iter()
                .map(|&t| vel_drop_positive_case(params, u6, 0.0, 2.0 * u6, t))
                .collect::<Result<_, _>>()?,
            13,
        ),
    });

    Ok(specs)
}
