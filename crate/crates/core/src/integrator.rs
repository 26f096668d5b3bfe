//! Euler-Maruyama integration of the reflected system with a per-step
//! Skorohod projection.
//!
//! Each step computes the unconstrained gap `h* = h + v dt - dB`, takes the
//! local-time increment `dL = max(0, -h*)`, and feeds `dL` into the same
//! step's velocity update:
//!
//! ```text
//! h' = h* + dL        (so dL > 0 implies h' = 0)
//! v' = v - (gamma v + g) dt + dL
//! ```
//!
//! The remaining coordinates follow: `s' = s + v dt`, `b' = b + dB`,
//! `l' = l + dL`, `x' = s' - h'`.

use crate::model::{ModelError, ModelParams, SystemState};
use crate::noise::NoiseSource;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("invalid step config: {0}")]
    InvalidStepConfig(String),
    #[error("horizon must be > 0, got {0}")]
    InvalidHorizon(f64),
    #[error("non-finite noise increment at step {0}")]
    NonFiniteIncrement(u64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Time discretization and recording policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepConfig {
    pub dt: f64,
    pub max_steps: u64,
    /// Store every k-th state in recorded trajectories.
    pub record_stride: u64,
}

impl StepConfig {
    pub fn new(dt: f64, max_steps: u64, record_stride: u64) -> Result<Self, IntegratorError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(IntegratorError::InvalidStepConfig(format!("dt = {dt}")));
        }
        if record_stride == 0 {
            return Err(IntegratorError::InvalidStepConfig("record_stride = 0".into()));
        }
        if max_steps == 0 {
            return Err(IntegratorError::InvalidStepConfig("max_steps = 0".into()));
        }
        Ok(Self { dt, max_steps, record_stride })
    }
}

/// Per-step Brownian increments. The zero implementation is the noise-free
/// test hook; the counter-based one is production.
pub trait IncrementSource {
    fn db(&self, step: u64, dt: f64) -> f64;
    /// Independent uniform attached to `step`, for crossing-correction draws.
    fn aux_uniform(&self, step: u64) -> f64;
}

impl IncrementSource for NoiseSource {
    #[inline]
    fn db(&self, step: u64, dt: f64) -> f64 {
        self.step_normal(step) * dt.sqrt()
    }

    #[inline]
    fn aux_uniform(&self, step: u64) -> f64 {
        self.step_aux_uniform(step)
    }
}

/// dB = 0 at every step.
#[derive(Debug, Clone, Copy)]
pub struct ZeroNoise;

impl IncrementSource for ZeroNoise {
    #[inline]
    fn db(&self, _step: u64, _dt: f64) -> f64 {
        0.0
    }

    #[inline]
    fn aux_uniform(&self, _step: u64) -> f64 {
        1.0
    }
}

/// One reflected Euler step from `state` with supplied increment `db`.
///
/// Returns the new state and the local-time increment. NaN inputs are
/// rejected; the step itself cannot fail.
pub fn reflect_step(
    state: &SystemState,
    params: &ModelParams,
    db: f64,
    dt: f64,
) -> Result<(SystemState, f64), IntegratorError> {
    if !db.is_finite() {
        return Err(IntegratorError::NonFiniteIncrement(0));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(IntegratorError::InvalidStepConfig(format!("dt = {dt}")));
    }
    state.validate(params)?;
    let (h, v, dl) = raw_step(state.h, state.v, params.gamma(), params.g(), db, dt);
    let s = state.s + state.v * dt;
    let next = SystemState {
        t: state.t + dt,
        h,
        v,
        s,
        x: s - h,
        b: state.b + db,
        l: state.l + dl,
    };
    Ok((next, dl))
}

#[inline(always)]
fn raw_step(h: f64, v: f64, gamma: f64, g: f64, db: f64, dt: f64) -> (f64, f64, f64) {
    let hstar = h + (v * dt - db);
    let (h_new, dl) = if hstar < 0.0 { (0.0, -hstar) } else { (hstar, 0.0) };
    let v_new = v - (gamma * v + g) * dt + dl;
    (h_new, v_new, dl)
}

/// Incremental driver holding one trajectory's full augmented state.
///
/// `step()` advances one dt and returns the local-time increment; the caller
/// keeps copies of states it cares about.
pub struct Stepper<N: IncrementSource> {
    params: ModelParams,
    dt: f64,
    noise: N,
    state: SystemState,
    /// Noise counter of the next step; also counts steps when started at 0.
    counter: u64,
    counter0: u64,
    t0: f64,
}

impl<N: IncrementSource> Stepper<N> {
    pub fn new(params: ModelParams, init: SystemState, dt: f64, noise: N) -> Self {
        Self::with_counter(params, init, dt, noise, 0)
    }

    /// Resume the same noise stream at counter position `counter` with a
    /// fresh state (used when a path is restarted mid-stream).
    pub fn with_counter(
        params: ModelParams,
        init: SystemState,
        dt: f64,
        noise: N,
        counter: u64,
    ) -> Self {
        Self { params, dt, noise, state: init, counter, counter0: counter, t0: init.t }
    }

    #[inline]
    pub fn state(&self) -> &SystemState {
        &self.state
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Steps taken since this stepper was constructed.
    #[inline]
    pub fn steps_taken(&self) -> u64 {
        self.counter - self.counter0
    }

    /// Noise counter of the next step.
    #[inline]
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Advance one step; returns the local-time increment dL.
    #[inline]
    pub fn step(&mut self) -> f64 {
        let db = self.noise.db(self.counter, self.dt);
        let (h, v, dl) =
            raw_step(self.state.h, self.state.v, self.params.gamma(), self.params.g(), db, self.dt);
        let s = self.state.s + self.state.v * self.dt;
        self.counter += 1;
        self.state = SystemState {
            t: self.t0 + (self.counter - self.counter0) as f64 * self.dt,
            h,
            v,
            s,
            x: s - h,
            b: self.state.b + db,
            l: self.state.l + dl,
        };
        dl
    }

    /// Bridge uniform attached to the step just taken.
    #[inline]
    pub fn last_aux_uniform(&self) -> f64 {
        debug_assert!(self.counter > self.counter0);
        self.noise.aux_uniform(self.counter - 1)
    }
}

/// Probability that the gap's Brownian bridge between step endpoints (both
/// on the same side of a barrier at distances `d0`, `d1`) touched the
/// barrier inside the step. Endpoint-only detection misses crossings at
/// rate O(sqrt(dt)); drawing against this probability removes that bias.
/// Velocity crossings are smooth off the boundary and need no correction.
#[inline]
pub fn bridge_touch_probability(d0: f64, d1: f64, dt: f64) -> f64 {
    (-2.0 * d0 * d1 / dt).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    PredicateHit,
    Timeout,
    StepCapExceeded,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StopInfo {
    pub reason: StopReason,
    /// Linearly interpolated crossing-time estimate, when a predicate fired.
    pub crossing_time: Option<f64>,
    pub steps_taken: u64,
}

/// Recorded trajectory at stride times. States are strictly increasing in t;
/// the initial and final states are always present.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub states: Vec<SystemState>,
    pub stop: Option<StopInfo>,
}

impl Trajectory {
    pub fn terminal(&self) -> &SystemState {
        self.states.last().expect("trajectory always holds at least the initial state")
    }

    /// Columnar CSV export with fixed header, 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,h,v,s,x,b,l")?;
        for st in &self.states {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                st.t, st.h, st.v, st.s, st.x, st.b, st.l
            )?;
        }
        Ok(())
    }
}

/// Fixed-horizon simulation. Runs `ceil(horizon/dt)` steps subject to
/// `cfg.max_steps`; a cap hit is reported through `stop`.
pub fn simulate<N: IncrementSource + Copy>(
    params: &ModelParams,
    init: SystemState,
    cfg: &StepConfig,
    noise: &N,
    horizon: f64,
) -> Result<Trajectory, IntegratorError> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(IntegratorError::InvalidHorizon(horizon));
    }
    init.validate(params)?;
    let want = (horizon / cfg.dt).ceil() as u64;
    let (n_steps, capped) =
        if want > cfg.max_steps { (cfg.max_steps, true) } else { (want, false) };

    let mut stepper = Stepper::new(*params, init, cfg.dt, *noise);
    let mut states = Vec::with_capacity((n_steps / cfg.record_stride + 2) as usize);
    states.push(init);
    for i in 1..=n_steps {
        stepper.step();
        if i % cfg.record_stride == 0 || i == n_steps {
            states.push(*stepper.state());
        }
    }
    let stop = capped.then_some(StopInfo {
        reason: StopReason::StepCapExceeded,
        crossing_time: None,
        steps_taken: n_steps,
    });
    Ok(Trajectory { params: *params, states, stop })
}

/// Run until `level(state) <= 0` (predicate hit), `t_max` (timeout), or the
/// step cap. The crossing time is interpolated linearly between the
/// bracketing states' level values.
pub fn simulate_until<N: IncrementSource + Copy, F: Fn(&SystemState) -> f64>(
    params: &ModelParams,
    init: SystemState,
    cfg: &StepConfig,
    noise: &N,
    level: F,
    t_max: f64,
) -> Result<Trajectory, IntegratorError> {
    if !t_max.is_finite() || t_max <= init.t {
        return Err(IntegratorError::InvalidHorizon(t_max));
    }
    init.validate(params)?;
    let mut states = vec![init];
    if level(&init) <= 0.0 {
        return Ok(Trajectory {
            params: *params,
            states,
            stop: Some(StopInfo {
                reason: StopReason::PredicateHit,
                crossing_time: Some(init.t),
                steps_taken: 0,
            }),
        });
    }
    let mut stepper = Stepper::new(*params, init, cfg.dt, *noise);
    let mut prev_level = level(&init);
    loop {
        if stepper.steps_taken() >= cfg.max_steps {
            states.push(*stepper.state());
            return Ok(Trajectory {
                params: *params,
                states,
                stop: Some(StopInfo {
                    reason: StopReason::StepCapExceeded,
                    crossing_time: None,
                    steps_taken: stepper.steps_taken(),
                }),
            });
        }
        let t_prev = stepper.state().t;
        stepper.step();
        let i = stepper.steps_taken();
        if i % cfg.record_stride == 0 {
            states.push(*stepper.state());
        }
        let cur_level = level(stepper.state());
        if cur_level <= 0.0 {
            let frac = if prev_level > cur_level { prev_level / (prev_level - cur_level) } else { 1.0 };
            if states.last() != Some(stepper.state()) {
                states.push(*stepper.state());
            }
            return Ok(Trajectory {
                params: *params,
                states,
                stop: Some(StopInfo {
                    reason: StopReason::PredicateHit,
                    crossing_time: Some(t_prev + frac * cfg.dt),
                    steps_taken: i,
                }),
            });
        }
        prev_level = cur_level;
        if stepper.state().t >= t_max {
            if states.last() != Some(stepper.state()) {
                states.push(*stepper.state());
            }
            return Ok(Trajectory {
                params: *params,
                states,
                stop: Some(StopInfo {
                    reason: StopReason::Timeout,
                    crossing_time: None,
                    steps_taken: i,
                }),
            });
        }
    }
}

/// Run until the gap first reaches `level` from below, with the optional
/// bridge correction for crossings hidden between step endpoints. Reported
/// crossing time: interpolated for endpoint detections, the step end for
/// bridge detections.
pub fn simulate_until_gap<N: IncrementSource + Copy>(
    params: &ModelParams,
    init: SystemState,
    cfg: &StepConfig,
    noise: &N,
    level: f64,
    bridge_correction: bool,
    t_max: f64,
) -> Result<Trajectory, IntegratorError> {
    if !t_max.is_finite() || t_max <= init.t {
        return Err(IntegratorError::InvalidHorizon(t_max));
    }
    init.validate(params)?;
    let mut states = vec![init];
    let hit = |states: Vec<SystemState>, crossing: f64, steps: u64| Trajectory {
        params: *params,
        states,
        stop: Some(StopInfo {
            reason: StopReason::PredicateHit,
            crossing_time: Some(crossing),
            steps_taken: steps,
        }),
    };
    if init.h >= level {
        return Ok(hit(states, init.t, 0));
    }
    let mut stepper = Stepper::new(*params, init, cfg.dt, *noise);
    loop {
        if stepper.steps_taken() >= cfg.max_steps || stepper.state().t >= t_max {
            let reason = if stepper.state().t >= t_max {
                StopReason::Timeout
            } else {
                StopReason::StepCapExceeded
            };
            if states.last() != Some(stepper.state()) {
                states.push(*stepper.state());
            }
            return Ok(Trajectory {
                params: *params,
                states,
                stop: Some(StopInfo {
                    reason,
                    crossing_time: None,
                    steps_taken: stepper.steps_taken(),
                }),
            });
        }
        let prev = *stepper.state();
        stepper.step();
        let next = *stepper.state();
        let i = stepper.steps_taken();
        if i % cfg.record_stride == 0 {
            states.push(next);
        }
        if next.h >= level {
            let frac = if next.h > prev.h { (level - prev.h) / (next.h - prev.h) } else { 1.0 };
            if states.last() != Some(&next) {
                states.push(next);
            }
            return Ok(hit(states, prev.t + frac.clamp(0.0, 1.0) * cfg.dt, i));
        }
        if bridge_correction
            && stepper.last_aux_uniform()
                < bridge_touch_probability(level - prev.h, level - next.h, cfg.dt)
        {
            if states.last() != Some(&next) {
                states.push(next);
            }
            return Ok(hit(states, next.t, i));
        }
    }
}

/// Two trajectories driven by the identical increment sequence.
pub fn shared_noise_pair(
    params: &ModelParams,
    init1: SystemState,
    init2: SystemState,
    cfg: &StepConfig,
    noise: &NoiseSource,
    horizon: f64,
) -> Result<(Trajectory, Trajectory), IntegratorError> {
    let a = simulate(params, init1, cfg, noise, horizon)?;
    let b = simulate(params, init2, cfg, noise, horizon)?;
    Ok((a, b))
}

/// Strong-convergence probe: one Brownian path drawn at resolution
/// `fine_dt`, re-integrated at coarser steps that aggregate 2^k fine
/// increments. Returns `(dt, terminal (h,v) distance to the fine path)` for
/// each coarsening factor in `factors`.
pub fn strong_order_study(
    params: &ModelParams,
    init: SystemState,
    fine_dt: f64,
    factors: &[u64],
    horizon: f64,
    noise: &NoiseSource,
) -> Result<Vec<(f64, f64)>, IntegratorError> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(IntegratorError::InvalidHorizon(horizon));
    }
    init.validate(params)?;
    let max_factor = factors.iter().copied().max().unwrap_or(1);
    let n_coarse = (horizon / (fine_dt * max_factor as f64)).ceil() as u64;
    let n_fine = n_coarse * max_factor;
    let fine_db: Vec<f64> = (0..n_fine).map(|i| noise.db(i, fine_dt)).collect();

    let run = |m: u64| -> (f64, f64) {
        let dt = fine_dt * m as f64;
        let mut h = init.h;
        let mut v = init.v;
        for chunk in fine_db.chunks(m as usize) {
            let db: f64 = chunk.iter().sum();
            let (nh, nv, _) = raw_step(h, v, params.gamma(), params.g(), db, dt);
            h = nh;
            v = nv;
        }
        (h, v)
    };

    let (h_ref, v_ref) = run(1);
    Ok(factors
        .iter()
        .map(|&m| {
            let (h, v) = run(m);
            let err = ((h - h_ref).powi(2) + (v - v_ref).powi(2)).sqrt();
            (fine_dt * m as f64, err)
        })
        .collect())
}
