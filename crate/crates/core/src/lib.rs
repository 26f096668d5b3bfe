//! Simulation engine and statistical verification toolkit for the
//! gravitation + viscosity inert-drift system: a reflected SDE with local
//! time, its renewal structure, stationary-law and tail estimation, and
//! Monte Carlo checks of the closed-form hitting-time bounds.

pub mod analytics;
pub mod bounds;
pub mod integrator;
pub mod lanes;
pub mod measure;
pub mod model;
pub mod noise;
pub mod renewal;
pub mod stationary;
pub mod stats;
pub mod tail;

pub use integrator::{
    bridge_touch_probability, reflect_step, shared_noise_pair, simulate, simulate_until,
    simulate_until_gap, IncrementSource, StepConfig, Stepper, StopInfo, StopReason, Trajectory,
    ZeroNoise,
};
pub use model::{
    derive_renewal_config, interior_hitting_time, interior_velocity, ModelError, ModelParams,
    RenewalConfig, SystemState,
};
pub use noise::NoiseSource;
