//! Model parameters, derived renewal constants, augmented state, and the
//! closed-form interior dynamics.
//!
//! The system couples a gap `H >= 0` (reflected at 0) to an inert-particle
//! velocity `V` driven by viscous drag `-gamma * V`, gravity `-g`, and
//! local-time pushes at the boundary:
//!
//! ```text
//! dH = V dt - dB + dL
//! dV = -(gamma V + g) dt + dL
//! ```
//!
//! Away from the boundary `L` is flat and the velocity relaxes
//! deterministically toward `-g/gamma`, which gives the explicit formulas
//! implemented by [`interior_velocity`] and [`interior_hitting_time`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("gravity g must be finite and > 0, got {0}")]
    InvalidGravity(f64),
    #[error("viscosity gamma must be finite and > 0, got {0}")]
    InvalidViscosity(f64),
    #[error("operation requires gamma > 0 (not available in gamma-zero mode)")]
    GammaZeroUnsupported,
    #[error("target level {level} outside (-g/gamma, v0) = ({floor}, {v0})")]
    LevelOutOfRange { level: f64, floor: f64, v0: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Physical constants of the system. Immutable once constructed.
///
/// `gamma_zero_mode` marks the degenerate `gamma = 0` system, which the
/// integrator supports as a product-form oracle but the renewal machinery
/// rejects (its constants involve `g/gamma`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    gamma: f64,
    g: f64,
    gamma_zero_mode: bool,
}

impl ModelParams {
    pub fn new(gamma: f64, g: f64) -> Result<Self, ModelError> {
        if !g.is_finite() || g <= 0.0 {
            return Err(ModelError::InvalidGravity(g));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(ModelError::InvalidViscosity(gamma));
        }
        Ok(Self { gamma, g, gamma_zero_mode: false })
    }

    /// Oracle mode with `gamma = 0` exactly; `g` must still be positive.
    pub fn gamma_zero(g: f64) -> Result<Self, ModelError> {
        if !g.is_finite() || g <= 0.0 {
            return Err(ModelError::InvalidGravity(g));
        }
        Ok(Self { gamma: 0.0, g, gamma_zero_mode: true })
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn g(&self) -> f64 {
        self.g
    }

    #[inline]
    pub fn is_gamma_zero(&self) -> bool {
        self.gamma_zero_mode
    }

    /// Hard lower barrier for the velocity, `-g/gamma`. Minus infinity in
    /// gamma-zero mode (the velocity is unbounded below there).
    #[inline]
    pub fn velocity_floor(&self) -> f64 {
        if self.gamma_zero_mode {
            f64::NEG_INFINITY
        } else {
            -self.g / self.gamma
        }
    }

    /// Velocity coordinate of the renewal point, `-g/(1+gamma)`. This is
    /// also the long-run drift rate of both particle trajectories.
    #[inline]
    pub fn renewal_velocity(&self) -> f64 {
        -self.g / (1.0 + self.gamma)
    }
}

/// Constants of the renewal construction: the velocity levels `a < -g/(1+gamma) < b < 0`
/// that arm the detector, plus the firing level itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalConfig {
    pub a: f64,
    pub b: f64,
    pub renewal_v: f64,
    /// Numerical contact threshold: boundary contact means the reflection
    /// clamped `h` to zero in the current step, so this tolerance only guards
    /// serialized round-trips.
    pub boundary_tol: f64,
}

pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

/// Renewal levels per the construction: `a = -(g + g/2gamma)/(1+gamma)`,
/// `b = -(g - g/2(1+gamma))/(1+gamma)`, firing at `-g/(1+gamma)`.
///
/// Rejects gamma-zero mode: `a` involves `g/gamma`.
pub fn derive_renewal_config(params: &ModelParams) -> Result<RenewalConfig, ModelError> {
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported);
    }
    let gamma = params.gamma();
    let g = params.g();
    let a = -(g + g / (2.0 * gamma)) / (1.0 + gamma);
    let b = -(g - g / (2.0 * (1.0 + gamma))) / (1.0 + gamma);
    let renewal_v = params.renewal_velocity();
    debug_assert!(params.velocity_floor() < a && a < renewal_v && renewal_v < b && b < 0.0);
    Ok(RenewalConfig { a, b, renewal_v, boundary_tol: DEFAULT_BOUNDARY_TOL })
}

/// Augmented state of one trajectory: time, gap, velocity, inert trajectory,
/// Brownian-particle position, driving Brownian value, accumulated local time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t: f64,
    pub h: f64,
    pub v: f64,
    pub s: f64,
    pub x: f64,
    pub b: f64,
    pub l: f64,
}

impl SystemState {
    /// State at time zero with `s = b = l = 0`, so `x = -h`.
    pub fn initial(h: f64, v: f64) -> Self {
        Self { t: 0.0, h, v, s: 0.0, x: -h, b: 0.0, l: 0.0 }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<(), ModelError> {
        let fields = [self.t, self.h, self.v, self.s, self.x, self.b, self.l];
        if fields.iter().any(|f| !f.is_finite()) {
            return Err(ModelError::InvalidState(format!("non-finite field in {self:?}")));
        }
        if self.h < 0.0 {
            return Err(ModelError::InvalidState(format!("gap h = {} < 0", self.h)));
        }
        if !params.is_gamma_zero() && self.v <= params.velocity_floor() {
            return Err(ModelError::InvalidState(format!(
                "velocity {} not above floor {}",
                self.v,
                params.velocity_floor()
            )));
        }
        Ok(())
    }
}

/// Interior (no-contact) velocity after `dt`:
/// `(v0 + g/gamma) e^{-gamma dt} - g/gamma`, or `v0 - g dt` in gamma-zero mode.
pub fn interior_velocity(params: &ModelParams, v0: f64, dt: f64) -> f64 {
    if params.is_gamma_zero() {
        return v0 - params.g() * dt;
    }
    let ratio = params.g() / params.gamma();
    (v0 + ratio) * (-params.gamma() * dt).exp() - ratio
}

/// Time for the interior velocity to relax from `v0` down to `a_level`:
/// `(1/gamma) log((v0 + g/gamma)/(a_level + g/gamma))`.
///
/// Valid only while the path stays interior; that is the caller's
/// responsibility. Requires `-g/gamma < a_level < v0`.
pub fn interior_hitting_time(
    params: &ModelParams,
    v0: f64,
    a_level: f64,
) -> Result<f64, ModelError> {
    if params.is_gamma_zero() {
        return Err(ModelError::GammaZeroUnsupported);
    }
    let floor = params.velocity_floor();
    if a_level <= floor || a_level >= v0 {
        return Err(ModelError::LevelOutOfRange { level: a_level, floor, v0 });
    }
    let ratio = params.g() / params.gamma();
    Ok(((v0 + ratio) / (a_level + ratio)).ln() / params.gamma())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renewal_constants_gamma_one() {
        let p = ModelParams::new(1.0, 1.0).unwrap();
        let rc = derive_renewal_config(&p).unwrap();
        assert_eq!(rc.a, -0.75);
        assert_eq!(rc.b, -0.375);
        assert_eq!(rc.renewal_v, -0.5);
    }

    #[test]
    fn renewal_constants_gamma_two() {
        let p = ModelParams::new(2.0, 1.0).unwrap();
        let rc = derive_renewal_config(&p).unwrap();
        assert!((rc.renewal_v - (-1.0 / 3.0)).abs() < 1e-15);
        assert!((rc.a - (-(1.0 + 0.25) / 3.0)).abs() < 1e-15);
        assert!((rc.b - (-(1.0 - 1.0 / 6.0) / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(matches!(ModelParams::new(1.0, 0.0), Err(ModelError::InvalidGravity(_))));
        assert!(matches!(ModelParams::new(0.0, 1.0), Err(ModelError::InvalidViscosity(_))));
        assert!(matches!(ModelParams::new(-1.0, 1.0), Err(ModelError::InvalidViscosity(_))));
        assert!(ModelParams::gamma_zero(1.0).is_ok());
        assert!(ModelParams::gamma_zero(-2.0).is_err());
    }

    #[test]
    fn renewal_config_rejects_gamma_zero() {
        let p = ModelParams::gamma_zero(1.0).unwrap();
        assert!(matches!(derive_renewal_config(&p), Err(ModelError::GammaZeroUnsupported)));
    }

    #[test]
    fn renewal_ordering_on_grid() {
        for &gamma in &[0.1, 0.5, 1.0, 2.0, 10.0] {
            for &g in &[0.1, 0.5, 1.0, 2.0, 10.0] {
                let p = ModelParams::new(gamma, g).unwrap();
                let rc = derive_renewal_config(&p).unwrap();
                assert!(
                    p.velocity_floor() < rc.a
                        && rc.a < rc.renewal_v
                        && rc.renewal_v < rc.b
                        && rc.b < 0.0,
                    "ordering violated at gamma={gamma}, g={g}: {rc:?}"
                );
            }
        }
    }

    #[test]
    fn interior_velocity_examples() {
        let p = ModelParams::new(1.0, 1.0).unwrap();
        assert!(interior_velocity(&p, 1.0, std::f64::consts::LN_2).abs() < 1e-15);
        // long-time limit is -g/gamma
        assert!((interior_velocity(&p, -0.5, 1e3) - (-1.0)).abs() < 1e-12);
        let p2 = ModelParams::new(2.0, 1.0).unwrap();
        assert_eq!(interior_velocity(&p2, 0.0, 0.0), 0.0);
    }

    #[test]
    fn interior_hitting_time_examples() {
        let p = ModelParams::new(1.0, 1.0).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((interior_hitting_time(&p, 1.0, 0.0).unwrap() - ln2).abs() < 1e-15);
        assert!((interior_hitting_time(&p, 0.0, -0.5).unwrap() - ln2).abs() < 1e-15);
        assert!(interior_hitting_time(&p, 1.0, -1.0).is_err());
        assert!(interior_hitting_time(&p, 1.0, 1.5).is_err());
    }

    #[test]
    fn velocity_hitting_composition_is_identity() {
        for &gamma in &[0.1, 0.5, 1.0, 2.0, 10.0] {
            for &g in &[0.1, 0.5, 1.0, 2.0, 10.0] {
                let p = ModelParams::new(gamma, g).unwrap();
                for &v0 in &[2.0, 0.3, -0.2 * g / gamma] {
                    for &frac in &[0.9, 0.5, 0.05] {
                        // a between the floor and v0
                        let a = p.velocity_floor() + frac * (v0 - p.velocity_floor());
                        if a >= v0 {
                            continue;
                        }
                        let tau = interior_hitting_time(&p, v0, a).unwrap();
                        let back = interior_velocity(&p, v0, tau);
                        let scale = a.abs().max(1e-12);
                        assert!(
                            ((back - a) / scale).abs() < 1e-12,
                            "composition broke: gamma={gamma} g={g} v0={v0} a={a} back={back}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn state_validation() {
        let p = ModelParams::new(1.0, 1.0).unwrap();
        assert!(SystemState::initial(1.0, 0.0).validate(&p).is_ok());
        assert!(SystemState::initial(-0.1, 0.0).validate(&p).is_err());
        assert!(SystemState::initial(1.0, -1.0).validate(&p).is_err());
        assert!(SystemState::initial(1.0, f64::NAN).validate(&p).is_err());
        // renewal point itself is a legal state
        let rc = derive_renewal_config(&p).unwrap();
        assert!(SystemState::initial(0.0, rc.renewal_v).validate(&p).is_ok());
    }
}
