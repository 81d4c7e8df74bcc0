//! Closed-form response of the one-degree-of-freedom slider: a Kelvin-Voigt
//! bar of length L glued to a rigid support through an isotropic adhesive of
//! stiffness K and toughness alpha, pulled at the far end with ramp speed
//! v_D. With Poisson ratio zero all fields are spatially uniform or affine,
//! so the full initial-boundary-value problem reduces to one scalar ODE with
//! an explicit solution. This module is the ground truth the simulator is
//! verified against.
//!
//! Bonded phase: the interface opening w(t) solves
//!     chi E w' + (E + L K) w = E v_D (t + chi),   w(0) = 0,
//! giving w(t) = a0 t - b (1 - exp(-t / t_c)) with a0 = E v_D / (E + L K),
//! b = -chi L E K v_D / (E + L K)^2 <= 0, and t_c = chi E / (E + L K).
//! Rupture happens when the driving energy K w^2 / 2 reaches alpha; the bar
//! then relaxes its stretch exponentially on the time scale chi while the
//! freed end follows the pull.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("slider parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("relaxation time must be nonnegative, got {0}")]
    NegativeChi(f64),
    #[error("rupture time is defined for chi > 0; use rupture_time_limit for the inviscid value")]
    InviscidRuptureTime,
    #[error("no sign change in the rupture bracket [0, {0}]")]
    NoBracket(f64),
    #[error("history time must be nonnegative, got {0}")]
    NegativeTime(f64),
}

/// Parameters of the slider test.
#[derive(Debug, Clone, Copy)]
pub struct SliderParams {
    /// Young modulus, Pa.
    pub young: f64,
    /// Bar length, m.
    pub length: f64,
    /// Adhesive stiffness, Pa/m.
    pub stiffness: f64,
    /// Fracture toughness, J/m^2.
    pub toughness: f64,
    /// Dirichlet ramp speed, m/s.
    pub pull_rate: f64,
    /// Kelvin-Voigt relaxation time, s (>= 0).
    pub chi: f64,
}

impl SliderParams {
    pub fn new(
        young: f64,
        length: f64,
        stiffness: f64,
        toughness: f64,
        pull_rate: f64,
        chi: f64,
    ) -> Result<Self, OracleError> {
        let named = [
            ("young", young),
            ("length", length),
            ("stiffness", stiffness),
            ("toughness", toughness),
            ("pull_rate", pull_rate),
        ];
        for (name, value) in named {
            if !(value > 0.0) {
                return Err(OracleError::NonPositive { name, value });
            }
        }
        if !(chi >= 0.0) {
            return Err(OracleError::NegativeChi(chi));
        }
        Ok(Self {
            young,
            length,
            stiffness,
            toughness,
            pull_rate,
            chi,
        })
    }

    /// Opening at which the adhesive ruptures: K w^2 / 2 = alpha.
    pub fn rupture_opening(&self) -> f64 {
        (2.0 * self.toughness / self.stiffness).sqrt()
    }
}

/// Coefficients of the bonded-phase opening
/// w(t) = gap_rate * t - gap_transient * (1 - exp(-t / time_constant)).
/// `gap_transient` is nonpositive, so viscosity makes the opening run ahead
/// of its steady ramp and rupture happens earlier than in the elastic limit.
#[derive(Debug, Clone, Copy)]
pub struct SliderCoefficients {
    /// Steady opening rate a0, m/s.
    pub gap_rate: f64,
    /// Transient amplitude, m (<= 0; zero for chi = 0).
    pub gap_transient: f64,
    /// Relaxation time constant of the coupled system, s (zero for chi = 0).
    pub time_constant: f64,
}

pub fn coefficients(p: &SliderParams) -> SliderCoefficients {
    let denom = p.young + p.length * p.stiffness;
    SliderCoefficients {
        gap_rate: p.young / denom * p.pull_rate,
        gap_transient: -p.chi * p.length * p.young * p.stiffness / (denom * denom) * p.pull_rate,
        time_constant: p.chi * p.young / denom,
    }
}

/// Bonded-phase opening at time t (valid for t <= rupture time).
fn bonded_opening(c: &SliderCoefficients, t: f64) -> f64 {
    if c.time_constant == 0.0 {
        c.gap_rate * t
    } else {
        c.gap_rate * t - c.gap_transient * (1.0 - (-t / c.time_constant).exp())
    }
}

fn bonded_opening_rate(c: &SliderCoefficients, t: f64) -> f64 {
    if c.time_constant == 0.0 {
        c.gap_rate
    } else {
        c.gap_rate - c.gap_transient / c.time_constant * (-t / c.time_constant).exp()
    }
}

/// Rupture time of the inviscid limit, approached monotonically from below
/// as chi decreases to zero.
pub fn rupture_time_limit(p: &SliderParams) -> f64 {
    (p.young + p.length * p.stiffness) / (p.pull_rate * p.young) * p.rupture_opening()
}

/// Rupture time for chi > 0: the root of w(t) = sqrt(2 alpha / K), found by
/// bisection on [0, 2 * rupture_time_limit]. The opening is strictly
/// increasing, so the root is unique.
pub fn rupture_time(p: &SliderParams, tol: f64) -> Result<f64, OracleError> {
    if p.chi == 0.0 {
        return Err(OracleError::InviscidRuptureTime);
    }
    let c = coefficients(p);
    let target = p.rupture_opening();
    let f = |t: f64| bonded_opening(&c, t) - target;
    let mut lo = 0.0;
    let mut hi = 2.0 * rupture_time_limit(p);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(OracleError::NoBracket(hi));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Snapshot of the slider response at one time.
#[derive(Debug, Clone, Copy)]
pub struct SliderSample {
    /// Interface opening w(t), m.
    pub opening: f64,
    /// Bar stress, Pa (equals K w while bonded, zero after rupture).
    pub stress: f64,
    /// Viscous dissipation rate density, J/(m^3 s).
    pub dissipation_rate: f64,
    /// Delamination variable: 1 bonded, 0 ruptured.
    pub bond: f64,
}

/// Precomputed slider response for chi > 0: coefficients and rupture time
/// resolved once, sampled at arbitrary times.
#[derive(Debug, Clone, Copy)]
pub struct SliderOracle {
    pub params: SliderParams,
    pub coeffs: SliderCoefficients,
    pub rupture_time: f64,
    /// Bar stretch v_D t - w at the rupture instant.
    stretch_at_rupture: f64,
}

impl SliderOracle {
    pub fn new(p: SliderParams) -> Result<Self, OracleError> {
        let t_rup = rupture_time(&p, 1e-14)?;
        let coeffs = coefficients(&p);
        let w_rup = bonded_opening(&coeffs, t_rup);
        Ok(Self {
            params: p,
            coeffs,
            rupture_time: t_rup,
            stretch_at_rupture: p.pull_rate * t_rup - w_rup,
        })
    }

    pub fn sample(&self, t: f64) -> Result<SliderSample, OracleError> {
        if t < 0.0 {
            return Err(OracleError::NegativeTime(t));
        }
        let p = &self.params;
        if t <= self.rupture_time {
            let w = bonded_opening(&self.coeffs, t);
            let rate = bonded_opening_rate(&self.coeffs, t);
            let strain_rate = (p.pull_rate - rate) / p.length;
            Ok(SliderSample {
                opening: w,
                stress: p.stiffness * w,
                dissipation_rate: p.chi * p.young * strain_rate * strain_rate,
                bond: 1.0,
            })
        } else {
            // stretch relaxes exponentially; total stress is identically zero
            let decay = (-(t - self.rupture_time) / p.chi).exp();
            let stretch = self.stretch_at_rupture * decay;
            let strain_rate = -stretch / (p.chi * p.length);
            Ok(SliderSample {
                opening: p.pull_rate * t - stretch,
                stress: 0.0,
                dissipation_rate: p.chi * p.young * strain_rate * strain_rate,
                bond: 0.0,
            })
        }
    }
}

/// Explicit response history for chi > 0, piecewise across the rupture time.
pub fn slider_history(p: &SliderParams, t: f64) -> Result<SliderSample, OracleError> {
    SliderOracle::new(*p)?.sample(t)
}

/// The concentrated dissipation surviving the inviscid limit: a jump at the
/// limiting rupture time with spatially uniform density alpha K / E.
pub fn defect_measure_slider(p: &SliderParams) -> (f64, f64) {
    (
        rupture_time_limit(p),
        p.toughness * p.stiffness / p.young,
    )
}

/// Parameters of the slider experiment used throughout the tests:
/// E = 70 GPa, L = 0.1 m, K = 150 GPa/m, alpha = 375 J/m^2,
/// v_D = 267 um/s.
pub fn reference_params(chi: f64) -> SliderParams {
    SliderParams::new(70e9, 0.1, 150e9, 375.0, 267e-6, chi).unwrap()
}
