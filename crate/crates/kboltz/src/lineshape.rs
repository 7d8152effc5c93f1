//! Absorption line-shape models.
//!
//! Three evaluation routes for the soft-collision (Galatry) profile are
//! provided and cross-checked in tests:
//!
//! * [`galatry_absorbance_exact`] — adaptive quadrature of the correlation
//!   function, the designated reference path;
//! * [`galatry_absorbance_hyp`] — the confluent-hypergeometric closed form;
//! * [`galatry_absorbance_expansion`] — the first-order narrowing expansion
//!   `Re w(zeta) + (theta/12) Re w1(zeta)`, valid for small `theta`.
//!
//! [`voigt_absorbance`] is the `theta -> 0` limit of all three. The module
//! also houses the Lambert-Beer [`transmission`] map and the pressure-to-
//! `theta` conversions used by the fitting layer.

use num_complex::Complex64;
use thiserror::Error;

use crate::constants::KB_CODATA;
use crate::quad::{self, QuadError};
use crate::specfun::{self, SpecFunError};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Upper validity bound for the first-order narrowing expansion.
pub const EXPANSION_THETA_MAX: f64 = 0.01;

#[derive(Debug, Error)]
pub enum LineShapeError {
    #[error("invalid line-shape parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("theta = {0} outside the first-order expansion domain (0..=0.01)")]
    ThetaOutOfRange(f64),
    #[error("correlation-function quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
    #[error("special function evaluation failed: {0}")]
    SpecFun(#[from] SpecFunError),
    #[error("correlation function decays too slowly to truncate")]
    TailTruncation,
}

/// Parameters of a single absorption line on a frequency-offset axis.
///
/// `baseline_offset`/`baseline_slope` describe the detected-signal baseline;
/// they are carried here so a fit vector maps onto one struct, but the
/// absorbance models themselves exclude the baseline.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineShapeParams {
    /// Doppler e-fold half-width (Hz).
    pub doppler_hwhm_e: f64,
    /// Collisional (homogeneous) half-width (Hz).
    pub homogeneous_hw: f64,
    /// Line-center offset from the scan origin (Hz).
    pub center: f64,
    /// Lumped dimensionless peak absorbance prefactor.
    pub amplitude: f64,
    /// Narrowing parameter: velocity-change rate over Doppler angular width.
    pub theta: f64,
    /// Detected-signal baseline at the scan origin (signal units).
    pub baseline_offset: f64,
    /// Detected-signal baseline slope (signal units per Hz).
    pub baseline_slope: f64,
}

impl LineShapeParams {
    pub fn validate(&self) -> Result<(), LineShapeError> {
        if !(self.doppler_hwhm_e > 0.0) || !self.doppler_hwhm_e.is_finite() {
            return Err(LineShapeError::InvalidParameter(
                "doppler_hwhm_e must be finite and positive",
            ));
        }
        if !(self.homogeneous_hw >= 0.0) || !self.homogeneous_hw.is_finite() {
            return Err(LineShapeError::InvalidParameter(
                "homogeneous_hw must be finite and non-negative",
            ));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(LineShapeError::InvalidParameter(
                "theta must be finite and non-negative",
            ));
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(LineShapeError::InvalidParameter(
                "amplitude must be finite and non-negative",
            ));
        }
        if !self.center.is_finite()
            || !self.baseline_offset.is_finite()
            || !self.baseline_slope.is_finite()
        {
            return Err(LineShapeError::InvalidParameter(
                "center and baseline terms must be finite",
            ));
        }
        Ok(())
    }
}

/// Gas state and transport data needed to map pressure onto the narrowing
/// parameter.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GasConditions {
    pub pressure_pa: f64,
    pub temperature_k: f64,
    pub molecular_mass_kg: f64,
    /// Self-diffusion coefficient at `diffusion_p0_pa`.
    pub diffusion_d0_m2s: f64,
    pub diffusion_p0_pa: f64,
    pub wavelength_m: f64,
}

impl GasConditions {
    pub fn validate(&self) -> Result<(), LineShapeError> {
        let fields = [
            (self.pressure_pa, "pressure_pa"),
            (self.temperature_k, "temperature_k"),
            (self.molecular_mass_kg, "molecular_mass_kg"),
            (self.diffusion_d0_m2s, "diffusion_d0_m2s"),
            (self.diffusion_p0_pa, "diffusion_p0_pa"),
            (self.wavelength_m, "wavelength_m"),
        ];
        for (value, name) in fields {
            if !(value > 0.0) || !value.is_finite() {
                let _ = name;
                return Err(LineShapeError::InvalidParameter(
                    "gas conditions must all be finite and strictly positive",
                ));
            }
        }
        Ok(())
    }
}

/// Reduced detuning `zeta = xi + i eta`, with `xi` the detuning and `eta` the
/// collisional half-width, both in units of the Doppler e-fold half-width.
pub fn reduced_coordinate(params: &LineShapeParams, nu: f64) -> Complex64 {
    Complex64::new(
        (nu - params.center) / params.doppler_hwhm_e,
        params.homogeneous_hw / params.doppler_hwhm_e,
    )
}

/// Voigt absorbance `amplitude * Re w(zeta)`.
pub fn voigt_absorbance(params: &LineShapeParams, nu: f64) -> Result<f64, LineShapeError> {
    params.validate()?;
    let w = specfun::faddeeva(reduced_coordinate(params, nu))?;
    Ok(params.amplitude * w.re)
}

/// First-order narrowing expansion
/// `amplitude * (Re w(zeta) + (theta/12) Re w1(zeta))`.
pub fn galatry_absorbance_expansion(
    params: &LineShapeParams,
    nu: f64,
) -> Result<f64, LineShapeError> {
    params.validate()?;
    if params.theta > EXPANSION_THETA_MAX {
        return Err(LineShapeError::ThetaOutOfRange(params.theta));
    }
    let zeta = reduced_coordinate(params, nu);
    let w = specfun::faddeeva(zeta)?;
    let w1 = specfun::w1(zeta)?;
    Ok(params.amplitude * (w.re + params.theta / 12.0 * w1.re))
}

/// Reference path: adaptive quadrature of the correlation function
/// `J = int_0^inf exp(-(eta + i xi) s + (1 - theta s - e^{-theta s}) /
/// (2 theta^2)) ds` in Doppler-scaled time, normalized so that the
/// `theta -> 0` limit reproduces [`voigt_absorbance`] exactly.
pub fn galatry_absorbance_exact(params: &LineShapeParams, nu: f64) -> Result<f64, LineShapeError> {
    params.validate()?;
    if params.theta == 0.0 {
        return voigt_absorbance(params, nu);
    }
    let zeta = reduced_coordinate(params, nu);
    let (xi, eta) = (zeta.re, zeta.im);
    let theta = params.theta;
    let half_inv_theta_sq = 0.5 / (theta * theta);
    let re_exponent = |s: f64| half_inv_theta_sq * hump(theta * s) - eta * s;

    // Grow the truncation point until the integrand has decayed below
    // exp(-42) of its s = 0 value; the real exponent is monotone decreasing.
    let mut upper = 8.0;
    while re_exponent(upper) > -42.0 {
        upper *= 2.0;
        if upper > 1e7 {
            return Err(LineShapeError::TailTruncation);
        }
    }

    let f = |s: f64| Complex64::new(re_exponent(s), -xi * s).exp();
    let j = quad::integrate_complex(&f, 0.0, upper, 1e-13, 1e-16, 4000)?;
    Ok(params.amplitude / SQRT_PI * j.value.re)
}

/// Closed-form route through the confluent hypergeometric function:
/// `J = 1F1(1; 1 + 1/(2 theta^2) + (eta + i xi)/theta; 1/(2 theta^2)) / y`
/// with `y = 1/(2 theta) + eta + i xi`.
pub fn galatry_absorbance_hyp(params: &LineShapeParams, nu: f64) -> Result<f64, LineShapeError> {
    params.validate()?;
    if params.theta == 0.0 {
        return voigt_absorbance(params, nu);
    }
    let zeta = reduced_coordinate(params, nu);
    let (xi, eta) = (zeta.re, zeta.im);
    let theta = params.theta;
    let x = 0.5 / (theta * theta);
    let b = Complex64::new(1.0 + x + eta / theta, xi / theta);
    let y = Complex64::new(0.5 / theta + eta, xi);
    let f = specfun::kummer_1f1(1.0, b, Complex64::new(x, 0.0))?;
    Ok(params.amplitude / SQRT_PI * (f / y).re)
}

/// Stable `1 - x - exp(-x)`; the direct form loses all significant digits
/// for small `x`, so a series is used below 0.5.
fn hump(x: f64) -> f64 {
    if x >= 0.5 {
        return 1.0 - x - (-x).exp();
    }
    // -(sum_{k>=2} (-x)^k / k!)
    let mut term = -x;
    let mut sum = 0.0;
    for k in 2..30u32 {
        term *= -x / f64::from(k);
        sum += term;
        if term.abs() <= 1e-20 * sum.abs() {
            break;
        }
    }
    -sum
}

/// Lambert-Beer transmission `exp(-A)` for a non-negative absorbance.
pub fn transmission(absorbance: f64) -> f64 {
    (-absorbance).exp()
}

/// Narrowing parameter from gas conditions and a (possibly non-thermal,
/// e.g. currently-being-fitted) Doppler half-width:
/// `theta = beta_d / (2 pi doppler_hwhm_e)` with
/// `beta_d = k_B T / (m D(P))` and `D(P) = D0 P0 / P`.
pub fn theta_from_conditions(cond: &GasConditions, doppler_hwhm_e: f64) -> f64 {
    let diffusion = cond.diffusion_d0_m2s * cond.diffusion_p0_pa / cond.pressure_pa;
    let beta_d = KB_CODATA * cond.temperature_k / (cond.molecular_mass_kg * diffusion);
    beta_d / (2.0 * std::f64::consts::PI * doppler_hwhm_e)
}

/// Equivalent mean-free-path form `theta = sqrt(3/(8 pi^2)) lambda / l_m`
/// with `l_m = sqrt(3 m / (k_B T)) D(P)`; agrees with
/// [`theta_from_conditions`] when the latter is evaluated at the thermal
/// Doppler width.
pub fn theta_from_mean_free_path(cond: &GasConditions) -> f64 {
    let diffusion = cond.diffusion_d0_m2s * cond.diffusion_p0_pa / cond.pressure_pa;
    let mean_free_path =
        (3.0 * cond.molecular_mass_kg / (KB_CODATA * cond.temperature_k)).sqrt() * diffusion;
    (3.0 / (8.0 * std::f64::consts::PI * std::f64::consts::PI)).sqrt() * cond.wavelength_m
        / mean_free_path
}

/// Thermal Doppler e-fold half-width `sqrt(2 k_B T / m) / lambda` implied by
/// the gas conditions (uses the reference Boltzmann constant).
pub fn thermal_doppler_width(cond: &GasConditions) -> f64 {
    (2.0 * KB_CODATA * cond.temperature_k / cond.molecular_mass_kg).sqrt() / cond.wavelength_m
}
