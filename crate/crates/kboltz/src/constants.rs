//! Physical constants and molecular reference data.
//!
//! Values follow the 2006 CODATA adjustment, the epoch of the reference
//! measurement this pipeline reproduces.  The extractor side of the pipeline
//! (fit ties, unit conversions) always uses these constants; the synthetic
//! generator carries its own `kb_truth` so that recovery tests never compare
//! a value against itself.

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant, J/K (CODATA 2006: 1.380 6504(24) x 10^-23).
pub const KB_CODATA: f64 = 1.380_650_4e-23;

/// Relative standard uncertainty of [`KB_CODATA`].
pub const KB_CODATA_REL_UNC: f64 = 1.7e-6;

/// Unified atomic mass unit, kg (CODATA 2006).
pub const ATOMIC_MASS_KG: f64 = 1.660_538_782e-27;

/// Atomic mass of 14N, u.
pub const MASS_N14_U: f64 = 14.003_074_004_8;

/// Atomic mass of 1H, u.
pub const MASS_H1_U: f64 = 1.007_825_032_07;

/// Mass of the 14NH3 molecule, kg, from the isotopic masses of its atoms.
///
/// Electron binding-energy corrections are neglected; they enter below the
/// 1e-7 relative level, two orders under the per-mille accuracy this pipeline
/// targets on synthetic data.
pub const MASS_NH3_KG: f64 = (MASS_N14_U + 3.0 * MASS_H1_U) * ATOMIC_MASS_KG;

/// Center frequency of the probed NH3 line (nu2 band, saQ(6,3)), Hz.
pub const NU0_SAQ63_HZ: f64 = 28_953_693.9e6;

/// Thermodynamic reference temperature of the measurement cell, K (ice point).
pub const T_ICE_POINT_K: f64 = 273.15;

/// NH3 self-diffusion coefficient at [`P_DIFFUSION_REF_PA`], m^2/s.
///
/// Literature value 0.15 cm^2/s at 1 atm; scales as 1/P.
pub const DIFFUSION_D0_M2S: f64 = 1.5e-5;

/// Reference pressure for [`DIFFUSION_D0_M2S`], Pa (1 atm).
pub const P_DIFFUSION_REF_PA: f64 = 101_325.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nh3_mass_matches_isotopic_sum() {
        let u = MASS_NH3_KG / ATOMIC_MASS_KG;
        assert!((u - 17.026_549_1).abs() < 1e-6, "NH3 mass {u} u");
    }

    #[test]
    fn line_is_in_the_10_micron_band() {
        let lambda = SPEED_OF_LIGHT / NU0_SAQ63_HZ;
        assert!(lambda > 10.0e-6 && lambda < 11.0e-6, "lambda = {lambda} m");
    }
}
