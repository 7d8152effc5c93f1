//! Hyperfine structure of the probed rotation-vibration line.
//!
//! The line of interest couples a rotational level (J, K with K a multiple
//! of 3) to the nitrogen spin `I_N = 1` and the total proton spin
//! `I_H = 3/2`, splitting each rovibrational level into 12 sublevels labeled
//! `(F1, F)`. This module computes first-order sublevel energies from the
//! five coupling constants, assembles the 78-component stick spectrum with
//! weak-field intensities, derives the Doppler-envelope broadening
//! correction, locates crossover resonances, and fits the saturated
//! triplet with derivative-of-Lorentzian components.
//!
//! Operator conventions (all evaluated to first order, i.e. diagonal in the
//! coupled `|(J I_N) F1, I_H; F>` basis; the exact-diagonalization oracle in
//! the test suite bounds the truncation error):
//!
//! * quadrupole: `eqq * (3K^2/(J(J+1)) - 1) * (3/4 C(C+1) - I_N(I_N+1)J(J+1))
//!   / (2 I_N (2I_N - 1)(2J - 1)(2J + 3))` with
//!   `C = F1(F1+1) - I_N(I_N+1) - J(J+1)`;
//! * N spin-rotation: `r * C / 2`;
//! * H spin-rotation: `s * <I_H . J>` by Lande projection through `F1`;
//! * N-H spin-spin: `t * (3{(I_N.J),(I_H.J)} - 2 (I_N.I_H) J(J+1)) /
//!   ((2J-1)(2J+3))`;
//! * H-H spin-spin: `u * (3 (I_H.J)^2 + 3/2 (I_H.J) - I_H(I_H+1)J(J+1)) /
//!   ((2J-1)(2J+3))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ksum::KahanSum;
use crate::lineshape::{
    galatry_absorbance_expansion, voigt_absorbance, LineShapeError, LineShapeParams,
};
use crate::optim::{levenberg_marquardt, FitError, LmOptions};

const I_N: f64 = 1.0;
const I_H: f64 = 1.5;

#[derive(Debug, Error)]
pub enum HyperfineError {
    #[error("unsupported rotational level (J = {j}, K = {k})")]
    UnsupportedLevel { j: u32, k: u32 },
    #[error("Doppler width must exceed the hyperfine spread by 10x (ratio {0:.2})")]
    InsufficientSeparation(f64),
    #[error("line-shape evaluation failed: {0}")]
    LineShape(#[from] LineShapeError),
    #[error("fit failed: {0}")]
    Fit(#[from] FitError),
}

/// Hyperfine coupling constants of one vibrational level, in kHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperfineConstants {
    /// Nitrogen quadrupole constant eQq.
    pub eqq_khz: f64,
    /// Nitrogen spin-rotation constant R.
    pub r_khz: f64,
    /// Hydrogen spin-rotation constant S.
    pub s_khz: f64,
    /// N-H spin-spin constant T.
    pub t_khz: f64,
    /// H-H spin-spin constant U.
    pub u_khz: f64,
}

impl HyperfineConstants {
    /// Ground-level constants of the probed line.
    pub fn ground_saq63() -> Self {
        HyperfineConstants {
            eqq_khz: -4010.0,
            r_khz: 6.75,
            s_khz: -18.00,
            t_khz: -0.85,
            u_khz: -2.5e-3,
        }
    }

    /// Excited-level constants: ground values shifted by the measured
    /// differences (eQq by -196.8 kHz, R by -535 Hz) and the excited-state
    /// S, T, U values.
    pub fn excited_saq63() -> Self {
        HyperfineConstants {
            eqq_khz: -4010.0 - 196.8,
            r_khz: 6.75 - 0.535,
            s_khz: -17.5,
            t_khz: -0.9,
            u_khz: -2.5e-3,
        }
    }
}

/// One of the 12 hyperfine sublevels of a rovibrational level.
///
/// `F1` couples J with the nitrogen spin; `F` adds the proton spin and is
/// half-integer, stored doubled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SublevelLabel {
    pub f1: u32,
    pub f_twice: u32,
}

impl SublevelLabel {
    pub fn f(&self) -> f64 {
        self.f_twice as f64 / 2.0
    }
}

/// One hyperfine component of the optical line.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StickLine {
    /// Offset from the hyperfine-free line center (Hz).
    pub offset_hz: f64,
    /// Relative intensity; the full spectrum is normalized to sum 1.
    pub intensity: f64,
    pub lower: SublevelLabel,
    pub upper: SublevelLabel,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StickSpectrum {
    pub lines: Vec<StickLine>,
    /// Intensity-weighted mean offset (Hz).
    pub center_of_gravity_hz: f64,
}

fn check_level(j: u32, k: u32) -> Result<(), HyperfineError> {
    if j >= 2 && k >= 1 && k <= j && k % 3 == 0 {
        Ok(())
    } else {
        Err(HyperfineError::UnsupportedLevel { j, k })
    }
}

/// The 12 sublevel labels for a level with integer J.
fn sublevel_labels(j: u32) -> Vec<SublevelLabel> {
    let mut labels = Vec::with_capacity(12);
    for f1 in j - 1..=j + 1 {
        for df in [-3i64, -1, 1, 3] {
            let f_twice = 2 * f1 as i64 + df;
            assert!(f_twice > 0, "sublevel F must be positive");
            labels.push(SublevelLabel {
                f1,
                f_twice: f_twice as u32,
            });
        }
    }
    labels
}

/// First-order energy (Hz) of one sublevel.
fn sublevel_energy(c: &HyperfineConstants, j: u32, k: u32, label: &SublevelLabel) -> f64 {
    let j = j as f64;
    let k = k as f64;
    let f1 = label.f1 as f64;
    let f = label.f();
    let jj = j * (j + 1.0);
    let f1f1 = f1 * (f1 + 1.0);

    let c_n = f1f1 - I_N * (I_N + 1.0) - jj;
    let axis = 3.0 * k * k / jj - 1.0;
    let tensor_denom = (2.0 * j - 1.0) * (2.0 * j + 3.0);

    // <I_H . F1>, <J . F1>, <I_N . F1> and the Lande projections of
    // I_H . J and I_H . I_N through F1.
    let g = (f * (f + 1.0) - f1f1 - I_H * (I_H + 1.0)) / 2.0;
    let d_j = (f1f1 + jj - I_N * (I_N + 1.0)) / 2.0;
    let d_n = (f1f1 + I_N * (I_N + 1.0) - jj) / 2.0;
    let p_hj = g * d_j / f1f1;
    let p_hn = g * d_n / f1f1;

    let e_q = c.eqq_khz * axis * (0.75 * c_n * (c_n + 1.0) - I_N * (I_N + 1.0) * jj)
        / (2.0 * I_N * (2.0 * I_N - 1.0) * tensor_denom);
    let e_r = c.r_khz * c_n / 2.0;
    let e_s = c.s_khz * p_hj;
    let e_t = c.t_khz * (3.0 * c_n * p_hj - 2.0 * jj * p_hn) / tensor_denom;
    let e_u = c.u_khz * (3.0 * p_hj * p_hj + 1.5 * p_hj - I_H * (I_H + 1.0) * jj) / tensor_denom;

    (e_q + e_r + e_s + e_t + e_u) * 1e3
}

/// First-order energies (Hz, relative to the hyperfine-free level) of the 12
/// sublevels of a (J, K) level with K a multiple of 3.
pub fn sublevel_energies(
    c: &HyperfineConstants,
    j: u32,
    k: u32,
) -> Result<Vec<(SublevelLabel, f64)>, HyperfineError> {
    check_level(j, k)?;
    Ok(sublevel_labels(j)
        .into_iter()
        .map(|label| (label, sublevel_energy(c, j, k, &label)))
        .collect())
}

/// Wigner 6-j symbol with doubled-integer arguments (so half-integer angular
/// momenta are exact). Returns 0 when a triangle condition fails.
pub fn wigner_6j(a2: i64, b2: i64, c2: i64, d2: i64, e2: i64, f2: i64) -> f64 {
    fn triangle_ok(x2: i64, y2: i64, z2: i64) -> bool {
        (x2 + y2 + z2) % 2 == 0 && z2 >= (x2 - y2).abs() && z2 <= x2 + y2
    }
    if !(triangle_ok(a2, b2, c2)
        && triangle_ok(a2, e2, f2)
        && triangle_ok(d2, b2, f2)
        && triangle_ok(d2, e2, c2))
    {
        return 0.0;
    }

    fn fact(n: i64) -> f64 {
        debug_assert!(n >= 0);
        (1..=n).map(|k| k as f64).product()
    }
    fn delta(x2: i64, y2: i64, z2: i64) -> f64 {
        (fact((x2 + y2 - z2) / 2) * fact((x2 - y2 + z2) / 2) * fact((-x2 + y2 + z2) / 2)
            / fact((x2 + y2 + z2) / 2 + 1))
        .sqrt()
    }

    let t1 = (a2 + b2 + c2) / 2;
    let t2 = (a2 + e2 + f2) / 2;
    let t3 = (d2 + b2 + f2) / 2;
    let t4 = (d2 + e2 + c2) / 2;
    let s1 = (a2 + b2 + d2 + e2) / 2;
    let s2 = (b2 + c2 + e2 + f2) / 2;
    let s3 = (a2 + c2 + d2 + f2) / 2;

    let mut sum = 0.0;
    for t in t1.max(t2).max(t3).max(t4)..=s1.min(s2).min(s3) {
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * fact(t + 1)
            / (fact(t - t1)
                * fact(t - t2)
                * fact(t - t3)
                * fact(t - t4)
                * fact(s1 - t)
                * fact(s2 - t)
                * fact(s3 - t));
    }
    delta(a2, b2, c2) * delta(a2, e2, f2) * delta(d2, b2, f2) * delta(d2, e2, c2) * sum
}

/// Weak-field relative line strength for an electric-dipole transition
/// between hyperfine sublevels of a Q-branch line (same J).
fn line_strength(j: u32, lower: &SublevelLabel, upper: &SublevelLabel) -> f64 {
    let j2 = 2 * j as i64;
    let f1l2 = 2 * lower.f1 as i64;
    let f1u2 = 2 * upper.f1 as i64;
    let fl2 = lower.f_twice as i64;
    let fu2 = upper.f_twice as i64;
    let ih2 = 3; // 2 * I_H
    let in2 = 2; // 2 * I_N
    let w_f = wigner_6j(f1u2, fu2, ih2, fl2, f1l2, 2);
    let w_f1 = wigner_6j(j2, f1u2, in2, f1l2, j2, 2);
    ((fl2 + 1) * (fu2 + 1) * (f1l2 + 1) * (f1u2 + 1)) as f64 * w_f * w_f * w_f1 * w_f1
}

/// The 78-component stick spectrum of the optical line: every sublevel pair
/// with `|dF| <= 1`, at offset `E_upper - E_lower`, with normalized
/// weak-field intensities (the 12 `dF1 = dF = 0` components dominate).
pub fn stick_spectrum(
    lower: &HyperfineConstants,
    upper: &HyperfineConstants,
    j: u32,
    k: u32,
) -> Result<StickSpectrum, HyperfineError> {
    check_level(j, k)?;
    let lower_levels = sublevel_energies(lower, j, k)?;
    let upper_levels = sublevel_energies(upper, j, k)?;

    let mut lines = Vec::with_capacity(78);
    let mut total = KahanSum::default();
    for (ll, el) in &lower_levels {
        for (lu, eu) in &upper_levels {
            if (ll.f_twice as i64 - lu.f_twice as i64).abs() > 2 {
                continue;
            }
            let intensity = line_strength(j, ll, lu);
            total.add(intensity);
            lines.push(StickLine {
                offset_hz: eu - el,
                intensity,
                lower: *ll,
                upper: *lu,
            });
        }
    }

    let norm = total.total();
    for line in &mut lines {
        line.intensity /= norm;
    }
    let mut cog = KahanSum::default();
    for line in &lines {
        cog.add(line.intensity * line.offset_hz);
    }
    Ok(StickSpectrum {
        lines,
        center_of_gravity_hz: cog.total(),
    })
}

/// Crossover resonances: one entry per unordered pair of components sharing
/// a lower or an upper sublevel, at the midpoint frequency, weighted by the
/// geometric mean of the two intensities.
pub fn crossover_positions(s: &StickSpectrum) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (i, a) in s.lines.iter().enumerate() {
        for b in &s.lines[i + 1..] {
            if a.lower == b.lower || a.upper == b.upper {
                out.push((
                    0.5 * (a.offset_hz + b.offset_hz),
                    (a.intensity * b.intensity).sqrt(),
                ));
            }
        }
    }
    out
}

/// Result of fitting the hyperfine composite with a single profile.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BroadeningCorrection {
    /// Fractional inflation of the apparent Doppler width, in ppm.
    pub width_ppm: f64,
    /// Induced Boltzmann-constant correction, `-2 * width_ppm` (the constant
    /// scales with the squared width, and an inflated width biases it high).
    pub kb_ppm: f64,
    /// Fraction of the broadening contributed by components more than
    /// 400 kHz from the center of gravity.
    pub weak_fraction: f64,
}

/// Number of scan points used for the internal composite-vs-single fits.
const BROADENING_GRID: usize = 501;
const BROADENING_HALF_SPAN: f64 = 125e6;

fn composite_absorbance(
    sticks: &[(f64, f64)],
    env: &LineShapeParams,
    nu: f64,
) -> Result<f64, LineShapeError> {
    let mut acc = KahanSum::default();
    for &(offset, intensity) in sticks {
        if intensity == 0.0 {
            continue;
        }
        let mut p = *env;
        p.center = env.center + offset;
        let a = if env.theta > 0.0 {
            galatry_absorbance_expansion(&p, nu)?
        } else {
            voigt_absorbance(&p, nu)?
        };
        acc.add(intensity * a);
    }
    Ok(acc.total())
}

fn apparent_width(sticks: &[(f64, f64)], env: &LineShapeParams) -> Result<f64, HyperfineError> {
    let grid: Vec<f64> = (0..BROADENING_GRID)
        .map(|i| {
            env.center - BROADENING_HALF_SPAN
                + 2.0 * BROADENING_HALF_SPAN * i as f64 / (BROADENING_GRID - 1) as f64
        })
        .collect();
    let mut data = Vec::with_capacity(grid.len());
    for &nu in &grid {
        data.push(composite_absorbance(sticks, env, nu)?);
    }

    let env_copy = *env;
    let residuals = move |p: &[f64], out: &mut [f64]| -> Result<(), FitError> {
        let mut single = env_copy;
        single.doppler_hwhm_e = p[0];
        single.amplitude = p[1];
        single.center = p[2];
        if single.validate().is_err() {
            return Err(FitError::Rejected("invalid trial parameters".into()));
        }
        for (i, &nu) in grid.iter().enumerate() {
            let a = if single.theta > 0.0 {
                galatry_absorbance_expansion(&single, nu)
            } else {
                voigt_absorbance(&single, nu)
            }
            .map_err(|e| FitError::Rejected(e.to_string()))?;
            out[i] = a - data[i];
        }
        Ok(())
    };

    let opts = LmOptions {
        typical_scale: Some(vec![env.doppler_hwhm_e, env.amplitude.max(1e-6), 1e6]),
        ..Default::default()
    };
    let fit = levenberg_marquardt(
        residuals,
        &[env.doppler_hwhm_e, env.amplitude, env.center],
        BROADENING_GRID,
        &opts,
    )?;
    Ok(fit.params[0])
}

/// Width inflation caused by fitting the hyperfine composite with a single
/// profile of the same family (collisional width and narrowing parameter
/// held at the envelope values, so the entire effect lands on the Doppler
/// width, mirroring how the correction enters the thermometry budget).
pub fn broadening_correction(
    s: &StickSpectrum,
    env: &LineShapeParams,
) -> Result<BroadeningCorrection, HyperfineError> {
    env.validate()?;
    let cog = s.center_of_gravity_hz;
    let spread = s
        .lines
        .iter()
        .filter(|l| l.intensity > 0.0)
        .map(|l| (l.offset_hz - cog).abs())
        .fold(0.0, f64::max);
    if spread > 0.0 && env.doppler_hwhm_e / spread < 10.0 {
        return Err(HyperfineError::InsufficientSeparation(
            env.doppler_hwhm_e / spread,
        ));
    }

    let full: Vec<(f64, f64)> = s
        .lines
        .iter()
        .map(|l| (l.offset_hz, l.intensity))
        .collect();
    let w_full = apparent_width(&full, env)?;
    let width_ppm = (w_full / env.doppler_hwhm_e - 1.0) * 1e6;

    // Merge the far components (|offset - cog| > 400 kHz) into a single
    // stick at their own center of gravity; the width inflation that
    // remains is the near-component share.
    let mut near: Vec<(f64, f64)> = Vec::new();
    let mut far_weight = KahanSum::default();
    let mut far_moment = KahanSum::default();
    for l in &s.lines {
        if (l.offset_hz - cog).abs() > 400e3 {
            far_weight.add(l.intensity);
            far_moment.add(l.intensity * l.offset_hz);
        } else {
            near.push((l.offset_hz, l.intensity));
        }
    }
    let weak_fraction = if far_weight.total() > 0.0 {
        near.push((far_moment.total() / far_weight.total(), far_weight.total()));
        let w_merged = apparent_width(&near, env)?;
        let merged_ppm = (w_merged / env.doppler_hwhm_e - 1.0) * 1e6;
        if width_ppm.abs() > 0.0 {
            1.0 - merged_ppm / width_ppm
        } else {
            0.0
        }
    } else {
        0.0
    };

    Ok(BroadeningCorrection {
        width_ppm,
        kb_ppm: -2.0 * width_ppm,
        weak_fraction,
    })
}

/// Saturated-spectroscopy triplet model: three derivative-of-Lorentzian
/// components whose centers and relative weights follow from the strong
/// (`dF1 = dF = 0`) manifolds of the stick spectrum at the trial coupling
/// differences.
#[derive(Clone, Copy, Debug)]
pub struct TripletModel {
    pub delta_eqq_khz: f64,
    pub delta_r_khz: f64,
    /// Full width at half maximum of each Lorentzian (Hz).
    pub lorentz_fwhm_hz: f64,
    /// Common center offset added to the three multiplet positions (Hz).
    pub center_hz: f64,
    pub scale: f64,
    pub baseline_offset: f64,
    pub baseline_slope: f64,
}

/// Fixed S/T/U differences used when mapping (delta eQq, delta R) onto the
/// three multiplet centers; defaults to the measured excited-state values.
#[derive(Clone, Copy, Debug)]
pub struct TripletFixedDeltas {
    pub delta_s_khz: f64,
    pub delta_t_khz: f64,
    pub delta_u_khz: f64,
}

impl Default for TripletFixedDeltas {
    fn default() -> Self {
        let g = HyperfineConstants::ground_saq63();
        let e = HyperfineConstants::excited_saq63();
        TripletFixedDeltas {
            delta_s_khz: e.s_khz - g.s_khz,
            delta_t_khz: e.t_khz - g.t_khz,
            delta_u_khz: e.u_khz - g.u_khz,
        }
    }
}

/// Intensity-weighted centers (Hz) and weights of the three strong
/// multiplets, ordered by increasing F1.
pub fn triplet_centers(
    ground: &HyperfineConstants,
    delta_eqq_khz: f64,
    delta_r_khz: f64,
    fixed: &TripletFixedDeltas,
    j: u32,
    k: u32,
) -> Result<[(f64, f64); 3], HyperfineError> {
    let upper = HyperfineConstants {
        eqq_khz: ground.eqq_khz + delta_eqq_khz,
        r_khz: ground.r_khz + delta_r_khz,
        s_khz: ground.s_khz + fixed.delta_s_khz,
        t_khz: ground.t_khz + fixed.delta_t_khz,
        u_khz: ground.u_khz + fixed.delta_u_khz,
    };
    let sticks = stick_spectrum(ground, &upper, j, k)?;
    let mut centers = [(0.0, 0.0); 3];
    for (slot, f1) in (j - 1..=j + 1).enumerate() {
        let mut weight = KahanSum::default();
        let mut moment = KahanSum::default();
        for l in &sticks.lines {
            if l.lower.f1 == f1 && l.upper.f1 == f1 && l.lower.f_twice == l.upper.f_twice {
                weight.add(l.intensity);
                moment.add(l.intensity * l.offset_hz);
            }
        }
        centers[slot] = (moment.total() / weight.total(), weight.total());
    }
    Ok(centers)
}

/// Evaluate the triplet signal at one frequency offset given precomputed
/// multiplet centers (the centers depend only on the coupling differences,
/// so callers evaluating a whole scan compute them once).
pub fn triplet_signal_at(model: &TripletModel, centers: &[(f64, f64); 3], nu: f64) -> f64 {
    let half = 0.5 * model.lorentz_fwhm_hz;
    let mut acc = model.baseline_offset + model.baseline_slope * nu;
    for &(c, w) in centers {
        let x = nu - (c + model.center_hz);
        let denom = x * x + half * half;
        // d/dnu of the unit-height Lorentzian half^2 / (x^2 + half^2).
        acc += model.scale * w * (-2.0 * x * half * half) / (denom * denom);
    }
    acc
}

/// Evaluate the triplet signal at one frequency offset.
pub fn triplet_signal(
    model: &TripletModel,
    ground: &HyperfineConstants,
    fixed: &TripletFixedDeltas,
    j: u32,
    k: u32,
    nu: f64,
) -> Result<f64, HyperfineError> {
    let centers = triplet_centers(
        ground,
        model.delta_eqq_khz,
        model.delta_r_khz,
        fixed,
        j,
        k,
    )?;
    Ok(triplet_signal_at(model, &centers, nu))
}

#[derive(Clone, Debug)]
pub struct TripletFit {
    pub model: TripletModel,
    /// 1-sigma errors ordered as (delta_eqq, delta_r, fwhm, center, scale,
    /// baseline_offset, baseline_slope).
    pub errors: [f64; 7],
    pub chi2_reduced: f64,
    pub converged: bool,
    /// 1-sigma uncertainty (Hz) on the largest multiplet separation,
    /// propagated from the coupling-difference covariance.
    pub relative_position_sigma_hz: f64,
}

/// Weighted least-squares fit of the triplet model.
pub fn fit_triplet(
    freq_hz: &[f64],
    signal: &[f64],
    sigma: &[f64],
    init: &TripletModel,
    j: u32,
    k: u32,
) -> Result<TripletFit, HyperfineError> {
    check_level(j, k)?;
    assert!(freq_hz.len() == signal.len() && signal.len() == sigma.len());
    let ground = HyperfineConstants::ground_saq63();
    let fixed = TripletFixedDeltas::default();
    let n = freq_hz.len();

    let pack = |m: &TripletModel| -> Vec<f64> {
        vec![
            m.delta_eqq_khz,
            m.delta_r_khz,
            m.lorentz_fwhm_hz,
            m.center_hz,
            m.scale,
            m.baseline_offset,
            m.baseline_slope,
        ]
    };
    let unpack = |p: &[f64]| -> TripletModel {
        TripletModel {
            delta_eqq_khz: p[0],
            delta_r_khz: p[1],
            lorentz_fwhm_hz: p[2],
            center_hz: p[3],
            scale: p[4],
            baseline_offset: p[5],
            baseline_slope: p[6],
        }
    };

    let residuals = |p: &[f64], out: &mut [f64]| -> Result<(), FitError> {
        if p[2] <= 0.0 {
            return Err(FitError::Rejected("non-positive width".into()));
        }
        let m = unpack(p);
        let centers = triplet_centers(&ground, m.delta_eqq_khz, m.delta_r_khz, &fixed, j, k)
            .map_err(|e| FitError::Rejected(e.to_string()))?;
        for i in 0..n {
            out[i] = (triplet_signal_at(&m, &centers, freq_hz[i]) - signal[i]) / sigma[i];
        }
        Ok(())
    };

    let scale_guess = init.scale.abs().max(1e-12);
    let opts = LmOptions {
        typical_scale: Some(vec![
            100.0,
            1.0,
            init.lorentz_fwhm_hz.max(1e3),
            1e3,
            scale_guess,
            scale_guess,
            scale_guess / 1e5,
        ]),
        ..Default::default()
    };
    let fit = levenberg_marquardt(residuals, &pack(init), n, &opts)?;
    let model = unpack(&fit.params);
    let errors_vec = fit.param_errors();
    let mut errors = [0.0; 7];
    errors.copy_from_slice(&errors_vec);

    // Propagate (delta_eqq, delta_r) uncertainty onto the separation between
    // the outer multiplet centers.
    let span = |de: f64, dr: f64| -> Result<f64, HyperfineError> {
        let c = triplet_centers(&ground, de, dr, &fixed, j, k)?;
        Ok(c[2].0 - c[0].0)
    };
    let s0 = span(model.delta_eqq_khz, model.delta_r_khz)?;
    let h_e = 1e-3;
    let h_r = 1e-4;
    let d_de = (span(model.delta_eqq_khz + h_e, model.delta_r_khz)? - s0) / h_e;
    let d_dr = (span(model.delta_eqq_khz, model.delta_r_khz + h_r)? - s0) / h_r;
    let var = d_de * d_de * fit.covariance[(0, 0)]
        + d_dr * d_dr * fit.covariance[(1, 1)]
        + 2.0 * d_de * d_dr * fit.covariance[(0, 1)];
    let dof = (n as isize - 7).max(1) as f64;

    Ok(TripletFit {
        model,
        errors,
        chi2_reduced: fit.sse / dof,
        converged: fit.converged,
        relative_position_sigma_hz: var.max(0.0).sqrt(),
    })
}
