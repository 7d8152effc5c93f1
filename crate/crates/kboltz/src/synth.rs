//! Synthetic linear-absorption spectra and measurement campaigns.
//!
//! The generator works in transmission space: the true absorbance profile is
//! computed from a trusted Boltzmann-constant value and the gas state, passed
//! through Lambert-Beer, and wrapped in the instrumental effects a real scan
//! carries — a sinusoidal baseline fringe, multiplicative intensity noise on
//! the transmitted light, and an additive detection floor. Noise is largest
//! where transmission is highest; the configured signal-to-noise ratio is
//! referenced to full absorption, where only the additive floor remains.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{
    DIFFUSION_D0_M2S, KB_CODATA, MASS_NH3_KG, NU0_SAQ63_HZ, P_DIFFUSION_REF_PA, SPEED_OF_LIGHT,
    T_ICE_POINT_K,
};
use crate::hyperfine::{stick_spectrum, HyperfineConstants, HyperfineError, StickSpectrum};
use crate::ksum::KahanSum;
use crate::lineshape::{
    galatry_absorbance_expansion, theta_from_conditions, GasConditions, LineShapeError,
    LineShapeParams,
};

/// JSON has no literal for IEEE infinity; a noiseless campaign stores its
/// signal-to-noise ratio as `null` and reads it back as `f64::INFINITY`.
mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("line-shape evaluation failed: {0}")]
    LineShape(#[from] LineShapeError),
    #[error("hyperfine structure failed: {0}")]
    Hyperfine(#[from] HyperfineError),
}

/// Metadata carried with each synthetic spectrum.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub pressure_pa: f64,
    pub temperature_k: f64,
    pub scan_span_hz: f64,
    pub seed: u64,
    /// Full-scale signal level (transmitted intensity far from the line).
    pub scale: f64,
    /// Generator truth for later scoring; absent for real data.
    pub truth: Option<LineShapeParams>,
}

/// One recorded scan: signal and per-point noise estimate versus frequency
/// offset from the nominal line center.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    pub freq_offsets_hz: Vec<f64>,
    pub signal: Vec<f64>,
    pub sigma: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn validate(&self) -> Result<(), SynthError> {
        let n = self.freq_offsets_hz.len();
        if n < 16 {
            return Err(SynthError::InvalidConfig("fewer than 16 points"));
        }
        if self.signal.len() != n || self.sigma.len() != n {
            return Err(SynthError::InvalidConfig("mismatched array lengths"));
        }
        if !self
            .freq_offsets_hz
            .windows(2)
            .all(|w| w[1] > w[0] && w[0].is_finite() && w[1].is_finite())
        {
            return Err(SynthError::InvalidConfig(
                "frequency offsets must increase strictly",
            ));
        }
        if !self.sigma.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(SynthError::InvalidConfig("sigma must be positive"));
        }
        Ok(())
    }
}

/// Campaign description: which pressures to visit, how many scans per
/// pressure, the gas and line constants used as truth, and the noise and
/// baseline composition of each scan.
///
/// In JSON, omitted fields take these defaults and unknown fields are
/// rejected (typo protection for configuration files).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub pressures_pa: Vec<f64>,
    pub spectra_per_pressure: usize,
    /// Signal-to-noise ratio at full absorption (additive floor only).
    /// `f64::INFINITY` produces noiseless scans with a tiny reported sigma.
    #[serde(with = "infinite_as_null")]
    pub snr_at_full_absorption: f64,
    pub temperature_k: f64,
    /// Boltzmann constant used to generate the Doppler width.
    pub kb_truth: f64,
    pub molecular_mass_kg: f64,
    pub nu0_hz: f64,
    /// Peak-amplitude of the sinusoidal baseline fringe, as a fraction of
    /// full scale.
    pub baseline_drift_amplitude: f64,
    /// Collisional half-width coefficient (Hz/Pa).
    pub g_truth_hz_per_pa: f64,
    /// Generate the 78-component hyperfine composite instead of a single
    /// profile.
    pub include_hyperfine: bool,
    pub n_points: usize,
    pub scan_span_hz: f64,
    /// Full-scale signal level.
    pub scale: f64,
    /// Peak absorbance per pascal of gas pressure.
    pub absorbance_per_pa: f64,
    /// Ratio of the multiplicative (transmission-proportional) noise to the
    /// additive floor at unit transmission.
    pub noise_transmission_ratio: f64,
    /// Period of the baseline fringe (Hz of detuning).
    pub fringe_period_hz: f64,
    /// Multiplier on the soft-collision narrowing parameter of the generated
    /// truth (1 = physical value from the gas conditions, 0 = pure Voigt
    /// truth). A model-validation control, not a physical setting.
    pub theta_scale: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            pressures_pa: (1..=10).map(|i| 0.25 * i as f64).collect(),
            spectra_per_pressure: 25,
            snr_at_full_absorption: 1e3,
            temperature_k: T_ICE_POINT_K,
            kb_truth: KB_CODATA,
            molecular_mass_kg: MASS_NH3_KG,
            nu0_hz: NU0_SAQ63_HZ,
            baseline_drift_amplitude: 1e-4,
            g_truth_hz_per_pa: 1.24e5,
            include_hyperfine: false,
            n_points: 500,
            scan_span_hz: 250e6,
            scale: 1.0,
            absorbance_per_pa: 1.2,
            noise_transmission_ratio: 2.0,
            fringe_period_hz: 180e6,
            theta_scale: 1.0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.pressures_pa.is_empty() {
            return Err(SynthError::InvalidConfig("no pressures"));
        }
        if !self
            .pressures_pa
            .iter()
            .all(|&p| p > 0.0 && p <= 10.0 && p.is_finite())
        {
            return Err(SynthError::InvalidConfig(
                "pressures must lie in (0, 10] Pa",
            ));
        }
        if self.spectra_per_pressure == 0 {
            return Err(SynthError::InvalidConfig("zero spectra per pressure"));
        }
        if !(self.snr_at_full_absorption > 0.0) {
            return Err(SynthError::InvalidConfig("snr must be positive"));
        }
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            return Err(SynthError::InvalidConfig("temperature must be positive"));
        }
        if !(self.kb_truth > 0.0 && self.kb_truth.is_finite()) {
            return Err(SynthError::InvalidConfig("kb_truth must be positive"));
        }
        if !(self.molecular_mass_kg > 0.0 && self.nu0_hz > 0.0) {
            return Err(SynthError::InvalidConfig("bad molecular constants"));
        }
        if self.n_points < 16 {
            return Err(SynthError::InvalidConfig("need at least 16 points"));
        }
        if !(self.scan_span_hz > 0.0 && self.scale > 0.0 && self.absorbance_per_pa > 0.0) {
            return Err(SynthError::InvalidConfig("bad scan geometry"));
        }
        if !(self.g_truth_hz_per_pa >= 0.0
            && self.baseline_drift_amplitude >= 0.0
            && self.noise_transmission_ratio >= 0.0
            && self.fringe_period_hz > 0.0)
        {
            return Err(SynthError::InvalidConfig("bad noise/baseline parameters"));
        }
        if !(self.theta_scale >= 0.0 && self.theta_scale.is_finite()) {
            return Err(SynthError::InvalidConfig("theta_scale must be finite and >= 0"));
        }
        Ok(())
    }

    /// Doppler e-fold half-width implied by the configured truth.
    pub fn doppler_width_truth(&self) -> f64 {
        self.nu0_hz / SPEED_OF_LIGHT
            * (2.0 * self.kb_truth * self.temperature_k / self.molecular_mass_kg).sqrt()
    }

    /// Gas state at one of the campaign pressures.
    pub fn gas_conditions(&self, pressure_pa: f64) -> GasConditions {
        GasConditions {
            pressure_pa,
            temperature_k: self.temperature_k,
            molecular_mass_kg: self.molecular_mass_kg,
            diffusion_d0_m2s: DIFFUSION_D0_M2S,
            diffusion_p0_pa: P_DIFFUSION_REF_PA,
            wavelength_m: SPEED_OF_LIGHT / self.nu0_hz,
        }
    }

    /// True line-shape parameters at one of the campaign pressures.
    pub fn truth_params(&self, pressure_pa: f64) -> LineShapeParams {
        let width = self.doppler_width_truth();
        LineShapeParams {
            doppler_hwhm_e: width,
            homogeneous_hw: self.g_truth_hz_per_pa * pressure_pa,
            center: 0.0,
            amplitude: self.absorbance_per_pa * pressure_pa,
            theta: self.theta_scale
                * theta_from_conditions(&self.gas_conditions(pressure_pa), width),
            baseline_offset: 0.0,
            baseline_slope: 0.0,
        }
    }
}

/// Absorbance at one offset: single profile, or the hyperfine composite.
fn absorbance(
    params: &LineShapeParams,
    sticks: Option<&StickSpectrum>,
    nu: f64,
) -> Result<f64, SynthError> {
    match sticks {
        None => Ok(galatry_absorbance_expansion(params, nu)?),
        Some(s) => {
            let mut acc = KahanSum::default();
            for line in &s.lines {
                if line.intensity == 0.0 {
                    continue;
                }
                let mut p = *params;
                p.center = params.center + line.offset_hz;
                acc.add(line.intensity * galatry_absorbance_expansion(&p, nu)?);
            }
            Ok(acc.total())
        }
    }
}

fn synth_spectrum_inner(
    cfg: &CampaignConfig,
    pressure_pa: f64,
    seed: u64,
    sticks: Option<&StickSpectrum>,
) -> Result<Spectrum, SynthError> {
    let truth = cfg.truth_params(pressure_pa);
    truth.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fringe_phase = rng.gen::<f64>() * std::f64::consts::TAU;

    let n = cfg.n_points;
    let step = cfg.scan_span_hz / n as f64;
    let noise_floor = if cfg.snr_at_full_absorption.is_finite() {
        cfg.scale / cfg.snr_at_full_absorption
    } else {
        0.0
    };
    let ratio = cfg.noise_transmission_ratio;

    let mut freq = Vec::with_capacity(n);
    let mut signal = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let nu = -0.5 * cfg.scan_span_hz + step * i as f64;
        let a = absorbance(&truth, sticks, nu)?;
        let transmission = (-a).exp();
        let fringe = cfg.baseline_drift_amplitude
            * cfg.scale
            * (std::f64::consts::TAU * nu / cfg.fringe_period_hz + fringe_phase).sin();
        let xi_mult: f64 = rng.sample(StandardNormal);
        let xi_add: f64 = rng.sample(StandardNormal);
        let value = fringe
            + cfg.scale * transmission * (1.0 + ratio * noise_floor / cfg.scale * xi_mult)
            + noise_floor * xi_add;
        let rt = ratio * transmission;
        // Quadrature of the independent multiplicative and additive parts;
        // floored at a tiny positive value so noiseless scans stay valid.
        let s = (noise_floor * (1.0 + rt * rt).sqrt()).max(cfg.scale * 1e-15);
        freq.push(nu);
        signal.push(value);
        sigma.push(s);
    }

    let spectrum = Spectrum {
        freq_offsets_hz: freq,
        signal,
        sigma,
        meta: SpectrumMeta {
            pressure_pa,
            temperature_k: cfg.temperature_k,
            scan_span_hz: cfg.scan_span_hz,
            seed,
            scale: cfg.scale,
            truth: Some(truth),
        },
    };
    spectrum.validate()?;
    Ok(spectrum)
}

/// Generate one scan at the given pressure, deterministically from the seed.
pub fn synth_spectrum(
    cfg: &CampaignConfig,
    pressure_pa: f64,
    seed: u64,
) -> Result<Spectrum, SynthError> {
    cfg.validate()?;
    if !(pressure_pa > 0.0) {
        return Err(SynthError::InvalidConfig("pressure must be positive"));
    }
    let sticks = if cfg.include_hyperfine {
        Some(line_sticks()?)
    } else {
        None
    };
    synth_spectrum_inner(cfg, pressure_pa, seed, sticks.as_ref())
}

fn line_sticks() -> Result<StickSpectrum, HyperfineError> {
    stick_spectrum(
        &HyperfineConstants::ground_saq63(),
        &HyperfineConstants::excited_saq63(),
        6,
        3,
    )
}

/// SplitMix64 finalizer: maps the campaign seed and scan index onto
/// independent per-scan seeds.
fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Streaming campaign generator: yields scans one at a time so arbitrarily
/// large campaigns run in bounded memory.
pub struct CampaignIter {
    cfg: CampaignConfig,
    master_seed: u64,
    sticks: Option<StickSpectrum>,
    index: usize,
}

impl CampaignIter {
    pub fn total(&self) -> usize {
        self.cfg.pressures_pa.len() * self.cfg.spectra_per_pressure
    }
}

impl Iterator for CampaignIter {
    type Item = Result<Spectrum, SynthError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.index >= self.total() {
            return None;
        }
        let p_idx = self.index / self.cfg.spectra_per_pressure;
        let pressure = self.cfg.pressures_pa[p_idx];
        let seed = derive_seed(self.master_seed, self.index as u64);
        let item = synth_spectrum_inner(&self.cfg, pressure, seed, self.sticks.as_ref());
        self.index += 1;
        Some(item)
    }
}

/// Open a streaming campaign.
pub fn campaign_iter(cfg: &CampaignConfig, master_seed: u64) -> Result<CampaignIter, SynthError> {
    cfg.validate()?;
    let sticks = if cfg.include_hyperfine {
        Some(line_sticks()?)
    } else {
        None
    };
    Ok(CampaignIter {
        cfg: cfg.clone(),
        master_seed,
        sticks,
        index: 0,
    })
}

/// Generate a whole campaign in memory (convenience wrapper over the
/// streaming interface; scan i gets seed SplitMix64(master, i)).
pub fn synth_campaign(
    cfg: &CampaignConfig,
    master_seed: u64,
) -> Result<Vec<Spectrum>, SynthError> {
    campaign_iter(cfg, master_seed)?.collect()
}
