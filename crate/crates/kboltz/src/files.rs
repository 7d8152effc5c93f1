//! On-disk formats for spectra, campaigns, fit results, and study outputs.
//!
//! Every writer here is deterministic and timestamp-free: writing the same
//! data twice produces byte-identical files, which is the reproducibility
//! contract the command-line driver is tested against. Floating-point values
//! are emitted in shortest round-trip notation, so a read immediately after a
//! write reproduces the in-memory values bit for bit.
//!
//! Formats:
//! - Spectrum: CSV with header `freq_offset_hz,signal,sigma`, plus a JSON
//!   sidecar (same stem, `.json`) carrying the scan metadata — pressure,
//!   temperature, seed, full-scale level, and the generator truth block when
//!   present.
//! - Campaign: a directory of spectrum CSV/JSON pairs plus `manifest.json`
//!   listing the files and echoing the full generator configuration.
//! - Fit results: JSON lines, one flat record per spectrum (the covariance
//!   matrix is reduced to per-parameter sigmas), plus a campaign summary
//!   JSON for downstream reporting.
//! - Correction ledger: JSON array of (name, width_ppm, uncertainty_ppm,
//!   kind) rows.
//! - Bias study and hyperfine stick spectra: headered CSV for external
//!   plotting tools.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{CampaignResult, FitResult, LineShapeModel};
use crate::hyperfine::StickSpectrum;
use crate::synth::{campaign_iter, CampaignConfig, Spectrum, SpectrumMeta, SynthError};
use crate::thermometry::{BiasPoint, CorrectionLedger, LineReference};

/// Version stamp written into every JSON document with structural content.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FilesError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid file content: {0}")]
    Format(String),
    #[error("invalid spectrum on disk: {0}")]
    Synth(#[from] SynthError),
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// One row of a spectrum CSV.
#[derive(Serialize, Deserialize)]
struct SpectrumRow {
    freq_offset_hz: f64,
    signal: f64,
    sigma: f64,
}

/// Write a spectrum as a CSV of samples plus a JSON metadata sidecar.
pub fn write_spectrum(csv_path: &Path, s: &Spectrum) -> Result<(), FilesError> {
    let mut w = csv::Writer::from_path(csv_path)?;
    for i in 0..s.freq_offsets_hz.len() {
        w.serialize(SpectrumRow {
            freq_offset_hz: s.freq_offsets_hz[i],
            signal: s.signal[i],
            sigma: s.sigma[i],
        })?;
    }
    w.flush()?;
    write_json_pretty(&sidecar_path(csv_path), &s.meta)
}

/// Read a spectrum CSV and its metadata sidecar; the result is validated.
pub fn read_spectrum(csv_path: &Path) -> Result<Spectrum, FilesError> {
    let mut r = csv::Reader::from_path(csv_path)?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["freq_offset_hz", "signal", "sigma"] {
        return Err(FilesError::Format(format!(
            "unexpected spectrum CSV header in {}",
            csv_path.display()
        )));
    }
    let mut freq_offsets_hz = Vec::new();
    let mut signal = Vec::new();
    let mut sigma = Vec::new();
    for row in r.deserialize::<SpectrumRow>() {
        let row = row?;
        freq_offsets_hz.push(row.freq_offset_hz);
        signal.push(row.signal);
        sigma.push(row.sigma);
    }
    let meta: SpectrumMeta = read_json(&sidecar_path(csv_path))?;
    let s = Spectrum {
        freq_offsets_hz,
        signal,
        sigma,
        meta,
    };
    s.validate()?;
    Ok(s)
}

/// Campaign directory index: the spectrum files (relative names, generation
/// order) and the fully-resolved generator configuration. The baseline note
/// flags that the sinusoidal fringe is a stand-in for an undocumented
/// instrumental background, not a calibrated model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignManifest {
    pub version: u32,
    pub master_seed: u64,
    pub spectra: Vec<String>,
    pub config: CampaignConfig,
    pub baseline_note: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Generate a campaign and write it under `dir` (created if missing), one
/// CSV/JSON pair per spectrum plus `manifest.json`. Spectra are streamed:
/// memory use is bounded by a single scan regardless of campaign size.
pub fn write_campaign(
    dir: &Path,
    cfg: &CampaignConfig,
    master_seed: u64,
) -> Result<CampaignManifest, FilesError> {
    fs::create_dir_all(dir)?;
    let iter = campaign_iter(cfg, master_seed)?;
    let digits = iter.total().max(1).ilog10() as usize + 1;
    let mut names = Vec::with_capacity(iter.total());
    for (i, s) in iter.enumerate() {
        let s = s?;
        let name = format!("spectrum_{:0digits$}.csv", i, digits = digits.max(4));
        write_spectrum(&dir.join(&name), &s)?;
        names.push(name);
    }
    let manifest = CampaignManifest {
        version: FORMAT_VERSION,
        master_seed,
        spectra: names,
        config: cfg.clone(),
        baseline_note: "sinusoidal fringe is a stand-in for the undocumented \
                        instrumental baseline"
            .to_string(),
    };
    write_json_pretty(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Read a campaign manifest from a directory.
pub fn read_manifest(dir: &Path) -> Result<CampaignManifest, FilesError> {
    let m: CampaignManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if m.version != FORMAT_VERSION {
        return Err(FilesError::Format(format!(
            "unsupported manifest version {}",
            m.version
        )));
    }
    Ok(m)
}

/// Read every spectrum listed in a campaign directory's manifest, in
/// manifest order.
pub fn read_campaign(dir: &Path) -> Result<(CampaignManifest, Vec<Spectrum>), FilesError> {
    let manifest = read_manifest(dir)?;
    let mut spectra = Vec::with_capacity(manifest.spectra.len());
    for name in &manifest.spectra {
        spectra.push(read_spectrum(&dir.join(name))?);
    }
    Ok((manifest, spectra))
}

/// Flat per-spectrum fit record for JSON-lines export: the scalar content of
/// a fit result, with the covariance matrix reduced to per-parameter sigmas.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub gauge_pressure_pa: f64,
    pub fitted_pressure_pa: f64,
    pub pressure_error_pa: f64,
    pub width_hz: f64,
    pub width_error_hz: f64,
    pub center_hz: f64,
    pub scale: f64,
    pub baseline_offset: f64,
    pub baseline_slope: f64,
    pub theta: f64,
    pub homogeneous_hw_hz: f64,
    pub chi2_reduced: f64,
    pub n_points: usize,
    pub converged: bool,
    pub model: LineShapeModel,
    pub g_fixed_hz_per_pa: f64,
    /// 1-sigma errors in fit-vector order (width, pressure, center, scale,
    /// baseline offset, baseline slope).
    pub param_errors: [f64; 6],
}

impl From<&FitResult> for FitRecord {
    fn from(f: &FitResult) -> Self {
        FitRecord {
            gauge_pressure_pa: f.gauge_pressure_pa,
            fitted_pressure_pa: f.pressure_pa,
            pressure_error_pa: f.pressure_error_pa,
            width_hz: f.params.doppler_hwhm_e,
            width_error_hz: f.width_error_hz,
            center_hz: f.params.center,
            scale: f.scale_value,
            baseline_offset: f.params.baseline_offset,
            baseline_slope: f.params.baseline_slope,
            theta: f.params.theta,
            homogeneous_hw_hz: f.params.homogeneous_hw,
            chi2_reduced: f.chi2_reduced,
            n_points: f.n_points,
            converged: f.converged,
            model: f.model,
            g_fixed_hz_per_pa: f.g_fixed_hz_per_pa,
            param_errors: f.param_errors,
        }
    }
}

impl FitRecord {
    /// Rebuild a fit result good enough for the aggregation stages (weighted
    /// means, subset splits, uncertainty-vs-time). The covariance matrix is
    /// not stored on disk, so it comes back as zeros and the amplitude
    /// prefactor as 1; neither enters any aggregation.
    pub fn to_fit_result(&self) -> FitResult {
        FitResult {
            params: crate::lineshape::LineShapeParams {
                doppler_hwhm_e: self.width_hz,
                homogeneous_hw: self.homogeneous_hw_hz,
                center: self.center_hz,
                amplitude: 1.0,
                theta: self.theta,
                baseline_offset: self.baseline_offset,
                baseline_slope: self.baseline_slope,
            },
            pressure_pa: self.fitted_pressure_pa,
            pressure_error_pa: self.pressure_error_pa,
            width_error_hz: self.width_error_hz,
            param_errors: self.param_errors,
            covariance: nalgebra::DMatrix::zeros(6, 6),
            chi2_reduced: self.chi2_reduced,
            n_points: self.n_points,
            converged: self.converged,
            model: self.model,
            g_fixed_hz_per_pa: self.g_fixed_hz_per_pa,
            gauge_pressure_pa: self.gauge_pressure_pa,
            scale_value: self.scale,
        }
    }
}

/// Write fit results as JSON lines, one record per spectrum, input order.
pub fn write_fit_records(path: &Path, fits: &[FitResult]) -> Result<(), FilesError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for f in fits {
        serde_json::to_writer(&mut w, &FitRecord::from(f))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a JSON-lines fit record file; blank lines are ignored.
pub fn read_fit_records(path: &Path) -> Result<Vec<FitRecord>, FilesError> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Campaign-level analysis summary: the shared-coefficient search outcome,
/// the weighted mean width, and the implied Boltzmann constant under the
/// stated line reference. This is the document the reporting stage consumes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSummary {
    pub version: u32,
    pub model: LineShapeModel,
    pub n_spectra: usize,
    pub g_star_hz_per_pa: f64,
    pub g_star_error_hz_per_pa: f64,
    pub slope_at_g_star: f64,
    pub slope_error: f64,
    pub width_mean_hz: f64,
    pub width_sigma_hz: f64,
    pub width_sigma_total_hz: f64,
    pub dispersion_ratio: f64,
    pub line: LineReference,
    /// k_B implied by the weighted mean width, before ledger corrections.
    pub kb_raw: f64,
    /// Relative statistical uncertainty of kb_raw in ppm (twice the width's).
    pub kb_statistical_ppm: f64,
}

impl CampaignSummary {
    /// Assemble a summary from a campaign result and the line reference used
    /// to convert widths to k_B.
    pub fn new(model: LineShapeModel, res: &CampaignResult, line: &LineReference) -> Self {
        let kb_raw = crate::thermometry::kb_from_width(res.width_mean_hz, line);
        CampaignSummary {
            version: FORMAT_VERSION,
            model,
            n_spectra: res.per_spectrum.len(),
            g_star_hz_per_pa: res.g_star_hz_per_pa,
            g_star_error_hz_per_pa: res.g_star_error_hz_per_pa,
            slope_at_g_star: res.slope_at_g_star,
            slope_error: res.slope_error,
            width_mean_hz: res.width_mean_hz,
            width_sigma_hz: res.width_sigma_hz,
            width_sigma_total_hz: res.width_sigma_total_hz,
            dispersion_ratio: res.dispersion_ratio,
            line: *line,
            kb_raw,
            kb_statistical_ppm: 2.0e6 * res.width_sigma_total_hz / res.width_mean_hz,
        }
    }
}

/// Write a campaign summary as pretty JSON.
pub fn write_summary(path: &Path, summary: &CampaignSummary) -> Result<(), FilesError> {
    write_json_pretty(path, summary)
}

/// Read a campaign summary.
pub fn read_summary(path: &Path) -> Result<CampaignSummary, FilesError> {
    let s: CampaignSummary = read_json(path)?;
    if s.version != FORMAT_VERSION {
        return Err(FilesError::Format(format!(
            "unsupported summary version {}",
            s.version
        )));
    }
    Ok(s)
}

/// Write a correction ledger as pretty JSON.
pub fn write_ledger(path: &Path, ledger: &CorrectionLedger) -> Result<(), FilesError> {
    write_json_pretty(path, ledger)
}

/// Read a correction ledger.
pub fn read_ledger(path: &Path) -> Result<CorrectionLedger, FilesError> {
    read_json(path)
}

/// Write bias-study points as CSV (`p_max_pa,bias_ppm,sigma_ppm`).
pub fn write_bias_csv(path: &Path, points: &[BiasPoint]) -> Result<(), FilesError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a bias-study CSV.
pub fn read_bias_csv(path: &Path) -> Result<Vec<BiasPoint>, FilesError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<BiasPoint>() {
        out.push(row?);
    }
    Ok(out)
}

/// One row of a stick-spectrum CSV.
#[derive(Serialize, Deserialize)]
struct StickRow {
    offset_hz: f64,
    intensity: f64,
    f1_low: u32,
    f_low: f64,
    f1_up: u32,
    f_up: f64,
}

/// Write a hyperfine stick spectrum as CSV
/// (`offset_hz,intensity,f1_low,f_low,f1_up,f_up`).
pub fn write_stick_csv(path: &Path, sticks: &StickSpectrum) -> Result<(), FilesError> {
    let mut w = csv::Writer::from_path(path)?;
    for l in &sticks.lines {
        w.serialize(StickRow {
            offset_hz: l.offset_hz,
            intensity: l.intensity,
            f1_low: l.lower.f1,
            f_low: l.lower.f(),
            f1_up: l.upper.f1,
            f_up: l.upper.f(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), FilesError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FilesError> {
    let r = BufReader::new(fs::File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::{fit_spectrum, FitConfig};
    use crate::synth::synth_campaign;
    use crate::thermometry::LedgerKind;

    fn small_config() -> CampaignConfig {
        CampaignConfig {
            pressures_pa: vec![0.8, 1.6],
            spectra_per_pressure: 2,
            n_points: 64,
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn spectrum_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let spectra = synth_campaign(&cfg, 11).unwrap();
        let path = dir.path().join("s.csv");
        write_spectrum(&path, &spectra[0]).unwrap();
        let back = read_spectrum(&path).unwrap();
        assert_eq!(back.freq_offsets_hz, spectra[0].freq_offsets_hz);
        assert_eq!(back.signal, spectra[0].signal);
        assert_eq!(back.sigma, spectra[0].sigma);
        assert_eq!(back.meta.pressure_pa, spectra[0].meta.pressure_pa);
        assert_eq!(back.meta.seed, spectra[0].meta.seed);
        let truth = back.meta.truth.unwrap();
        assert_eq!(
            truth.doppler_hwhm_e,
            spectra[0].meta.truth.unwrap().doppler_hwhm_e
        );
    }

    #[test]
    fn campaign_round_trips_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let manifest = write_campaign(&a, &cfg, 3).unwrap();
        write_campaign(&b, &cfg, 3).unwrap();
        assert_eq!(manifest.spectra.len(), 4);
        for name in manifest.spectra.iter().chain([&MANIFEST_FILE.to_string()]) {
            let x = fs::read(a.join(name)).unwrap();
            let y = fs::read(b.join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between identical runs");
        }
        let (m, spectra) = read_campaign(&a).unwrap();
        assert_eq!(m.master_seed, 3);
        assert_eq!(spectra.len(), 4);
        let direct = synth_campaign(&cfg, 3).unwrap();
        for (s, d) in spectra.iter().zip(&direct) {
            assert_eq!(s.signal, d.signal);
        }
        assert!(m.baseline_note.contains("stand-in"));
    }

    #[test]
    fn noiseless_config_survives_manifest_json() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CampaignConfig {
            snr_at_full_absorption: f64::INFINITY,
            ..small_config()
        };
        write_campaign(dir.path(), &cfg, 1).unwrap();
        let m = read_manifest(dir.path()).unwrap();
        assert!(m.config.snr_at_full_absorption.is_infinite());
    }

    #[test]
    fn fit_records_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let spectra = synth_campaign(&cfg, 5).unwrap();
        let fc = FitConfig::from_campaign(&cfg);
        let fits: Vec<FitResult> = spectra
            .iter()
            .map(|s| {
                fit_spectrum(
                    s,
                    cfg.g_truth_hz_per_pa,
                    LineShapeModel::GalatryExpansion,
                    &fc,
                )
                .unwrap()
            })
            .collect();
        let path = dir.path().join("fits.jsonl");
        write_fit_records(&path, &fits).unwrap();
        let back = read_fit_records(&path).unwrap();
        assert_eq!(back.len(), fits.len());
        for (r, f) in back.iter().zip(&fits) {
            assert_eq!(r.width_hz, f.params.doppler_hwhm_e);
            assert_eq!(r.width_error_hz, f.width_error_hz);
            assert_eq!(r.fitted_pressure_pa, f.pressure_pa);
            assert_eq!(r.param_errors, f.param_errors);
            assert_eq!(r.model, f.model);
            assert!(r.converged);
        }
    }

    #[test]
    fn summary_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let line = LineReference::ammonia_ice_point();
        let summary = CampaignSummary {
            version: FORMAT_VERSION,
            model: LineShapeModel::Voigt,
            n_spectra: 7,
            g_star_hz_per_pa: 1.24e5,
            g_star_error_hz_per_pa: 2.0e3,
            slope_at_g_star: -0.4,
            slope_error: 1.9,
            width_mean_hz: 49.883e6,
            width_sigma_hz: 120.0,
            width_sigma_total_hz: 260.0,
            dispersion_ratio: 1.1,
            line,
            kb_raw: 1.3806e-23,
            kb_statistical_ppm: 10.4,
        };
        let path = dir.path().join("summary.json");
        write_summary(&path, &summary).unwrap();
        let back = read_summary(&path).unwrap();
        assert_eq!(back.width_mean_hz, summary.width_mean_hz);
        assert_eq!(back.kb_raw, summary.kb_raw);
        assert_eq!(back.model, summary.model);
        assert_eq!(back.line.nu0_hz, line.nu0_hz);
    }

    #[test]
    fn ledger_file_round_trips_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.json");
        let ledger = CorrectionLedger::default();
        write_ledger(&path, &ledger).unwrap();
        let back = read_ledger(&path).unwrap();
        assert_eq!(back.entries.len(), ledger.entries.len());
        assert_eq!(back.entries[1].width_ppm, 4.355);
        assert_eq!(back.entries[1].kind, LedgerKind::Correction);
    }

    #[test]
    fn bias_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bias.csv");
        let pts = vec![
            BiasPoint {
                p_max_pa: 1.0,
                bias_ppm: -12.5,
                sigma_ppm: 30.0,
            },
            BiasPoint {
                p_max_pa: 2.5,
                bias_ppm: -139.0,
                sigma_ppm: 28.0,
            },
        ];
        write_bias_csv(&path, &pts).unwrap();
        let back = read_bias_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].bias_ppm, -139.0);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("p_max_pa,bias_ppm,sigma_ppm"));
    }

    #[test]
    fn stick_csv_has_all_components() {
        use crate::hyperfine::{stick_spectrum, HyperfineConstants};
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sticks.csv");
        let s = stick_spectrum(
            &HyperfineConstants::ground_saq63(),
            &HyperfineConstants::excited_saq63(),
            6,
            3,
        )
        .unwrap();
        write_stick_csv(&path, &s).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "offset_hz,intensity,f1_low,f_low,f1_up,f_up"
        );
        assert_eq!(lines.count(), s.lines.len());
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "a,b,c\n1.0,2.0,3.0\n").unwrap();
        fs::write(sidecar_path(&path), "{}").unwrap();
        match read_spectrum(&path) {
            Err(FilesError::Format(msg)) => assert!(msg.contains("header")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        match read_manifest(dir.path()) {
            Err(FilesError::Io(_)) => {}
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_summary_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        fs::write(&path, "{\"version\":1,\"surprise\":true}").unwrap();
        assert!(matches!(read_summary(&path), Err(FilesError::Json(_))));
    }
}
