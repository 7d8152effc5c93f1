//! Command-line driver for the Doppler-broadening thermometry toolkit.
//!
//! Ties the pipeline together: generate synthetic campaigns, fit them with a
//! shared collisional coefficient, run the hyperfine and model-bias studies,
//! and emit Boltzmann-constant reports plus plot-ready CSV data.
//!
//! Every command is deterministic under fixed seeds and configuration, and
//! every command that writes files also writes a manifest echoing the fully
//! resolved parameters. Exit codes: 0 success, 2 configuration or input
//! error, 3 numerical failure (non-convergence, bracket failure).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use kboltz::constants::KB_CODATA;
use kboltz::files::{
    self, CampaignSummary, FilesError, FitRecord, FORMAT_VERSION,
};
use kboltz::fitting::{
    bootstrap_width_error, fit_spectrum, search_g, subset_consistency, uncertainty_vs_time,
    FitConfig, FittingError, LineShapeModel,
};
use kboltz::hyperfine::{
    broadening_correction, stick_spectrum, HyperfineConstants, HyperfineError,
};
use kboltz::lineshape::LineShapeParams;
use kboltz::synth::CampaignConfig;
use kboltz::thermometry::{
    apply_ledger, voigt_galatry_bias, width_from_kb, CorrectionLedger, LedgerKind,
    LineReference, ThermometryError,
};
use kboltz::Parallelism;

// ---------------------------------------------------------------------------
// Error handling: configuration and input problems exit 2, numerical
// failures exit 3.

#[derive(Debug)]
enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<FilesError> for CliError {
    fn from(e: FilesError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FittingError> for CliError {
    fn from(e: FittingError) -> Self {
        match e {
            FittingError::Spectrum(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ThermometryError> for CliError {
    fn from(e: ThermometryError) -> Self {
        match e {
            ThermometryError::Fitting(inner) => CliError::from(inner),
            ThermometryError::InvalidReference(_)
            | ThermometryError::SubEnsembleTooSmall { .. } => CliError::Config(e.to_string()),
            ThermometryError::Synth(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<HyperfineError> for CliError {
    fn from(e: HyperfineError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn config_err<T: std::fmt::Display>(msg: T) -> CliError {
    CliError::Config(msg.to_string())
}

// ---------------------------------------------------------------------------
// Argument grammar.

#[derive(Parser)]
#[command(
    name = "kboltz",
    about = "Doppler-broadening thermometry pipeline: synthetic campaigns, \
             constrained line fits, and Boltzmann-constant reports",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Voigt,
    Galatry,
}

impl From<ModelArg> for LineShapeModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Voigt => LineShapeModel::Voigt,
            ModelArg::Galatry => LineShapeModel::GalatryExpansion,
        }
    }
}

fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected two comma-separated values, e.g. 8e4,2e5".to_string());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err("bracket must satisfy 0 < lo < hi".to_string());
    }
    Ok((lo, hi))
}

#[derive(Args, Clone, Copy)]
struct WorkerArg {
    /// Worker threads for per-spectrum fits: 0 = all cores, 1 = sequential.
    /// Results are identical for every setting.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl WorkerArg {
    fn parallelism(self) -> Parallelism {
        Parallelism::from_worker_count(self.workers)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic campaign from a JSON configuration file.
    Synth {
        /// Campaign configuration: {"version":1,"campaign":{...}}.
        #[arg(long)]
        config: PathBuf,
        /// Master seed; the campaign is a pure function of (config, seed).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the spectrum files and manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a campaign with a shared collisional coefficient and report the
    /// weighted mean Doppler width and the implied Boltzmann constant.
    Fit {
        /// Campaign directory (must contain manifest.json).
        campaign: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Collisional-coefficient search bracket "lo,hi" in Hz/Pa.
        #[arg(long, value_parser = parse_bracket)]
        g_bracket: (f64, f64),
        /// Output directory: summary.json, fits.jsonl, run.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArg,
    },
    /// Compute the hyperfine stick spectrum and the width/k_B correction it
    /// induces on a single-profile fit.
    Hyperfine {
        /// Optional coupling-constant file: {"version":1,"ground":{...},
        /// "excited":{...}}; defaults to the built-in values for the probed
        /// line.
        #[arg(long)]
        constants: Option<PathBuf>,
        /// Doppler e-fold half-width of the fitting envelope (Hz).
        #[arg(long)]
        envelope_width_hz: Option<f64>,
        /// Collisional half-width of the fitting envelope (Hz).
        #[arg(long, default_value_t = 1.612e5)]
        gamma_hz: f64,
        /// Output directory: sticks.csv, report.json, run.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a correction ledger to a campaign summary and print the
    /// corrected Boltzmann constant with its combined uncertainty.
    Report {
        /// Campaign summary JSON produced by `fit`.
        #[arg(long)]
        summary: PathBuf,
        /// Correction ledger JSON; omit for the built-in default budget.
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Per-spectrum fit records (enables the subset and
        /// uncertainty-vs-time CSV outputs).
        #[arg(long)]
        fits: Option<PathBuf>,
        /// Write per-subset means to this CSV (requires --fits).
        #[arg(long)]
        subsets_csv: Option<PathBuf>,
        /// Number of random subsets for --subsets-csv.
        #[arg(long, default_value_t = 4)]
        subsets: usize,
        /// Write cumulative uncertainty vs accumulated time to this CSV
        /// (requires --fits).
        #[arg(long)]
        uncertainty_csv: Option<PathBuf>,
        /// Wall time represented by one spectrum, for the time axis.
        #[arg(long, default_value_t = 42.0)]
        per_fit_duration_s: f64,
        /// Seed for the random subset split and shuffle order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a campaign with both line-shape models over sub-ensembles of
    /// increasing maximum pressure and write the k_B difference curve.
    Bias {
        /// Campaign directory (must contain manifest.json).
        campaign: PathBuf,
        /// Collisional-coefficient search bracket "lo,hi" in Hz/Pa.
        #[arg(long, value_parser = parse_bracket)]
        g_bracket: (f64, f64),
        /// Comma-separated maximum-pressure grid (Pa).
        #[arg(long, value_delimiter = ',', required = true)]
        p_max: Vec<f64>,
        /// Output CSV path (a .run.json manifest is written alongside).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArg,
    },
    /// Bootstrap the width error bar of a single spectrum and compare it
    /// with the covariance estimate.
    Bootstrap {
        /// Spectrum CSV (with its JSON metadata sidecar).
        spectrum: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Fixed collisional coefficient (Hz/Pa).
        #[arg(long)]
        g: f64,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------------------
// Run manifests: every command echoes its fully-resolved parameters.

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    version: u32,
    command: &'a str,
    parameters: T,
}

fn write_run_manifest<T: Serialize>(path: &Path, command: &str, params: T) -> CliResult<()> {
    let doc = RunManifest {
        version: FORMAT_VERSION,
        command,
        parameters: params,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| config_err(e))?;
    std::fs::write(path, text + "\n").map_err(|e| config_err(e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

/// Top-level schema of the `synth --config` file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthConfigFile {
    version: u32,
    campaign: CampaignConfig,
}

fn cmd_synth(config: &Path, seed: u64, out: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| config_err(format!("{}: {e}", config.display())))?;
    let parsed: SynthConfigFile = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", config.display())))?;
    if parsed.version != FORMAT_VERSION {
        return Err(config_err(format!(
            "unsupported config version {}",
            parsed.version
        )));
    }
    parsed.campaign.validate().map_err(config_err)?;
    let manifest = files::write_campaign(out, &parsed.campaign, seed)?;
    println!(
        "wrote {} spectra to {} (seed {seed})",
        manifest.spectra.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

#[derive(Serialize)]
struct FitRunParams<'a> {
    campaign: &'a Path,
    model: ModelArg,
    g_bracket: (f64, f64),
    workers: usize,
}

fn cmd_fit(
    campaign: &Path,
    model: ModelArg,
    g_bracket: (f64, f64),
    out: &Path,
    workers: WorkerArg,
) -> CliResult<()> {
    let (manifest, spectra) = files::read_campaign(campaign)?;
    let cfg = &manifest.config;
    let fit_cfg = FitConfig::from_campaign(cfg);
    let line = LineReference::new(cfg.nu0_hz, cfg.molecular_mass_kg, cfg.temperature_k)
        .map_err(|e| config_err(e))?;

    let res = search_g(
        &spectra,
        model.into(),
        g_bracket,
        &fit_cfg,
        workers.parallelism(),
    )?;
    let summary = CampaignSummary::new(model.into(), &res, &line);

    std::fs::create_dir_all(out).map_err(|e| config_err(e))?;
    files::write_summary(&out.join("summary.json"), &summary)?;
    files::write_fit_records(&out.join("fits.jsonl"), &res.per_spectrum)?;
    write_run_manifest(
        &out.join("run.json"),
        "fit",
        FitRunParams {
            campaign,
            model,
            g_bracket,
            workers: workers.workers,
        },
    )?;

    println!(
        "g* = {:.6e} +- {:.2e} Hz/Pa (residual slope {:+.3e} +- {:.3e} Hz/Pa)",
        summary.g_star_hz_per_pa,
        summary.g_star_error_hz_per_pa,
        summary.slope_at_g_star,
        summary.slope_error
    );
    println!(
        "width_mean = {:.6e} +- {:.3e} Hz (dispersion ratio {:.2})",
        summary.width_mean_hz, summary.width_sigma_total_hz, summary.dispersion_ratio
    );
    println!(
        "k_B = {:.8e} J/K +- {:.1} ppm (statistical)",
        summary.kb_raw, summary.kb_statistical_ppm
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// hyperfine

/// Schema of the optional `--constants` file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    version: u32,
    ground: HyperfineConstants,
    excited: HyperfineConstants,
}

#[derive(Serialize)]
struct HyperfineReport {
    version: u32,
    width_ppm: f64,
    kb_ppm: f64,
    weak_fraction: f64,
    n_components: usize,
    envelope_width_hz: f64,
    envelope_gamma_hz: f64,
}

fn cmd_hyperfine(
    constants: Option<&Path>,
    envelope_width_hz: Option<f64>,
    gamma_hz: f64,
    out: &Path,
) -> CliResult<()> {
    let (ground, excited) = match constants {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let parsed: ConstantsFile = serde_json::from_str(&text)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if parsed.version != FORMAT_VERSION {
                return Err(config_err(format!(
                    "unsupported constants version {}",
                    parsed.version
                )));
            }
            (parsed.ground, parsed.excited)
        }
        None => (
            HyperfineConstants::ground_saq63(),
            HyperfineConstants::excited_saq63(),
        ),
    };

    let width = envelope_width_hz
        .unwrap_or_else(|| width_from_kb(KB_CODATA, &LineReference::ammonia_ice_point()));
    let envelope = LineShapeParams {
        doppler_hwhm_e: width,
        homogeneous_hw: gamma_hz,
        center: 0.0,
        amplitude: 1.0,
        theta: 0.0,
        baseline_offset: 0.0,
        baseline_slope: 0.0,
    };

    let sticks = stick_spectrum(&ground, &excited, 6, 3)?;
    let correction = broadening_correction(&sticks, &envelope)?;

    std::fs::create_dir_all(out).map_err(|e| config_err(e))?;
    files::write_stick_csv(&out.join("sticks.csv"), &sticks)?;
    let report = HyperfineReport {
        version: FORMAT_VERSION,
        width_ppm: correction.width_ppm,
        kb_ppm: correction.kb_ppm,
        weak_fraction: correction.weak_fraction,
        n_components: sticks.lines.len(),
        envelope_width_hz: width,
        envelope_gamma_hz: gamma_hz,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| config_err(e))?;
    std::fs::write(out.join("report.json"), text + "\n").map_err(|e| config_err(e))?;
    write_run_manifest(&out.join("run.json"), "hyperfine", &report)?;

    println!(
        "components = {}, width broadening = {:.4} ppm, k_B correction = {:.4} ppm, weak fraction = {:.3}",
        sticks.lines.len(),
        correction.width_ppm,
        correction.kb_ppm,
        correction.weak_fraction
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report

fn budget_table(ledger: &CorrectionLedger) -> String {
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<42} {:>12} {:>16}  kind",
        "effect", "width ppm", "uncertainty ppm"
    );
    for e in &ledger.entries {
        let kind = match e.kind {
            LedgerKind::Correction => "correction",
            LedgerKind::Bound => "bound",
        };
        let _ = writeln!(
            t,
            "{:<42} {:>12} {:>16}  {kind}",
            e.name, e.width_ppm, e.width_uncertainty_ppm
        );
    }
    t
}

#[allow(clippy::too_many_arguments)]
fn cmd_report(
    summary_path: &Path,
    ledger_path: Option<&Path>,
    fits_path: Option<&Path>,
    subsets_csv: Option<&Path>,
    n_subsets: usize,
    uncertainty_csv: Option<&Path>,
    per_fit_duration_s: f64,
    seed: u64,
) -> CliResult<()> {
    let summary = files::read_summary(summary_path)?;
    let ledger = match ledger_path {
        Some(p) => files::read_ledger(p)?,
        None => CorrectionLedger::default(),
    };
    let (kb_corr, combined_rel) = apply_ledger(summary.kb_raw, &ledger);
    let stat_rel = summary.kb_statistical_ppm * 1e-6;
    let total_rel = (combined_rel * combined_rel + stat_rel * stat_rel).sqrt();

    print!("{}", budget_table(&ledger));
    println!(
        "raw:       k_B = {:.8e} J/K +- {:.1} ppm (statistical)",
        summary.kb_raw, summary.kb_statistical_ppm
    );
    println!(
        "corrected: k_B = {:.8e} J/K +- {:.1} ppm (systematic) +- {:.1} ppm (combined)",
        kb_corr,
        combined_rel * 1e6,
        total_rel * 1e6
    );

    if subsets_csv.is_some() || uncertainty_csv.is_some() {
        let fits_path = fits_path.ok_or_else(|| {
            config_err("--subsets-csv/--uncertainty-csv require --fits records")
        })?;
        let records = files::read_fit_records(fits_path)?;
        let fits: Vec<_> = records.iter().map(FitRecord::to_fit_result).collect();
        if let Some(path) = subsets_csv {
            let report = subset_consistency(&fits, n_subsets, seed)?;
            let mut text = String::from("subset,mean_hz,sigma_hz\n");
            for (i, (m, s)) in report.subsets.iter().enumerate() {
                let _ = writeln!(text, "{i},{m},{s}");
            }
            std::fs::write(path, text).map_err(|e| config_err(e))?;
            println!(
                "subsets: chi2 = {:.2} over {} dof -> {}",
                report.chi2,
                report.dof,
                path.display()
            );
        }
        if let Some(path) = uncertainty_csv {
            let curve = uncertainty_vs_time(&fits, per_fit_duration_s, seed);
            let mut text = String::from("tau_s,rel_uncertainty\n");
            for (tau, u) in &curve {
                let _ = writeln!(text, "{tau},{u}");
            }
            std::fs::write(path, text).map_err(|e| config_err(e))?;
            println!("uncertainty curve: {} points -> {}", curve.len(), path.display());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bias

#[derive(Serialize)]
struct BiasRunParams<'a> {
    campaign: &'a Path,
    g_bracket: (f64, f64),
    p_max: &'a [f64],
    workers: usize,
}

fn cmd_bias(
    campaign: &Path,
    g_bracket: (f64, f64),
    p_max: &[f64],
    out: &Path,
    workers: WorkerArg,
) -> CliResult<()> {
    if p_max.is_empty() || !p_max.iter().all(|&p| p.is_finite() && p > 0.0) {
        return Err(config_err("--p-max values must be positive"));
    }
    let (manifest, spectra) = files::read_campaign(campaign)?;
    let cfg = &manifest.config;
    let fit_cfg = FitConfig::from_campaign(cfg);
    let line = LineReference::new(cfg.nu0_hz, cfg.molecular_mass_kg, cfg.temperature_k)
        .map_err(|e| config_err(e))?;

    let points = voigt_galatry_bias(
        &spectra,
        p_max,
        &fit_cfg,
        g_bracket,
        &line,
        workers.parallelism(),
    )?;
    files::write_bias_csv(out, &points)?;
    write_run_manifest(
        &out.with_extension("run.json"),
        "bias",
        BiasRunParams {
            campaign,
            g_bracket,
            p_max,
            workers: workers.workers,
        },
    )?;
    for p in &points {
        println!(
            "p_max = {:.3} Pa: bias = {:+.2} ppm +- {:.2} ppm",
            p.p_max_pa, p.bias_ppm, p.sigma_ppm
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bootstrap

#[derive(Serialize)]
struct BootstrapReport {
    version: u32,
    sigma_boot_hz: f64,
    sigma_covariance_hz: f64,
    ratio: f64,
    replicates: usize,
    seed: u64,
}

fn cmd_bootstrap(
    spectrum_path: &Path,
    model: ModelArg,
    g: f64,
    replicates: usize,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<()> {
    if !(g.is_finite() && g > 0.0) {
        return Err(config_err("--g must be positive"));
    }
    let s = files::read_spectrum(spectrum_path)?;
    let fit_cfg = FitConfig::default();
    let base = fit_spectrum(&s, g, model.into(), &fit_cfg)?;
    let sigma_boot = bootstrap_width_error(&s, g, model.into(), &fit_cfg, replicates, seed)?;
    let report = BootstrapReport {
        version: FORMAT_VERSION,
        sigma_boot_hz: sigma_boot,
        sigma_covariance_hz: base.width_error_hz,
        ratio: sigma_boot / base.width_error_hz,
        replicates,
        seed,
    };
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report).map_err(|e| config_err(e))?;
        std::fs::write(path, text + "\n").map_err(|e| config_err(e))?;
    }
    println!(
        "sigma_boot = {:.4e} Hz, covariance sigma = {:.4e} Hz, ratio = {:.3}",
        report.sigma_boot_hz, report.sigma_covariance_hz, report.ratio
    );
    Ok(())
}

// ---------------------------------------------------------------------------

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { config, seed, out } => cmd_synth(&config, seed, &out),
        Command::Fit {
            campaign,
            model,
            g_bracket,
            out,
            workers,
        } => cmd_fit(&campaign, model, g_bracket, &out, workers),
        Command::Hyperfine {
            constants,
            envelope_width_hz,
            gamma_hz,
            out,
        } => cmd_hyperfine(constants.as_deref(), envelope_width_hz, gamma_hz, &out),
        Command::Report {
            summary,
            ledger,
            fits,
            subsets_csv,
            subsets,
            uncertainty_csv,
            per_fit_duration_s,
            seed,
        } => cmd_report(
            &summary,
            ledger.as_deref(),
            fits.as_deref(),
            subsets_csv.as_deref(),
            subsets,
            uncertainty_csv.as_deref(),
            per_fit_duration_s,
            seed,
        ),
        Command::Bias {
            campaign,
            g_bracket,
            p_max,
            out,
            workers,
        } => cmd_bias(&campaign, g_bracket, &p_max, &out, workers),
        Command::Bootstrap {
            spectrum,
            model,
            g,
            replicates,
            seed,
            out,
        } => cmd_bootstrap(&spectrum, model, g, replicates, seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
