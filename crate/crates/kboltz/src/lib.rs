//! Doppler-broadening thermometry toolkit.
//!
//! Everything needed to rehearse, on synthetic data, a spectroscopic
//! determination of the Boltzmann constant: the width of a Doppler-broadened
//! molecular absorption line measures `sqrt(2 k_B T / m c^2)`, so an absolute
//! frequency scale plus a known temperature turns line-shape metrology into
//! thermometry.  The crate covers the full chain from special functions to the
//! final error budget:
//!
//! - [`specfun`]: complex Faddeeva function `w(z)`, its soft-collision
//!   companion `w1(z)`, and the confluent hypergeometric `1F1` needed by the
//!   closed-form Galatry profile.
//! - [`lineshape`]: Voigt and Galatry absorbance profiles (first-order
//!   expansion, direct correlation-function quadrature, and the `1F1` route),
//!   plus the narrowing parameter `theta` derived from gas conditions.
//! - [`hyperfine`]: hyperfine sublevel energies and stick spectrum of the
//!   probed rovibrational line, crossover resonances, the broadening
//!   correction induced by unresolved structure, and the saturated-absorption
//!   triplet fit used to pin the hyperfine constants.
//! - [`synth`]: deterministic synthetic spectrum/campaign generator with
//!   heteroscedastic detection noise and a slow baseline fringe.
//! - [`fitting`]: weighted Levenberg-Marquardt engine ([`optim`]), per-spectrum
//!   line fits with the collisional width tied to pressure, the zero-slope
//!   search for the broadening coefficient, and campaign statistics
//!   (weighted means, bootstrap, subset consistency, uncertainty vs time).
//! - [`thermometry`]: conversions between width and `k_B`, the systematic
//!   correction ledger, and the Voigt-vs-Galatry model-bias study.
//! - [`files`]: on-disk formats (spectrum CSV + JSON sidecar, campaign
//!   manifests, fit summaries, ledgers) shared with the CLI.
//!
//! Campaign-scale work (fitting hundreds of spectra, bootstrap replicates,
//! bias sub-ensembles) runs data-parallel through [`exec`] when the default
//! `parallel` feature is enabled and falls back to sequential loops without
//! it.  Results are bit-identical either way: parallel maps preserve input
//! order and every reduction is a sequential compensated sum.

pub mod constants;
pub mod exec;
pub mod files;
pub mod fitting;
pub mod hyperfine;
pub mod lineshape;
pub mod optim;
pub mod quad;
pub mod specfun;
pub mod synth;
pub mod thermometry;

pub(crate) mod ksum;

pub use exec::Parallelism;
