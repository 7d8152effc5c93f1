//! Independent checks of the hyperfine module.
//!
//! The first-order sublevel energies are verified against an exact
//! diagonalization of the same coupling operators on the full 156-state
//! product space |J m> x |I_N m_N> x |I_H m_H> (J = 6, I_N = 1, I_H = 3/2).
//! The oracle never uses the coupled-basis formulas: it builds angular
//! momentum matrices from ladder operators, forms the scalar products as
//! matrix products, and diagonalizes. Eigenvalues cluster into the twelve
//! (F1, F) levels with exact (2F+1) degeneracies.
//!
//! The envelope-broadening correction is checked against closed-form
//! variance rules and invariances that do not depend on the fit machinery.

use kboltz::constants::*;
use kboltz::hyperfine::*;
use kboltz::lineshape::*;
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

struct Embedded {
    z: DMatrix<f64>,
    p: DMatrix<f64>,
    m: DMatrix<f64>,
}

fn ladder(two_j: i64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let dim = (two_j + 1) as usize;
    let j = two_j as f64 / 2.0;
    let mut z = DMatrix::zeros(dim, dim);
    let mut p = DMatrix::zeros(dim, dim);
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let mval = -j + i as f64;
        z[(i, i)] = mval;
        if i + 1 < dim {
            let amp = (j * (j + 1.0) - mval * (mval + 1.0)).sqrt();
            p[(i + 1, i)] = amp;
            m[(i, i + 1)] = amp;
        }
    }
    (z, p, m)
}

fn embed(which: usize, op: &DMatrix<f64>, dims: &[usize; 3]) -> DMatrix<f64> {
    let eye = |d: usize| DMatrix::<f64>::identity(d, d);
    let parts: Vec<DMatrix<f64>> = (0..3)
        .map(|s| if s == which { op.clone() } else { eye(dims[s]) })
        .collect();
    parts[0].kronecker(&parts[1]).kronecker(&parts[2])
}

fn build(two_j: i64, which: usize, dims: &[usize; 3]) -> Embedded {
    let (z, p, m) = ladder(two_j);
    Embedded {
        z: embed(which, &z, dims),
        p: embed(which, &p, dims),
        m: embed(which, &m, dims),
    }
}

fn dot(a: &Embedded, b: &Embedded) -> DMatrix<f64> {
    &a.z * &b.z + 0.5 * (&a.p * &b.m + &a.m * &b.p)
}

/// The five-term coupling Hamiltonian (kHz) on the product space.
fn hamiltonian_khz(c: &HyperfineConstants, j: u32, k: u32) -> DMatrix<f64> {
    let two_j = 2 * j as i64;
    let dims = [(two_j + 1) as usize, 3, 4];
    let n = dims[0] * dims[1] * dims[2];
    let jop = build(two_j, 0, &dims);
    let nop = build(2, 1, &dims);
    let hop = build(3, 2, &dims);

    let nj = dot(&nop, &jop);
    let hj = dot(&hop, &jop);
    let nh = dot(&nop, &hop);
    let eye = DMatrix::<f64>::identity(n, n);

    let jf = j as f64;
    let kf = k as f64;
    let jj = jf * (jf + 1.0);
    let axis = 3.0 * kf * kf / jj - 1.0;
    let td = (2.0 * jf - 1.0) * (2.0 * jf + 3.0);
    let i_n = 1.0;
    let i_h = 1.5;

    let h_q = (&nj * &nj * 3.0 + &nj * 1.5 - &eye * (i_n * (i_n + 1.0) * jj))
        * (c.eqq_khz * axis / (2.0 * i_n * (2.0 * i_n - 1.0) * td));
    let h_r = &nj * c.r_khz;
    let h_s = &hj * c.s_khz;
    let h_t = ((&nj * &hj + &hj * &nj) * 3.0 - &nh * (2.0 * jj)) * (c.t_khz / td);
    let h_u = (&hj * &hj * 3.0 + &hj * 1.5 - &eye * (i_h * (i_h + 1.0) * jj)) * (c.u_khz / td);

    h_q + h_r + h_s + h_t + h_u
}

/// Sorted exact levels as (energy kHz, multiplicity) clusters.
fn exact_clusters(c: &HyperfineConstants, j: u32, k: u32) -> Vec<(f64, usize)> {
    let h = hamiltonian_khz(c, j, k);
    let sym = nalgebra::SymmetricEigen::new(h);
    let mut ev: Vec<f64> = sym.eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<(f64, usize)> = Vec::new();
    for e in ev {
        match out.last_mut() {
            Some((v, n)) if (e - *v).abs() < 1e-3 => {
                *v = (*v * *n as f64 + e) / (*n as f64 + 1.0);
                *n += 1;
            }
            _ => out.push((e, 1)),
        }
    }
    out
}

const GROUND_EXACT_KHZ: [(f64, usize); 12] = [
    (-523.356978, 16),
    (-393.499866, 14),
    (-279.343204, 12),
    (-181.677814, 10),
    (20.692786, 18),
    (25.920818, 14),
    (153.456299, 16),
    (161.367271, 12),
    (270.047915, 14),
    (275.245623, 10),
    (367.965795, 8),
    (370.640278, 12),
];

const EXCITED_EXACT_KHZ: [(f64, usize); 12] = [
    (-535.920768, 16),
    (-409.543695, 14),
    (-298.591209, 12),
    (-203.750080, 10),
    (28.951357, 18),
    (45.115810, 14),
    (158.062233, 16),
    (176.694361, 12),
    (271.470258, 14),
    (287.385551, 10),
    (369.337426, 12),
    (377.547159, 8),
];

#[test]
fn exact_levels_match_frozen_goldens() {
    for (c, golden) in [
        (HyperfineConstants::ground_saq63(), &GROUND_EXACT_KHZ),
        (HyperfineConstants::excited_saq63(), &EXCITED_EXACT_KHZ),
    ] {
        let clusters = exact_clusters(&c, 6, 3);
        assert_eq!(clusters.len(), 12);
        for ((e, n), (ge, gn)) in clusters.iter().zip(golden.iter()) {
            assert_eq!(n, gn);
            assert!((e - ge).abs() < 1e-3, "level {ge} kHz drifted to {e}");
        }
        let total: usize = clusters.iter().map(|(_, n)| n).sum();
        assert_eq!(total, 156);
    }
}

#[test]
fn first_order_energies_track_exact_diagonalization() {
    for c in [
        HyperfineConstants::ground_saq63(),
        HyperfineConstants::excited_saq63(),
    ] {
        let clusters = exact_clusters(&c, 6, 3);
        let first_order = sublevel_energies(&c, 6, 3).unwrap();
        let mut worst: f64 = 0.0;
        for f_twice in [7u32, 9, 11, 13, 15, 17] {
            let mult = (f_twice + 1) as usize;
            let mut exact: Vec<f64> = clusters
                .iter()
                .filter(|(_, n)| *n == mult)
                .map(|(e, _)| *e)
                .collect();
            let mut fo: Vec<f64> = first_order
                .iter()
                .filter(|(l, _)| l.f_twice == f_twice)
                .map(|(_, e)| e / 1e3)
                .collect();
            exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
            fo.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(exact.len(), fo.len());
            for (a, b) in exact.iter().zip(&fo) {
                worst = worst.max((a - b).abs());
            }
            // Stretch classes (F = 8.5 and F = 3.5) exist in a single F1
            // manifold, have no mixing partner, and must agree exactly.
            if mult == 18 || mult == 8 {
                assert!(
                    (exact[0] - fo[0]).abs() < 1e-6,
                    "unmixed level: exact {} vs first-order {}",
                    exact[0],
                    fo[0]
                );
            }
        }
        // Off-diagonal spin-rotation/spin-spin mixing shifts levels by at
        // most a few kHz; the measured bound is 2.42 kHz (ground).
        assert!(worst < 2.6, "first-order deviation {worst} kHz");
        assert!(worst > 0.1, "mixing should be visible, got {worst} kHz");
    }
}

#[test]
fn first_order_ground_energies_frozen() {
    let golden_khz = [
        (-522.565608, 6u32, 15u32),
        (-391.079887, 6, 13),
        (-277.129538, 6, 11),
        (-180.712871, 6, 9),
        (20.692786, 7, 17),
        (24.441889, 5, 13),
        (152.665071, 7, 15),
        (159.773510, 5, 11),
        (269.107198, 7, 13),
        (274.280798, 5, 9),
        (367.965795, 5, 7),
        (370.020668, 7, 11),
    ];
    let mut levels = sublevel_energies(&HyperfineConstants::ground_saq63(), 6, 3).unwrap();
    levels.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    for ((label, e), (ge, gf1, gf_twice)) in levels.iter().zip(golden_khz.iter()) {
        assert_eq!(label.f1, *gf1);
        assert_eq!(label.f_twice, *gf_twice);
        assert!(
            (e / 1e3 - ge).abs() < 1e-5,
            "level ({}, {}) = {} kHz, expected {}",
            label.f1,
            label.f(),
            e / 1e3,
            ge
        );
    }
}

fn line_sticks() -> StickSpectrum {
    stick_spectrum(
        &HyperfineConstants::ground_saq63(),
        &HyperfineConstants::excited_saq63(),
        6,
        3,
    )
    .unwrap()
}

fn thermal_envelope(theta: f64) -> LineShapeParams {
    let cond = GasConditions {
        pressure_pa: 2.5,
        temperature_k: T_ICE_POINT_K,
        molecular_mass_kg: MASS_NH3_KG,
        diffusion_d0_m2s: DIFFUSION_D0_M2S,
        diffusion_p0_pa: P_DIFFUSION_REF_PA,
        wavelength_m: SPEED_OF_LIGHT / NU0_SAQ63_HZ,
    };
    LineShapeParams {
        doppler_hwhm_e: thermal_doppler_width(&cond),
        homogeneous_hw: 1.24e5 * 2.5,
        center: 0.0,
        amplitude: 1.0,
        theta,
        baseline_offset: 0.0,
        baseline_slope: 0.0,
    }
}

fn galatry_envelope() -> LineShapeParams {
    let cond = GasConditions {
        pressure_pa: 2.5,
        temperature_k: T_ICE_POINT_K,
        molecular_mass_kg: MASS_NH3_KG,
        diffusion_d0_m2s: DIFFUSION_D0_M2S,
        diffusion_p0_pa: P_DIFFUSION_REF_PA,
        wavelength_m: SPEED_OF_LIGHT / NU0_SAQ63_HZ,
    };
    let mut env = thermal_envelope(0.0);
    env.theta = theta_from_conditions(&cond, env.doppler_hwhm_e);
    env
}

#[test]
fn broadening_matches_quoted_budget() {
    let s = line_sticks();
    let b = broadening_correction(&s, &galatry_envelope()).unwrap();
    // Budget value 4.355 ppm with a 10% acceptance band; the implementation
    // reproduces 4.333 ppm (frozen regression window inside the band).
    assert!(
        (3.92..4.79).contains(&b.width_ppm),
        "width_ppm = {}",
        b.width_ppm
    );
    assert!(
        (4.31..4.36).contains(&b.width_ppm),
        "width_ppm drifted: {}",
        b.width_ppm
    );
    assert_eq!(b.kb_ppm, -2.0 * b.width_ppm);
    assert!(
        (0.80..1.00).contains(&b.weak_fraction),
        "weak_fraction = {}",
        b.weak_fraction
    );
    assert!(
        (0.90..0.93).contains(&b.weak_fraction),
        "weak_fraction drifted: {}",
        b.weak_fraction
    );
}

#[test]
fn broadening_insensitive_to_envelope_family() {
    let s = line_sticks();
    let g = broadening_correction(&s, &galatry_envelope()).unwrap();
    let v = broadening_correction(&s, &thermal_envelope(0.0)).unwrap();
    assert!(
        (g.width_ppm - v.width_ppm).abs() < 0.05,
        "galatry {} vs voigt {}",
        g.width_ppm,
        v.width_ppm
    );
}

fn scale_offsets(s: &StickSpectrum, lambda: f64) -> StickSpectrum {
    StickSpectrum {
        lines: s
            .lines
            .iter()
            .map(|l| StickLine {
                offset_hz: l.offset_hz * lambda,
                ..*l
            })
            .collect(),
        center_of_gravity_hz: s.center_of_gravity_hz * lambda,
    }
}

#[test]
fn broadening_is_quadratic_in_splitting_scale() {
    let s = line_sticks();
    let env = thermal_envelope(0.0);
    let base = broadening_correction(&s, &env).unwrap().width_ppm;
    for lambda in [0.5, 2.0] {
        let scaled = broadening_correction(&scale_offsets(&s, lambda), &env)
            .unwrap()
            .width_ppm;
        let ratio = scaled / base;
        assert!(
            (ratio / (lambda * lambda) - 1.0).abs() < 0.02,
            "lambda {lambda}: ratio {ratio}"
        );
    }
}

#[test]
fn broadening_invariant_under_common_shift() {
    let s = line_sticks();
    let env = thermal_envelope(0.0);
    let base = broadening_correction(&s, &env).unwrap().width_ppm;
    let shifted = StickSpectrum {
        lines: s
            .lines
            .iter()
            .map(|l| StickLine {
                offset_hz: l.offset_hz + 300e3,
                ..*l
            })
            .collect(),
        center_of_gravity_hz: s.center_of_gravity_hz + 300e3,
    };
    let b = broadening_correction(&shifted, &env).unwrap().width_ppm;
    assert!(
        (b - base).abs() < 1e-3,
        "shift changed width_ppm by {}",
        b - base
    );
}

#[test]
fn symmetric_doublet_matches_variance_rule() {
    // A doublet at +-d inflates the squared e-fold half-width by 2 d^2, so
    // the fractional width increase is d^2 / w^2.
    let env = thermal_envelope(0.0);
    let label = SublevelLabel { f1: 6, f_twice: 13 };
    let doublet = |d: f64| StickSpectrum {
        lines: vec![
            StickLine {
                offset_hz: -d,
                intensity: 0.5,
                lower: label,
                upper: label,
            },
            StickLine {
                offset_hz: d,
                intensity: 0.5,
                lower: label,
                upper: label,
            },
        ],
        center_of_gravity_hz: 0.0,
    };
    let w = env.doppler_hwhm_e;
    let b200 = broadening_correction(&doublet(200e3), &env).unwrap().width_ppm;
    let expect = (200e3 / w) * (200e3 / w) * 1e6;
    assert!(
        (b200 / expect - 1.0).abs() < 0.01,
        "doublet width_ppm {b200} vs variance rule {expect}"
    );
    let b400 = broadening_correction(&doublet(400e3), &env).unwrap().width_ppm;
    assert!(
        (b400 / b200 / 4.0 - 1.0).abs() < 0.01,
        "doubling the splitting should quadruple the correction: {}",
        b400 / b200
    );
}

#[test]
fn broadening_requires_separated_scales() {
    let s = line_sticks();
    let mut env = thermal_envelope(0.0);
    env.doppler_hwhm_e = 3e6;
    assert!(matches!(
        broadening_correction(&s, &env),
        Err(HyperfineError::InsufficientSeparation(_))
    ));
}

#[test]
fn strong_components_carry_most_intensity() {
    let s = line_sticks();
    let strong: f64 = s
        .lines
        .iter()
        .filter(|l| l.lower.f1 == l.upper.f1 && l.lower.f_twice == l.upper.f_twice)
        .map(|l| l.intensity)
        .sum();
    assert!((0.905..0.92).contains(&strong), "strong weight {strong}");
}

fn triplet_truth() -> TripletModel {
    TripletModel {
        delta_eqq_khz: -196.8,
        delta_r_khz: -0.535,
        lorentz_fwhm_hz: 8e3,
        center_hz: 500.0,
        scale: 1.0,
        baseline_offset: 2e-5,
        baseline_slope: 1e-12,
    }
}

fn triplet_scan(truth: &TripletModel) -> (Vec<f64>, Vec<f64>) {
    let ground = HyperfineConstants::ground_saq63();
    let fixed = TripletFixedDeltas::default();
    let centers = triplet_centers(&ground, truth.delta_eqq_khz, truth.delta_r_khz, &fixed, 6, 3)
        .unwrap();
    let n = 1601;
    let freq: Vec<f64> = (0..n)
        .map(|i| -60e3 + 120e3 * i as f64 / (n - 1) as f64)
        .collect();
    let clean = freq
        .iter()
        .map(|&nu| triplet_signal_at(truth, &centers, nu))
        .collect();
    (freq, clean)
}

fn triplet_init() -> TripletModel {
    TripletModel {
        delta_eqq_khz: -150.0,
        delta_r_khz: -0.3,
        lorentz_fwhm_hz: 6e3,
        center_hz: 2e3,
        scale: 0.8,
        baseline_offset: 0.0,
        baseline_slope: 0.0,
    }
}

#[test]
fn triplet_roundtrip_recovers_coupling_differences() {
    let truth = triplet_truth();
    let (freq, clean) = triplet_scan(&truth);
    let sigma = vec![1e-9; freq.len()];
    let fit = fit_triplet(&freq, &clean, &sigma, &triplet_init(), 6, 3).unwrap();
    assert!(fit.converged);
    assert!(
        (fit.model.delta_eqq_khz - truth.delta_eqq_khz).abs() < 0.01,
        "delta eQq = {}",
        fit.model.delta_eqq_khz
    );
    assert!(
        (fit.model.delta_r_khz - truth.delta_r_khz).abs() < 0.01,
        "delta R = {}",
        fit.model.delta_r_khz
    );
    assert!((fit.model.lorentz_fwhm_hz - truth.lorentz_fwhm_hz).abs() < 1.0);
    assert!((fit.model.center_hz - truth.center_hz).abs() < 1.0);
}

#[test]
fn triplet_position_uncertainty_scales_with_noise() {
    let truth = triplet_truth();
    let (freq, clean) = triplet_scan(&truth);
    let peak = clean.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut sigmas = Vec::new();
    for noise in [0.02 * peak, 0.04 * peak] {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noisy: Vec<f64> = clean
            .iter()
            .map(|&v| v + noise * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let sigma = vec![noise; freq.len()];
        let fit = fit_triplet(&freq, &noisy, &sigma, &triplet_init(), 6, 3).unwrap();
        assert!(fit.converged);
        // Recovered coupling differences stay within 3 sigma of the truth.
        assert!((fit.model.delta_eqq_khz - truth.delta_eqq_khz).abs() < 3.0 * fit.errors[0]);
        assert!((fit.model.delta_r_khz - truth.delta_r_khz).abs() < 3.0 * fit.errors[1]);
        assert!((0.5..1.5).contains(&fit.chi2_reduced), "chi2r {}", fit.chi2_reduced);
        sigmas.push(fit.relative_position_sigma_hz);
    }
    // A few tens of Hz at percent-level noise, doubling with the noise.
    assert!((5.0..50.0).contains(&sigmas[0]), "position sigma {}", sigmas[0]);
    let ratio = sigmas[1] / sigmas[0];
    assert!((ratio - 2.0).abs() < 0.3, "noise-doubling ratio {ratio}");
}

#[test]
fn triplet_fit_claims_no_information_from_zero_signal() {
    let truth = triplet_truth();
    let (freq, _) = triplet_scan(&truth);
    let zeros = vec![0.0; freq.len()];
    let sigma = vec![1e-9; freq.len()];
    match fit_triplet(&freq, &zeros, &sigma, &triplet_init(), 6, 3) {
        // The component amplitude collapses and the coupling differences
        // become unconstrained; any reported uncertainty must be enormous.
        Ok(fit) => assert!(
            fit.errors[0] > 1e3,
            "zero signal produced a confident fit: sigma(delta eQq) = {}",
            fit.errors[0]
        ),
        Err(_) => {}
    }
}
