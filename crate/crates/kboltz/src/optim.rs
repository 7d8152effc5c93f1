//! Damped least-squares (Levenberg-Marquardt) minimizer.
//!
//! The caller supplies a weighted-residual function; the Jacobian is formed
//! by forward differences with per-parameter typical scales. Damping uses
//! Marquardt's diagonal scaling, which keeps the step well-conditioned when
//! parameters differ by many orders of magnitude (hertz-scale widths next to
//! unit-scale amplitudes). The weighted sum of squares decreases
//! monotonically by construction: steps are only accepted on improvement.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::ksum::KahanSum;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no convergence after {iters} iterations (best weighted SSE {best_sse:.6e})")]
    NonConvergence { iters: usize, best_sse: f64 },
    #[error("normal equations are singular or indefinite")]
    SingularCurvature,
    #[error("residual function returned a non-finite value")]
    InvalidResidual,
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("{0}")]
    Rejected(String),
}

/// Tuning knobs; the defaults satisfy every fit in this crate.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Relative step-size convergence threshold.
    pub xtol: f64,
    /// Relative SSE-change convergence threshold.
    pub ftol: f64,
    pub initial_lambda: f64,
    /// Per-parameter magnitudes used for difference steps and step-size
    /// convergence tests; defaults to 1.0 for every parameter.
    pub typical_scale: Option<Vec<f64>>,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 200,
            xtol: 1e-10,
            ftol: 1e-12,
            initial_lambda: 1e-3,
            typical_scale: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Unscaled curvature-based covariance `(J^T J)^{-1}` at the solution.
    pub covariance: DMatrix<f64>,
    /// Weighted sum of squared residuals at the solution.
    pub sse: f64,
    pub n_iters: usize,
    pub converged: bool,
}

impl LmResult {
    pub fn param_errors(&self) -> Vec<f64> {
        (0..self.params.len())
            .map(|i| self.covariance[(i, i)].max(0.0).sqrt())
            .collect()
    }
}

fn weighted_sse(r: &[f64]) -> f64 {
    let mut acc = KahanSum::default();
    for &v in r {
        acc.add(v * v);
    }
    acc.total()
}

/// Minimize `sum_i r_i(x)^2` for a caller-weighted residual vector.
pub fn levenberg_marquardt<F>(
    mut residuals: F,
    x0: &[f64],
    n_residuals: usize,
    opts: &LmOptions,
) -> Result<LmResult, FitError>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), FitError>,
{
    let n_params = x0.len();
    if n_params == 0 || n_residuals < n_params {
        return Err(FitError::Dimension(
            "need at least as many residuals as parameters",
        ));
    }
    let scales = match &opts.typical_scale {
        Some(s) if s.len() != n_params => {
            return Err(FitError::Dimension("typical_scale length mismatch"))
        }
        Some(s) => s.clone(),
        None => vec![1.0; n_params],
    };

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n_residuals];
    let mut r_trial = vec![0.0; n_residuals];
    let mut r_step = vec![0.0; n_residuals];
    residuals(&x, &mut r)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(FitError::InvalidResidual);
    }
    let mut sse = weighted_sse(&r);
    let mut lambda = opts.initial_lambda;
    let mut jac = DMatrix::<f64>::zeros(n_residuals, n_params);
    let mut converged = false;
    let mut iters = 0;

    while iters < opts.max_iters && !converged {
        iters += 1;

        // Forward-difference Jacobian.
        for j in 0..n_params {
            let h = 1e-6 * x[j].abs().max(scales[j].abs());
            let saved = x[j];
            x[j] = saved + h;
            residuals(&x, &mut r_step)?;
            x[j] = saved;
            let inv_h = 1.0 / h;
            for i in 0..n_residuals {
                jac[(i, j)] = (r_step[i] - r[i]) * inv_h;
            }
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(FitError::InvalidResidual);
        }

        let jtj = jac.transpose() * &jac;
        let r_vec = DVector::from_column_slice(&r);
        let jtr = jac.transpose() * r_vec;

        // Inner damping loop: raise lambda until a step improves the SSE.
        let mut improved = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for j in 0..n_params {
                let d = jtj[(j, j)];
                if d == 0.0 {
                    return Err(FitError::SingularCurvature);
                }
                damped[(j, j)] = d * (1.0 + lambda);
            }
            let step = match Cholesky::new(damped) {
                Some(chol) => chol.solve(&(-&jtr)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = (0..n_params).map(|j| x[j] + step[j]).collect();
            if residuals(&trial, &mut r_trial).is_err()
                || r_trial.iter().any(|v| !v.is_finite())
            {
                lambda *= 10.0;
                continue;
            }
            let sse_trial = weighted_sse(&r_trial);
            if sse_trial < sse {
                let small_step = (0..n_params)
                    .all(|j| step[j].abs() <= opts.xtol * x[j].abs().max(scales[j].abs()));
                let small_decrease = sse - sse_trial <= opts.ftol * sse.max(f64::MIN_POSITIVE);
                x = trial;
                std::mem::swap(&mut r, &mut r_trial);
                sse = sse_trial;
                lambda = (lambda * 0.1).max(1e-14);
                improved = true;
                if small_step || small_decrease {
                    converged = true;
                }
                break;
            }
            // A zero-SSE minimum cannot improve further; accept it.
            if sse == 0.0 || (sse - sse_trial).abs() <= f64::EPSILON * sse {
                converged = true;
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // Damping saturated without improvement: we are at a local
            // minimum to machine precision.
            converged = true;
        }
    }

    if !converged {
        return Err(FitError::NonConvergence {
            iters,
            best_sse: sse,
        });
    }

    // Final curvature and covariance without damping.
    for j in 0..n_params {
        let h = 1e-6 * x[j].abs().max(scales[j].abs());
        let saved = x[j];
        x[j] = saved + h;
        residuals(&x, &mut r_step)?;
        x[j] = saved;
        let inv_h = 1.0 / h;
        for i in 0..n_residuals {
            jac[(i, j)] = (r_step[i] - r[i]) * inv_h;
        }
    }
    let jtj = jac.transpose() * &jac;
    let covariance = Cholesky::new(jtj)
        .ok_or(FitError::SingularCurvature)?
        .inverse();

    Ok(LmResult {
        params: x,
        covariance,
        sse,
        n_iters: iters,
        converged,
    })
}
