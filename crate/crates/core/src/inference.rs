//! Plug-in asymptotic covariance of the smooth coefficients.
//!
//! With `h_t` the fitted conditional variance of regime `i` and `g_i` its
//! indicator,
//!
//! ```text
//! A_i = mean( Y Y' / h * g_i ),  B_i = mean( X X' / h^2 * g_i ),  D_i = mean( Y X' / h^1.5 * g_i )
//! Omega = diag(A_1, B_1 / 2, A_2, B_2 / 2)
//! Sigma_i = [[A_i, k3/2 D_i], [k3/2 D_i', (k4 - 1)/4 B_i]]
//! cov = Omega^-1 Sigma Omega^-1 / n
//! ```
//!
//! Thresholds and delay get no standard error: their limit law is not normal.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{BdarError, Result};
use crate::estimator::FitResult;
use crate::model::{compute_regime_path, BdarParams, TimeSeries};

/// Largest accepted condition number of an information block.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnovationMoments {
    pub kappa3: f64,
    pub kappa4: f64,
}

/// Raw third and fourth sample moments of standardized residuals.
pub fn estimate_moments(std_residuals: &[f64]) -> Result<InnovationMoments> {
    if std_residuals.len() < 30 {
        return Err(BdarError::InsufficientData(format!(
            "need at least 30 residuals for moment estimates, got {}",
            std_residuals.len()
        )));
    }
    let n = std_residuals.len() as f64;
    let (s3, s4) = std_residuals
        .iter()
        .fold((0.0, 0.0), |(a, b), e| (a + e * e * e, b + e * e * e * e));
    Ok(InnovationMoments {
        kappa3: s3 / n,
        kappa4: s4 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCovariance {
    pub omega: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// Estimated covariance of `lambda_hat` (already divided by `n`).
    pub cov_lambda: DMatrix<f64>,
    pub kappa3: f64,
    pub kappa4: f64,
    pub a: [DMatrix<f64>; 2],
    pub b: [DMatrix<f64>; 2],
    pub d: [DMatrix<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub covariance: AsymptoticCovariance,
    /// Standard errors in the order of [`BdarParams::lambda`].
    pub std_errors: Vec<f64>,
    pub names: Vec<String>,
}

/// Sample-average information blocks at the fitted parameters.
fn information_blocks(
    params: &BdarParams,
    y: &TimeSeries,
) -> Result<([DMatrix<f64>; 2], [DMatrix<f64>; 2], [DMatrix<f64>; 2], usize)> {
    let k = params.p + 1;
    let path = compute_regime_path(y, params.r_lower, params.r_upper, params.d)?;
    let v = y.values();
    let zero = || DMatrix::<f64>::zeros(k, k);
    let mut a = [zero(), zero()];
    let mut b = [zero(), zero()];
    let mut d = [zero(), zero()];
    let mut yr = vec![0.0; k];
    let mut xr = vec![0.0; k];
    for (idx, &label) in path.labels.iter().enumerate() {
        let t = path.start + idx;
        let r = if label == 1 { 0 } else { 1 };
        let (_, alpha) = params.regime(label);
        yr[0] = 1.0;
        xr[0] = 1.0;
        for j in 1..k {
            yr[j] = v[t - j];
            xr[j] = v[t - j] * v[t - j];
        }
        let h: f64 = alpha.iter().zip(&xr).map(|(a, x)| a * x).sum();
        if !(h > 0.0) {
            return Err(BdarError::NonPositiveVariance { index: t, h });
        }
        let h15 = h * h.sqrt();
        for i in 0..k {
            for j in 0..k {
                a[r][(i, j)] += yr[i] * yr[j] / h;
                b[r][(i, j)] += xr[i] * xr[j] / (h * h);
                d[r][(i, j)] += yr[i] * xr[j] / h15;
            }
        }
    }
    let n = path.labels.len();
    for m in a.iter_mut().chain(b.iter_mut()).chain(d.iter_mut()) {
        *m /= n as f64;
    }
    Ok((a, b, d, n))
}

fn guarded_inverse(m: &DMatrix<f64>, block: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(BdarError::Singular {
            block: block.to_string(),
            condition,
        });
    }
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| BdarError::Singular {
            block: block.to_string(),
            condition,
        })
}

/// Plug-in covariance at an arbitrary parameter value and given moments.
pub fn asymptotic_covariance(
    params: &BdarParams,
    y: &TimeSeries,
    moments: InnovationMoments,
) -> Result<AsymptoticCovariance> {
    let k = params.p + 1;
    let (a, b, d, n) = information_blocks(params, y)?;
    let dim = 4 * k;
    let mut omega = DMatrix::zeros(dim, dim);
    let mut omega_inv = DMatrix::zeros(dim, dim);
    let mut sigma = DMatrix::zeros(dim, dim);
    let InnovationMoments { kappa3, kappa4 } = moments;
    for r in 0..2 {
        let base = 2 * k * r;
        let half_b = &b[r] * 0.5;
        let a_inv = guarded_inverse(&a[r], &format!("A{}", r + 1))?;
        let b_inv = guarded_inverse(&half_b, &format!("B{}", r + 1))?;
        omega.view_mut((base, base), (k, k)).copy_from(&a[r]);
        omega.view_mut((base + k, base + k), (k, k)).copy_from(&half_b);
        omega_inv.view_mut((base, base), (k, k)).copy_from(&a_inv);
        omega_inv.view_mut((base + k, base + k), (k, k)).copy_from(&b_inv);
        sigma.view_mut((base, base), (k, k)).copy_from(&a[r]);
        sigma
            .view_mut((base, base + k), (k, k))
            .copy_from(&(&d[r] * (kappa3 / 2.0)));
        sigma
            .view_mut((base + k, base), (k, k))
            .copy_from(&(d[r].transpose() * (kappa3 / 2.0)));
        sigma
            .view_mut((base + k, base + k), (k, k))
            .copy_from(&(&b[r] * ((kappa4 - 1.0) / 4.0)));
    }
    let mut cov = &omega_inv * &sigma * &omega_inv / n as f64;
    // exact symmetry
    let cov_t = cov.transpose();
    cov = (cov + cov_t) * 0.5;
    Ok(AsymptoticCovariance {
        omega,
        sigma,
        cov_lambda: cov,
        kappa3,
        kappa4,
        a,
        b,
        d,
    })
}

/// Standard errors of the fitted smooth coefficients.
pub fn asymptotic_se(fit: &FitResult, y: &TimeSeries) -> Result<InferenceResult> {
    if fit.n1 == 0 || fit.n2 == 0 {
        return Err(BdarError::InsufficientData("a fitted regime is empty".into()));
    }
    let moments = estimate_moments(&fit.standardized_residuals)?;
    let covariance = asymptotic_covariance(&fit.params, y, moments)?;
    let std_errors = covariance
        .cov_lambda
        .diagonal()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    Ok(InferenceResult {
        covariance,
        std_errors,
        names: BdarParams::coefficient_names(fit.params.p),
    })
}
