//! Residual autocorrelation checks: sample ACF, Ljung-Box and McLeod-Li.
//!
//! Portmanteau p-values use `m` degrees of freedom with no adjustment for the
//! number of fitted parameters.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{BdarError, Result};
use crate::estimator::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acf {
    /// `rho_1 .. rho_max_lag`.
    pub values: Vec<f64>,
    /// `1.96 / sqrt(n)`.
    pub band: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortmanteauKind {
    LjungBox,
    McleodLi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortmanteauResult {
    pub statistic: f64,
    pub m: usize,
    pub df: usize,
    pub p_value: f64,
    pub kind: PortmanteauKind,
}

pub fn acf(x: &[f64], max_lag: usize) -> Result<Acf> {
    let n = x.len();
    if max_lag == 0 || n <= max_lag {
        return Err(BdarError::InsufficientData(format!(
            "ACF needs 1 <= max_lag < n, got max_lag = {max_lag}, n = {n}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(BdarError::DegenerateSeries("series has zero variance".into()));
    }
    let values = (1..=max_lag)
        .map(|k| c.iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect();
    Ok(Acf {
        values,
        band: 1.96 / (n as f64).sqrt(),
        n,
    })
}

/// Upper tail `P(X > q)` of a chi-square law with `df` degrees of freedom.
pub fn chi_square_sf(q: f64, df: usize) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, q / 2.0).clamp(0.0, 1.0)
}

pub fn chi_square_cdf(q: f64, df: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    gamma_lr(df as f64 / 2.0, q / 2.0).clamp(0.0, 1.0)
}

fn portmanteau(x: &[f64], m: usize, kind: PortmanteauKind) -> Result<PortmanteauResult> {
    let r = acf(x, m)?;
    let n = r.n as f64;
    let statistic = n
        * (n + 2.0)
        * r.values
            .iter()
            .enumerate()
            .map(|(i, rho)| rho * rho / (n - (i + 1) as f64))
            .sum::<f64>();
    Ok(PortmanteauResult {
        statistic,
        m,
        df: m,
        p_value: chi_square_sf(statistic, m),
        kind,
    })
}

/// `Q_m = n (n + 2) sum_k rho_k^2 / (n - k)`.
pub fn ljung_box(x: &[f64], m: usize) -> Result<PortmanteauResult> {
    portmanteau(x, m, PortmanteauKind::LjungBox)
}

/// Ljung-Box statistic of the centered squares.
pub fn mcleod_li(x: &[f64], m: usize) -> Result<PortmanteauResult> {
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let mean = sq.iter().sum::<f64>() / sq.len().max(1) as f64;
    let centered: Vec<f64> = sq.iter().map(|v| v - mean).collect();
    portmanteau(&centered, m, PortmanteauKind::McleodLi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub ljung_box: Vec<PortmanteauResult>,
    pub mcleod_li: Vec<PortmanteauResult>,
    pub acf_residuals: Acf,
    pub acf_squared: Acf,
    pub df_rule: String,
}

/// Tests on the standardized residuals of a fit.
pub fn diagnose(fit: &FitResult, lags: &[usize], acf_lags: usize) -> Result<DiagnosticsReport> {
    let e = &fit.standardized_residuals;
    let sq: Vec<f64> = e.iter().map(|v| v * v).collect();
    Ok(DiagnosticsReport {
        ljung_box: lags.iter().map(|&m| ljung_box(e, m)).collect::<Result<_>>()?,
        mcleod_li: lags.iter().map(|&m| mcleod_li(e, m)).collect::<Result<_>>()?,
        acf_residuals: acf(e, acf_lags)?,
        acf_squared: acf(&sq, acf_lags)?,
        df_rule: "df = m".into(),
    })
}
