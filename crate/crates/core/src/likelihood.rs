//! Conditional moments and the Gaussian quasi log-likelihood.
//!
//! Each term is `l_t = log h_t + u_t^2 / h_t` (the likelihood times -2 with
//! the `log 2 pi` constant dropped), summed over `t = 1..n` after the
//! pre-sample. Leading buffer-stuck terms use the lower-regime convention.

use serde::{Deserialize, Serialize};

use crate::error::{BdarError, Result};
use crate::model::{compute_regime_path, BdarParams, RegimePath, TimeSeries};

/// Regressors for every term entering the likelihood.
///
/// Row `k` corresponds to series index `start + k`; the mean row is
/// `(1, y_{t-1}, .., y_{t-p})` and the variance row `(1, y_{t-1}^2, .., y_{t-p}^2)`.
#[derive(Debug, Clone)]
pub struct LikelihoodWorkspace {
    pub p: usize,
    pub start: usize,
    pub regressors_mean: Vec<f64>,
    pub regressors_var: Vec<f64>,
    pub targets: Vec<f64>,
}

impl LikelihoodWorkspace {
    /// Builds regressors for terms `start..len`. Requires `start >= p`.
    pub fn new(y: &TimeSeries, p: usize, start: usize) -> Result<Self> {
        if start < p {
            return Err(BdarError::InsufficientData(format!(
                "start index {start} leaves fewer than p = {p} lags"
            )));
        }
        if start >= y.len() {
            return Err(BdarError::InsufficientData(format!(
                "no terms after index {start} in a series of length {}",
                y.len()
            )));
        }
        let v = y.values();
        let k = p + 1;
        let n = v.len() - start;
        let mut mean = Vec::with_capacity(n * k);
        let mut var = Vec::with_capacity(n * k);
        for t in start..v.len() {
            mean.push(1.0);
            var.push(1.0);
            for j in 1..=p {
                mean.push(v[t - j]);
                var.push(v[t - j] * v[t - j]);
            }
        }
        Ok(Self {
            p,
            start,
            regressors_mean: mean,
            regressors_var: var,
            targets: v[start..].to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn k(&self) -> usize {
        self.p + 1
    }

    pub fn mean_row(&self, k: usize) -> &[f64] {
        let w = self.k();
        &self.regressors_mean[k * w..(k + 1) * w]
    }

    pub fn var_row(&self, k: usize) -> &[f64] {
        let w = self.k();
        &self.regressors_var[k * w..(k + 1) * w]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conditional mean and variance at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    pub mu: f64,
    pub h: f64,
}

/// `mu_t` and `h_t` at series index `t` under the label in `regime`.
pub fn conditional_moments(
    params: &BdarParams,
    y: &TimeSeries,
    regime: &RegimePath,
    t: usize,
) -> Result<ConditionalMoments> {
    let label = regime.label_at(t).ok_or_else(|| {
        BdarError::Domain(format!("index {t} outside the regime path"))
    })?;
    if t < params.p || t >= y.len() {
        return Err(BdarError::Domain(format!("index {t} outside the effective range")));
    }
    let v = y.values();
    let (phi, alpha) = params.regime(label);
    let mut mu = phi[0];
    let mut h = alpha[0];
    for j in 1..=params.p {
        mu += phi[j] * v[t - j];
        h += alpha[j] * v[t - j] * v[t - j];
    }
    if !(h > 0.0) {
        return Err(BdarError::NonPositiveVariance { index: t, h });
    }
    Ok(ConditionalMoments { mu, h })
}

/// Modified quasi log-likelihood (times -2) with its per-term contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodValue {
    pub total: f64,
    pub per_term: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    /// Every threshold value sat inside the buffer zone, so all labels are
    /// conventional.
    pub degenerate_regime: bool,
}

/// `L~_n(theta)` summed over the terms after the pre-sample.
pub fn neg2_loglik(params: &BdarParams, y: &TimeSeries) -> Result<LikelihoodValue> {
    params.validate()?;
    let n0 = y.pre_sample_len();
    if n0 < params.p.max(params.d) {
        return Err(BdarError::InsufficientData(format!(
            "pre-sample of {n0} values is shorter than max(p, d) = {}",
            params.p.max(params.d)
        )));
    }
    if y.n_effective() == 0 {
        return Err(BdarError::InsufficientData("no observations after the pre-sample".into()));
    }
    let path = compute_regime_path(y, params.r_lower, params.r_upper, params.d)?;
    debug_assert_eq!(path.start, n0);
    neg2_loglik_on_path(params, y, &path)
}

/// Same as [`neg2_loglik`] with a precomputed regime path starting at the
/// pre-sample boundary.
pub fn neg2_loglik_on_path(
    params: &BdarParams,
    y: &TimeSeries,
    path: &RegimePath,
) -> Result<LikelihoodValue> {
    let v = y.values();
    let mut per_term = Vec::with_capacity(path.labels.len());
    let mut total = 0.0;
    for (k, &label) in path.labels.iter().enumerate() {
        let t = path.start + k;
        let (phi, alpha) = params.regime(label);
        let mut mu = phi[0];
        let mut h = alpha[0];
        for j in 1..=params.p {
            mu += phi[j] * v[t - j];
            h += alpha[j] * v[t - j] * v[t - j];
        }
        if !(h > 0.0) {
            return Err(BdarError::NonPositiveVariance { index: t, h });
        }
        let u = v[t] - mu;
        let l = h.ln() + u * u / h;
        per_term.push(l);
        total += l;
    }
    let n1 = path.n_lower();
    Ok(LikelihoodValue {
        total,
        per_term,
        n1,
        n2: path.labels.len() - n1,
        degenerate_regime: path.first_identified_index.is_none(),
    })
}

/// `(y_t - mu_t) / sqrt(h_t)` over the terms after the pre-sample.
pub fn standardized_residuals(params: &BdarParams, y: &TimeSeries) -> Result<Vec<f64>> {
    let path = compute_regime_path(y, params.r_lower, params.r_upper, params.d)?;
    path.labels
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let t = path.start + k;
            let m = conditional_moments(params, y, &path, t)?;
            Ok((y.values()[t] - m.mu) / m.h.sqrt())
        })
        .collect()
}
