//! Sufficient conditions for a strictly stationary, geometrically ergodic
//! solution.
//!
//! All three conditions only look at the lag coefficients; intercepts never
//! matter. Failing every condition means "not certified", not "nonstationary".

use serde::{Deserialize, Serialize};

use crate::error::{BdarError, Result};
use crate::model::{BdarParams, InnovationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionValue {
    pub value: f64,
    pub holds: bool,
}

impl ConditionValue {
    fn new(value: f64) -> Self {
        Self {
            value,
            holds: value < 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionI {
    pub value: f64,
    pub holds: bool,
    pub r_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionII {
    pub value: f64,
    pub holds: bool,
    pub r_used: f64,
    pub requires_symmetric_density: bool,
    pub density_symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub condition_i: ConditionI,
    pub condition_ii: ConditionII,
    pub condition_iii: ConditionValue,
    pub any_holds: bool,
}

/// `sup_i |phi_ij|` and `sup_i alpha_ij` for j = 1..p.
fn lag_sups(params: &BdarParams) -> (Vec<f64>, Vec<f64>) {
    let phi = (1..=params.p)
        .map(|j| params.phi1[j].abs().max(params.phi2[j].abs()))
        .collect();
    let alpha = (1..=params.p)
        .map(|j| params.alpha1[j].max(params.alpha2[j]))
        .collect();
    (phi, alpha)
}

/// `sum_j ( sup|phi_j|^r + sup alpha_j^{r/2} E|eps|^r )`, r in (0, 1].
pub fn check_condition_i(params: &BdarParams, abs_moment_r: f64, r: f64) -> Result<ConditionValue> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(BdarError::Domain(format!("condition (i) needs r in (0, 1], got {r}")));
    }
    let (phi, alpha) = lag_sups(params);
    let value = phi
        .iter()
        .zip(&alpha)
        .map(|(f, a)| f.powf(r) + a.powf(r / 2.0) * abs_moment_r)
        .sum();
    Ok(ConditionValue::new(value))
}

/// `(sum_j sup|phi_j|)^r + sum_j sup alpha_j^{r/2} E|eps|^r`, r in (1, 2],
/// valid for a symmetric innovation density.
pub fn check_condition_ii(params: &BdarParams, abs_moment_r: f64, r: f64) -> Result<ConditionValue> {
    if !(r > 1.0 && r <= 2.0) {
        return Err(BdarError::Domain(format!("condition (ii) needs r in (1, 2], got {r}")));
    }
    let (phi, alpha) = lag_sups(params);
    let phi_sum: f64 = phi.iter().sum();
    let alpha_part: f64 = alpha.iter().map(|a| a.powf(r / 2.0)).sum();
    Ok(ConditionValue::new(phi_sum.powf(r) + alpha_part * abs_moment_r))
}

/// `(1 + 3 m2)(sum_j sup|phi_j|)^4 + (m4 + 3 m2)(sum_j sup alpha_j)^2`.
pub fn check_condition_iii(params: &BdarParams, m2: f64, m4: f64) -> Result<ConditionValue> {
    if !(m4 > 0.0) || !m4.is_finite() {
        return Err(BdarError::Domain(format!("condition (iii) needs finite E eps^4 > 0, got {m4}")));
    }
    let (phi, alpha) = lag_sups(params);
    let phi_sum: f64 = phi.iter().sum();
    let alpha_sum: f64 = alpha.iter().sum();
    Ok(ConditionValue::new(
        (1.0 + 3.0 * m2) * phi_sum.powi(4) + (m4 + 3.0 * m2) * alpha_sum.powi(2),
    ))
}

/// Evaluates all three conditions at fixed exponents.
pub fn stationarity_report_at(
    params: &BdarParams,
    innovations: &InnovationSpec,
    r_i: f64,
    r_ii: f64,
) -> Result<StationarityReport> {
    let moments = innovations.abs_moments(&[r_i, r_ii]);
    let m4 = innovations.fourth_moment().value;
    let ci = check_condition_i(params, moments[0].value, r_i)?;
    let cii = check_condition_ii(params, moments[1].value, r_ii)?;
    let ciii = if m4.is_finite() {
        check_condition_iii(params, 1.0, m4)?
    } else {
        ConditionValue {
            value: f64::INFINITY,
            holds: false,
        }
    };
    Ok(assemble(ci, r_i, cii, r_ii, ciii, innovations.is_symmetric()))
}

/// Evaluates the conditions, choosing for (i) and (ii) the exponent on a grid
/// that minimises the condition value.
pub fn stationarity_report(params: &BdarParams, innovations: &InnovationSpec) -> Result<StationarityReport> {
    let grid_i: Vec<f64> = (1..=20).map(|k| k as f64 * 0.05).collect();
    let grid_ii: Vec<f64> = (1..=20).map(|k| 1.0 + k as f64 * 0.05).collect();
    let mut all = grid_i.clone();
    all.extend_from_slice(&grid_ii);
    let moments = innovations.abs_moments(&all);

    let mut best_i = (ConditionValue::new(f64::INFINITY), 1.0);
    for (r, m) in grid_i.iter().zip(&moments[..grid_i.len()]) {
        let c = check_condition_i(params, m.value, *r)?;
        if c.value < best_i.0.value {
            best_i = (c, *r);
        }
    }
    let mut best_ii = (ConditionValue::new(f64::INFINITY), 2.0);
    for (r, m) in grid_ii.iter().zip(&moments[grid_i.len()..]) {
        let c = check_condition_ii(params, m.value, *r)?;
        if c.value < best_ii.0.value {
            best_ii = (c, *r);
        }
    }
    let m4 = innovations.fourth_moment().value;
    let ciii = if m4.is_finite() {
        check_condition_iii(params, 1.0, m4)?
    } else {
        ConditionValue {
            value: f64::INFINITY,
            holds: false,
        }
    };
    Ok(assemble(
        best_i.0,
        best_i.1,
        best_ii.0,
        best_ii.1,
        ciii,
        innovations.is_symmetric(),
    ))
}

fn assemble(
    ci: ConditionValue,
    r_i: f64,
    cii: ConditionValue,
    r_ii: f64,
    ciii: ConditionValue,
    symmetric: bool,
) -> StationarityReport {
    let condition_ii = ConditionII {
        value: cii.value,
        holds: cii.holds && symmetric,
        r_used: r_ii,
        requires_symmetric_density: true,
        density_symmetric: symmetric,
    };
    let condition_i = ConditionI {
        value: ci.value,
        holds: ci.holds,
        r_used: r_i,
    };
    StationarityReport {
        any_holds: condition_i.holds || condition_ii.holds || ciii.holds,
        condition_i,
        condition_ii,
        condition_iii: ciii,
    }
}
