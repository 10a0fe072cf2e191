//! Order selection by BIC over a common effective sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BdarError, Result};
use crate::estimator::{fit, FitResult, SearchConfig};
use crate::model::TimeSeries;

/// `sum l_t + (2p + 2)(ln n1 + ln n2)`.
pub fn bic(fit: &FitResult, p: usize) -> Result<f64> {
    if fit.n1 == 0 || fit.n2 == 0 {
        return Err(BdarError::EmptyRegime(format!(
            "BIC penalty undefined with n1 = {}, n2 = {}",
            fit.n1, fit.n2
        )));
    }
    let loss: f64 = fit.per_term.iter().sum();
    Ok(loss + bic_penalty(p, fit.n1, fit.n2))
}

pub fn bic_penalty(p: usize, n1: usize, n2: usize) -> f64 {
    (2 * p + 2) as f64 * ((n1 as f64).ln() + (n2 as f64).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub p: usize,
    pub bic: Option<f64>,
    pub neg2_loglik: Option<f64>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicTable {
    pub rows: Vec<BicRow>,
    pub chosen_p: usize,
    /// Pre-sample length shared by every row.
    pub pre_sample_len: usize,
}

impl BicTable {
    pub fn chosen(&self) -> Option<&BicRow> {
        self.rows.iter().find(|r| r.p == self.chosen_p)
    }
}

/// Fits every `p` in `1..=p_max` on the same sample and picks the BIC minimiser.
pub fn select_order(y: &TimeSeries, p_max: usize, cfg: &SearchConfig) -> Result<BicTable> {
    select_order_with(y, p_max, cfg, false)
}

/// As [`select_order`], optionally adding the intercept-only row `p = 0`.
pub fn select_order_with(
    y: &TimeSeries,
    p_max: usize,
    cfg: &SearchConfig,
    include_p0: bool,
) -> Result<BicTable> {
    if p_max == 0 {
        return Err(BdarError::Domain("p_max must be >= 1".into()));
    }
    cfg.validate()?;
    let n0 = y.pre_sample_len().max(p_max).max(cfg.d_max);
    if n0 >= y.len() {
        return Err(BdarError::InsufficientData(format!(
            "{} values leave no sample after a pre-sample of {n0}",
            y.len()
        )));
    }
    let aligned = y.with_pre_sample(n0)?;
    let first = if include_p0 { 0 } else { 1 };
    let rows: Vec<BicRow> = (first..=p_max)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&p| match fit(&aligned, p, cfg).and_then(|f| Ok((bic(&f, p)?, f))) {
            Ok((b, f)) => BicRow {
                p,
                bic: Some(b),
                neg2_loglik: Some(f.neg2_loglik),
                n1: Some(f.n1),
                n2: Some(f.n2),
                fit: Some(f),
                error: None,
            },
            Err(e) => BicRow {
                p,
                bic: None,
                neg2_loglik: None,
                n1: None,
                n2: None,
                fit: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    // strict comparison keeps the smaller p on ties
    let mut best: Option<(usize, f64)> = None;
    for r in &rows {
        if let Some(b) = r.bic {
            if best.is_none_or(|(_, v)| b < v) {
                best = Some((r.p, b));
            }
        }
    }
    let (chosen_p, _) = best.ok_or_else(|| {
        let reasons: Vec<String> = rows
            .iter()
            .map(|r| format!("p={}: {}", r.p, r.error.as_deref().unwrap_or("?")))
            .collect();
        BdarError::SearchFailed(format!("every order failed ({})", reasons.join("; ")))
    })?;
    Ok(BicTable {
        rows,
        chosen_p,
        pre_sample_len: n0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::neg2_loglik;
    use crate::model::{simulate_path, BdarParams, InnovationSpec, SimulationOptions};

    fn dummy_fit(per_term: Vec<f64>, n1: usize, n2: usize) -> FitResult {
        FitResult {
            params: BdarParams::reference_design(),
            neg2_loglik: per_term.iter().sum(),
            n: n1 + n2,
            n1,
            n2,
            pre_sample_len: 6,
            per_term,
            standardized_residuals: vec![],
            converged: true,
            grid_cells_evaluated: 1,
            lambda_per_cell: None,
        }
    }

    #[test]
    fn formula_substitution() {
        let f = dummy_fit(vec![0.5; 200], 100, 100);
        let b = bic(&f, 2).unwrap();
        assert!((b - (100.0 + 12.0 * 100f64.ln())).abs() < 1e-9);
        assert!((b - 155.26).abs() < 0.01);
        let b0 = bic(&f, 0).unwrap();
        assert!((b0 - (100.0 + 2.0 * (2.0 * 100f64.ln()))).abs() < 1e-9);
    }

    #[test]
    fn penalty_increases_with_order() {
        for p in 0..6 {
            assert!(bic_penalty(p + 1, 50, 70) > bic_penalty(p, 50, 70));
        }
    }

    #[test]
    fn empty_regime_has_no_penalty() {
        let f = dummy_fit(vec![1.0; 10], 10, 0);
        assert!(matches!(bic(&f, 1), Err(BdarError::EmptyRegime(_))));
    }

    fn reference_sample(n: usize, seed: u64) -> TimeSeries {
        simulate_path(
            &BdarParams::reference_design(),
            n,
            &InnovationSpec::StandardNormal,
            &SimulationOptions { burn_in: 500, pre_sample_len: Some(6) },
            seed,
        )
        .unwrap()
        .series
    }

    #[test]
    fn table_rows_share_the_sample_and_recompute_exactly() {
        let y = reference_sample(400, 31);
        let cfg = SearchConfig::fast(400);
        let table = select_order(&y, 3, &cfg).unwrap();
        assert_eq!(table.rows.len(), 3);
        for row in &table.rows {
            let f = row.fit.as_ref().unwrap();
            assert_eq!(f.n, 400);
            assert_eq!(f.pre_sample_len, 6);
            let again = neg2_loglik(&f.params, &y.with_pre_sample(table.pre_sample_len).unwrap()).unwrap();
            let recomputed = again.per_term.iter().sum::<f64>() + bic_penalty(row.p, again.n1, again.n2);
            assert_eq!(recomputed.to_bits(), row.bic.unwrap().to_bits());
        }
        let min = table.rows.iter().filter_map(|r| r.bic).fold(f64::INFINITY, f64::min);
        assert_eq!(table.chosen().unwrap().bic, Some(min));
    }

    #[test]
    fn boundary_menu_and_p0_row() {
        let y = reference_sample(800, 32);
        let cfg = SearchConfig::fast(800);
        let table = select_order_with(&y, 2, &cfg, true).unwrap();
        assert_eq!(table.rows.iter().map(|r| r.p).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(table.chosen_p, 2);
    }

    #[test]
    fn p_max_zero_rejected() {
        let y = reference_sample(100, 1);
        assert!(select_order(&y, 0, &SearchConfig::default()).is_err());
    }
}
