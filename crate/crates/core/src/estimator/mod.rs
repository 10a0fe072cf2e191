//! Two-step Gaussian QML estimation.
//!
//! For every candidate `(r_lower, r_upper, d)` the regime labels are fixed, so
//! the likelihood splits into two independent double AR sub-fits. The outer
//! step profiles over the grid of sample order statistics and delays.
//!
//! The full grid is exact but quadratic in the number of candidates. With
//! `grid_thinning > 1` a coarse pass over every `s`-th order statistic is
//! followed, when `refine_top > 0`, by finer passes around the best cells
//! until the stride reaches one.

mod optim;

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optim::OptimizerConfig;
use optim::{fit_regime, RegimeData};

use crate::error::{BdarError, Result};
use crate::likelihood::{neg2_loglik, standardized_residuals, LikelihoodWorkspace};
use crate::model::{fill_regime_labels, BdarParams, TimeSeries};

/// Threshold/delay search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub percentile_lo: f64,
    pub percentile_hi: f64,
    pub d_max: usize,
    pub min_regime_frac: f64,
    /// Defaults to `10 (p + 1)` when unset.
    pub min_regime_count: Option<usize>,
    pub grid_thinning: usize,
    /// Number of best cells refined at each finer stride (0 disables).
    pub refine_top: usize,
    /// Restrict the search to `r_lower = r_upper` (no buffer zone).
    pub equal_thresholds: bool,
    /// Reuse the neighbouring cell's estimate as an extra start.
    pub warm_start: bool,
    /// Keep every cell's inner minimum in the result.
    pub record_cells: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            percentile_lo: 10.0,
            percentile_hi: 90.0,
            d_max: 6,
            min_regime_frac: 0.05,
            min_regime_count: None,
            grid_thinning: 1,
            refine_top: 4,
            equal_thresholds: false,
            warm_start: true,
            record_cells: false,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl SearchConfig {
    /// Coarse-to-fine settings: stride chosen so that roughly 24 lower
    /// candidates remain, six cells refined per stage, one cold start per cell.
    pub fn fast(n: usize) -> Self {
        let candidates = n * 4 / 5;
        Self {
            grid_thinning: (candidates / 24).max(1),
            refine_top: 6,
            optimizer: OptimizerConfig {
                n_starts: 1,
                ..OptimizerConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..100.0).contains(&self.percentile_lo)
            || !(self.percentile_lo < self.percentile_hi && self.percentile_hi <= 100.0)
        {
            return Err(BdarError::Domain(format!(
                "need 0 <= percentile_lo < percentile_hi <= 100, got {} and {}",
                self.percentile_lo, self.percentile_hi
            )));
        }
        if self.d_max == 0 {
            return Err(BdarError::Domain("d_max must be >= 1".into()));
        }
        if !(self.min_regime_frac > 0.0 && self.min_regime_frac < 0.5) {
            return Err(BdarError::Domain(format!(
                "min_regime_frac must lie in (0, 0.5), got {}",
                self.min_regime_frac
            )));
        }
        if self.grid_thinning == 0 {
            return Err(BdarError::Domain("grid_thinning must be >= 1".into()));
        }
        if self.optimizer.max_iters == 0 || !(self.optimizer.tolerance > 0.0) {
            return Err(BdarError::Domain("optimizer needs max_iters >= 1 and tolerance > 0".into()));
        }
        Ok(())
    }

    fn required_count(&self, p: usize, n: usize) -> usize {
        let by_frac = (self.min_regime_frac * n as f64).ceil() as usize;
        by_frac.max(self.min_regime_count.unwrap_or(10 * (p + 1))).max(1)
    }
}

/// Inner minimum at one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub r_lower: f64,
    pub r_upper: f64,
    pub d: usize,
    pub loss: f64,
    pub lambda: Vec<f64>,
    pub converged: bool,
}

/// Output of [`fit_lambda_given_thresholds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub params: BdarParams,
    pub loss: f64,
    pub converged: bool,
    pub n1: usize,
    pub n2: usize,
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BdarParams,
    /// `L~_n` re-evaluated at `params`.
    pub neg2_loglik: f64,
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub pre_sample_len: usize,
    pub per_term: Vec<f64>,
    pub standardized_residuals: Vec<f64>,
    pub converged: bool,
    pub grid_cells_evaluated: usize,
    pub lambda_per_cell: Option<Vec<CellRecord>>,
}

/// Precomputed data shared by every cell of one search.
struct SearchContext<'a> {
    y: &'a TimeSeries,
    ws: LikelihoodWorkspace,
    cfg: &'a SearchConfig,
    required: usize,
    candidates: Vec<f64>,
}

#[derive(Debug, Clone)]
struct CellEval {
    loss: f64,
    lambda: Vec<f64>,
    converged: bool,
}

#[derive(Debug, Clone)]
struct Evaluated {
    d: usize,
    i: usize,
    j: usize,
    r_lower: f64,
    r_upper: f64,
    eval: CellEval,
}

#[derive(Default)]
struct Scratch {
    labels: Vec<u8>,
    lower: RegimeData,
    upper: RegimeData,
}

impl<'a> SearchContext<'a> {
    fn new(y: &'a TimeSeries, p: usize, cfg: &'a SearchConfig) -> Result<Self> {
        cfg.validate()?;
        let n0 = y.pre_sample_len();
        if n0 < p.max(cfg.d_max) {
            return Err(BdarError::InsufficientData(format!(
                "pre-sample of {n0} values is shorter than max(p, d_max) = {}",
                p.max(cfg.d_max)
            )));
        }
        let n = y.n_effective();
        let required = cfg.required_count(p, n);
        if n < 2 * required {
            return Err(BdarError::InsufficientData(format!(
                "{n} observations cannot hold two regimes of at least {required}"
            )));
        }
        let ws = LikelihoodWorkspace::new(y, p, n0)?;
        Ok(Self {
            y,
            ws,
            cfg,
            required,
            candidates: threshold_candidates(y.effective(), cfg.percentile_lo, cfg.percentile_hi),
        })
    }

    fn n(&self) -> usize {
        self.ws.n()
    }

    /// Fills labels and the two regime data sets; `None` when a regime is
    /// below the admissible size.
    fn prepare(&self, d: usize, rl: f64, ru: f64, s: &mut Scratch) -> std::result::Result<(), (usize, usize)> {
        let n = self.n();
        s.labels.resize(n, 0);
        fill_regime_labels(self.y.values(), self.ws.start, d, rl, ru, &mut s.labels);
        let n1 = s.labels.iter().filter(|&&l| l == 1).count();
        let n2 = n - n1;
        if n1 < self.required || n2 < self.required {
            return Err((n1, n2));
        }
        let k = self.ws.k();
        s.lower.clear(k);
        s.upper.clear(k);
        for (t, &l) in s.labels.iter().enumerate() {
            let target = if l == 1 { &mut s.lower } else { &mut s.upper };
            target.push(self.ws.targets[t], self.ws.mean_row(t), self.ws.var_row(t));
        }
        Ok(())
    }

    fn fit_prepared(&self, s: &Scratch, warm: Option<&[f64]>) -> CellEval {
        let k = self.ws.k();
        let opt = &self.cfg.optimizer;
        let lo = fit_regime(&s.lower, warm.map(|w| &w[..2 * k]), opt);
        let up = fit_regime(&s.upper, warm.map(|w| &w[2 * k..]), opt);
        let mut lambda = lo.coefs;
        lambda.extend_from_slice(&up.coefs);
        CellEval {
            loss: lo.loss + up.loss,
            lambda,
            converged: lo.converged && up.converged,
        }
    }

    /// Evaluates a row of cells in order, chaining warm starts and reusing
    /// results for repeated label vectors.
    fn eval_row(&self, d: usize, cells: &[(usize, usize)], warm0: Option<&[f64]>) -> Vec<Evaluated> {
        let mut scratch = Scratch::default();
        let mut cache: HashMap<Vec<u64>, CellEval> = HashMap::new();
        let mut warm: Option<Vec<f64>> = warm0.map(|w| w.to_vec());
        let mut out = Vec::with_capacity(cells.len());
        for &(i, j) in cells {
            let (rl, ru) = (self.candidates[i], self.candidates[j]);
            if self.prepare(d, rl, ru, &mut scratch).is_err() {
                continue;
            }
            let key = pack_labels(&scratch.labels);
            let eval = match cache.get(&key) {
                Some(e) => e.clone(),
                None => {
                    let w = if self.cfg.warm_start { warm.as_deref() } else { None };
                    let e = self.fit_prepared(&scratch, w);
                    cache.insert(key, e.clone());
                    e
                }
            };
            if eval.loss.is_finite() {
                warm = Some(eval.lambda.clone());
            }
            out.push(Evaluated {
                d,
                i,
                j,
                r_lower: rl,
                r_upper: ru,
                eval,
            });
        }
        out
    }

    fn run_rows(&self, rows: Vec<(usize, Vec<(usize, usize)>, Option<Vec<f64>>)>) -> Vec<Evaluated> {
        rows.par_iter()
            .map(|(d, cells, warm)| self.eval_row(*d, cells, warm.as_deref()))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }

    fn search(&self) -> Result<(Vec<Evaluated>, usize)> {
        let m = self.candidates.len();
        if m == 0 {
            return Err(BdarError::SearchFailed("no threshold candidates".into()));
        }
        let mut stride = self.cfg.grid_thinning.max(1);
        let eq = self.cfg.equal_thresholds;

        let mut rows = Vec::new();
        for d in 1..=self.cfg.d_max {
            if eq {
                let cells = (0..m).step_by(stride).map(|i| (i, i)).collect();
                rows.push((d, cells, None));
            } else {
                for i in (0..m).step_by(stride) {
                    let cells = (i..m).step_by(stride).map(|j| (i, j)).collect();
                    rows.push((d, cells, None));
                }
            }
        }
        let mut all = self.run_rows(rows);
        let mut seen: HashSet<(usize, usize, usize)> = all.iter().map(|e| (e.d, e.i, e.j)).collect();

        while stride > 1 && self.cfg.refine_top > 0 {
            let fine = (stride / 4).max(1);
            let mut order: Vec<usize> = (0..all.len()).collect();
            order.sort_by(|&a, &b| cmp_cells(&all[a], &all[b]));
            // refine distinct regions: skip cells inside a window already picked
            let mut picked: Vec<usize> = Vec::new();
            for &idx in &order {
                if picked.len() == self.cfg.refine_top {
                    break;
                }
                let c = &all[idx];
                let near = |p: &usize| {
                    let q = &all[*p];
                    q.d == c.d && q.i.abs_diff(c.i) <= stride && q.j.abs_diff(c.j) <= stride
                };
                if !picked.iter().any(near) {
                    picked.push(idx);
                }
            }
            let mut rows: Vec<(usize, Vec<(usize, usize)>, Option<Vec<f64>>)> = Vec::new();
            for &idx in &picked {
                let top = &all[idx];
                let span = |c: usize| {
                    let lo = c.saturating_sub(stride);
                    let hi = (c + stride).min(m - 1);
                    (lo..=hi).step_by(fine).collect::<Vec<_>>()
                };
                for i in span(top.i) {
                    let cells: Vec<(usize, usize)> = if eq {
                        vec![(i, i)]
                    } else {
                        span(top.j).into_iter().filter(|&j| j >= i).map(|j| (i, j)).collect()
                    };
                    let cells: Vec<_> = cells
                        .into_iter()
                        .filter(|&(a, b)| seen.insert((top.d, a, b)))
                        .collect();
                    if !cells.is_empty() {
                        rows.push((top.d, cells, Some(top.eval.lambda.clone())));
                    }
                }
            }
            all.extend(self.run_rows(rows));
            stride = fine;
        }
        let count = all.len();
        Ok((all, count))
    }
}

/// Ordering used to pick the winning cell: smaller loss, then narrower
/// buffer, then smaller `r_lower`, then smaller `d`.
fn cmp_cells(a: &Evaluated, b: &Evaluated) -> std::cmp::Ordering {
    a.eval
        .loss
        .total_cmp(&b.eval.loss)
        .then((a.r_upper - a.r_lower).total_cmp(&(b.r_upper - b.r_lower)))
        .then(a.r_lower.total_cmp(&b.r_lower))
        .then(a.d.cmp(&b.d))
}

fn pack_labels(labels: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; labels.len().div_ceil(64)];
    for (t, &l) in labels.iter().enumerate() {
        if l == 1 {
            out[t / 64] |= 1 << (t % 64);
        }
    }
    out
}

/// Distinct sorted sample values between the two percentiles (inclusive).
pub fn threshold_candidates(values: &[f64], pct_lo: f64, pct_hi: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    let lo = (pct_lo / 100.0 * last).round() as usize;
    let hi = (pct_hi / 100.0 * last).round() as usize;
    let mut out: Vec<f64> = sorted[lo..=hi.min(sorted.len() - 1)].to_vec();
    out.dedup();
    out
}

/// Inner QML fit for fixed thresholds and delay, from the cold starts.
pub fn fit_lambda_given_thresholds(
    y: &TimeSeries,
    p: usize,
    r_lower: f64,
    r_upper: f64,
    d: usize,
    cfg: &SearchConfig,
) -> Result<CellFit> {
    if d == 0 || d > cfg.d_max {
        return Err(BdarError::Domain(format!("d = {d} outside 1..={}", cfg.d_max)));
    }
    if r_lower > r_upper {
        return Err(BdarError::Domain(format!("r_lower = {r_lower} exceeds r_upper = {r_upper}")));
    }
    let ctx = SearchContext::new(y, p, cfg)?;
    let mut s = Scratch::default();
    ctx.prepare(d, r_lower, r_upper, &mut s).map_err(|(n1, n2)| BdarError::CellRejected {
        n1,
        n2,
        required: ctx.required,
    })?;
    let e = ctx.fit_prepared(&s, None);
    let n1 = s.lower.len();
    Ok(CellFit {
        params: BdarParams::from_lambda(p, d, &e.lambda, r_lower, r_upper),
        loss: e.loss,
        converged: e.converged,
        n1,
        n2: ctx.n() - n1,
    })
}

/// Profile QML fit over thresholds and delay.
pub fn fit(y: &TimeSeries, p: usize, cfg: &SearchConfig) -> Result<FitResult> {
    let ctx = SearchContext::new(y, p, cfg)?;
    let (cells, count) = ctx.search()?;
    let best = cells
        .iter()
        .filter(|e| e.eval.loss.is_finite())
        .min_by(|a, b| cmp_cells(a, b))
        .ok_or_else(|| {
            BdarError::SearchFailed(format!(
                "no admissible cell: every candidate leaves a regime below {} observations",
                ctx.required
            ))
        })?;
    let params = BdarParams::from_lambda(p, best.d, &best.eval.lambda, best.r_lower, best.r_upper);
    let lik = neg2_loglik(&params, y)?;
    let residuals = standardized_residuals(&params, y)?;
    let lambda_per_cell = cfg.record_cells.then(|| {
        cells
            .iter()
            .map(|e| CellRecord {
                r_lower: e.r_lower,
                r_upper: e.r_upper,
                d: e.d,
                loss: e.eval.loss,
                lambda: e.eval.lambda.clone(),
                converged: e.eval.converged,
            })
            .collect()
    });
    Ok(FitResult {
        converged: best.eval.converged,
        params,
        neg2_loglik: lik.total,
        n: lik.per_term.len(),
        n1: lik.n1,
        n2: lik.n2,
        pre_sample_len: y.pre_sample_len(),
        per_term: lik.per_term,
        standardized_residuals: residuals,
        grid_cells_evaluated: count,
        lambda_per_cell,
    })
}
