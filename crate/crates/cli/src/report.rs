//! JSON payloads and stderr tables for the subcommands.

use std::path::Path;

use bdar::diagnostics::DiagnosticsReport;
use bdar::harness::McReport;
use bdar::inference::InferenceResult;
use bdar::model::SimulatedPath;
use bdar::selection::BicTable;
use bdar::stationarity::StationarityReport;
use bdar::{BdarParams, FitResult};
use serde::{Deserialize, Serialize};

#[derive(Serialize)]
pub struct SimulateReport {
    pub seed: u64,
    pub n: usize,
    pub pre_sample_len: usize,
    pub n_lower: usize,
    pub n_upper: usize,
    pub out: String,
}

impl SimulateReport {
    pub fn new(path: &SimulatedPath, seed: u64, out: &Path) -> Self {
        // labels cover the whole path; count only the effective sample
        let eff = &path.labels[path.series.pre_sample_len()..];
        let n_lower = eff.iter().filter(|l| **l == 1).count();
        Self {
            seed,
            n: path.series.n_effective(),
            pre_sample_len: path.series.pre_sample_len(),
            n_lower,
            n_upper: eff.len() - n_lower,
            out: out.display().to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Serialize, Deserialize)]
pub struct FitReport {
    pub params: BdarParams,
    pub coefficients: Vec<Coefficient>,
    pub neg2_loglik: f64,
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub pre_sample_len: usize,
    pub converged: bool,
    pub grid_cells_evaluated: usize,
    pub kappa3: f64,
    pub kappa4: f64,
    pub per_term: Vec<f64>,
    pub standardized_residuals: Vec<f64>,
}

impl FitReport {
    pub fn new(f: FitResult, inf: InferenceResult) -> Self {
        let coefficients = inf
            .names
            .iter()
            .zip(f.params.lambda())
            .zip(&inf.std_errors)
            .map(|((name, estimate), se)| Coefficient {
                name: name.clone(),
                estimate,
                std_error: *se,
            })
            .collect();
        Self {
            params: f.params,
            coefficients,
            neg2_loglik: f.neg2_loglik,
            n: f.n,
            n1: f.n1,
            n2: f.n2,
            pre_sample_len: f.pre_sample_len,
            converged: f.converged,
            grid_cells_evaluated: f.grid_cells_evaluated,
            kappa3: inf.covariance.kappa3,
            kappa4: inf.covariance.kappa4,
            per_term: f.per_term,
            standardized_residuals: f.standardized_residuals,
        }
    }

    pub fn as_fit_result(&self) -> FitResult {
        FitResult {
            params: self.params.clone(),
            neg2_loglik: self.neg2_loglik,
            n: self.n,
            n1: self.n1,
            n2: self.n2,
            pre_sample_len: self.pre_sample_len,
            per_term: self.per_term.clone(),
            standardized_residuals: self.standardized_residuals.clone(),
            converged: self.converged,
            grid_cells_evaluated: self.grid_cells_evaluated,
            lambda_per_cell: None,
        }
    }
}

#[derive(Serialize)]
pub struct SelectRow {
    pub p: usize,
    pub bic: Option<f64>,
    pub neg2_loglik: Option<f64>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub r_lower: Option<f64>,
    pub r_upper: Option<f64>,
    pub d: Option<usize>,
    pub error: Option<String>,
}

#[derive(Serialize)]
pub struct SelectReport {
    pub chosen_p: usize,
    pub pre_sample_len: usize,
    pub rows: Vec<SelectRow>,
}

impl From<&BicTable> for SelectReport {
    fn from(t: &BicTable) -> Self {
        let rows = t
            .rows
            .iter()
            .map(|r| SelectRow {
                p: r.p,
                bic: r.bic,
                neg2_loglik: r.neg2_loglik,
                n1: r.n1,
                n2: r.n2,
                r_lower: r.fit.as_ref().map(|f| f.params.r_lower),
                r_upper: r.fit.as_ref().map(|f| f.params.r_upper),
                d: r.fit.as_ref().map(|f| f.params.d),
                error: r.error.clone(),
            })
            .collect();
        Self {
            chosen_p: t.chosen_p,
            pre_sample_len: t.pre_sample_len,
            rows,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

pub fn print_stationarity(r: &StationarityReport) {
    let yes = |b: bool| if b { "holds" } else { "fails" };
    eprintln!(
        "(i)   {:>10.4}  {}  (r = {})",
        r.condition_i.value,
        yes(r.condition_i.holds),
        r.condition_i.r_used
    );
    eprintln!(
        "(ii)  {:>10.4}  {}  (r = {}{})",
        r.condition_ii.value,
        yes(r.condition_ii.holds),
        r.condition_ii.r_used,
        if r.condition_ii.requires_symmetric_density && !r.condition_ii.density_symmetric {
            ", needs a symmetric density"
        } else {
            ""
        }
    );
    eprintln!("(iii) {:>10.4}  {}", r.condition_iii.value, yes(r.condition_iii.holds));
    eprintln!(
        "{}",
        if r.any_holds {
            "a sufficient condition holds"
        } else {
            "no sufficient condition holds"
        }
    );
}

pub fn print_fit(r: &FitReport) {
    let p = &r.params;
    eprintln!(
        "p = {}  d = {}  r_lower = {:.4}  r_upper = {:.4}  n = {} ({} lower, {} upper)",
        p.p, p.d, p.r_lower, p.r_upper, r.n, r.n1, r.n2
    );
    eprintln!("{:<10} {:>12} {:>12}", "coef", "estimate", "std.err");
    for c in &r.coefficients {
        eprintln!("{:<10} {:>12.4} {:>12.4}", c.name, c.estimate, c.std_error);
    }
    eprintln!(
        "-2 log-lik {:.3}  kappa3 {:.3}  kappa4 {:.3}{}",
        r.neg2_loglik,
        r.kappa3,
        r.kappa4,
        if r.converged { "" } else { "  (not converged)" }
    );
}

pub fn print_select(r: &SelectReport) {
    eprintln!("{:>3} {:>12} {:>12} {:>6} {:>6}", "p", "BIC", "-2loglik", "n1", "n2");
    for row in &r.rows {
        let mark = if row.p == r.chosen_p { " *" } else { "" };
        match &row.error {
            Some(e) => eprintln!("{:>3} failed: {e}", row.p),
            None => eprintln!(
                "{:>3} {:>12} {:>12} {:>6} {:>6}{mark}",
                row.p,
                opt(row.bic),
                opt(row.neg2_loglik),
                row.n1.unwrap_or(0),
                row.n2.unwrap_or(0)
            ),
        }
    }
}

pub fn print_diagnostics(r: &DiagnosticsReport) {
    eprintln!("{:<12} {:>4} {:>10} {:>8}", "test", "m", "Q", "p-value");
    for t in r.ljung_box.iter().chain(&r.mcleod_li) {
        eprintln!("{:<12} {:>4} {:>10.3} {:>8.4}", format!("{:?}", t.kind), t.m, t.statistic, t.p_value);
    }
    eprintln!("df rule: {}", r.df_rule);
}

pub fn write_acf_csv(r: &DiagnosticsReport, path: &Path) -> bdar::Result<()> {
    let io = |e: csv::Error| bdar::BdarError::Io(e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["lag", "acf_residuals", "acf_squared", "band"]).map_err(io)?;
    for (k, (a, b)) in r.acf_residuals.values.iter().zip(&r.acf_squared.values).enumerate() {
        w.write_record([
            (k + 1).to_string(),
            a.to_string(),
            b.to_string(),
            r.acf_residuals.band.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn print_mc(r: &McReport) {
    for s in &r.sizes {
        eprintln!("n = {}  replications = {}  failures = {}", s.n, s.replications, s.failures);
        if let Some(rate) = s.selection_rate {
            eprintln!("  correct order chosen: {:.3}", rate);
            continue;
        }
        eprintln!("  {:<10} {:>8} {:>8} {:>8} {:>8}", "coef", "truth", "bias", "ESD", "ASD");
        for c in s.coefficients.iter().chain(&s.thresholds) {
            eprintln!(
                "  {:<10} {:>8.4} {:>8.4} {:>8.4} {:>8}",
                c.name,
                c.truth,
                c.bias,
                c.esd,
                c.asd_mean.map_or("-".into(), |a| format!("{a:.4}"))
            );
        }
        if let Some(h) = s.d_hit_rate {
            eprintln!("  delay identified: {:.3}", h);
        }
    }
}
