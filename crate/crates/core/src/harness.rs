//! Monte Carlo studies: bias / ESD / ASD tables, delay hit rates,
//! threshold-deviation samples and BIC selection rates.
//!
//! Each replication draws from its own ChaCha stream seeded by a SplitMix
//! hash of `(seed, n, replication)`, and aggregates are summed in replication
//! order, so reports do not depend on the number of worker threads.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BdarError, Result};
use crate::estimator::{fit, SearchConfig};
use crate::inference::asymptotic_se;
use crate::model::{simulate_path, BdarParams, InnovationSpec, SimulationOptions, TimeSeries, DEFAULT_BURN_IN};
use crate::selection::select_order;
use crate::stationarity::stationarity_report;

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    EstimationStudy,
    SelectionStudy,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_p_max() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McDesign {
    pub dgp: BdarParams,
    pub innovations: InnovationSpec,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    /// `None` picks [`SearchConfig::fast`] for each sample size.
    #[serde(default)]
    pub fit_config: Option<SearchConfig>,
    pub seed: u64,
    pub mode: StudyMode,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Largest order tried in a selection study.
    #[serde(default = "default_p_max")]
    pub p_max: usize,
    /// Run even when no sufficient stationarity condition holds.
    #[serde(default)]
    pub allow_uncertified: bool,
}

impl McDesign {
    /// The simulation design with Gaussian innovations.
    pub fn reference(sample_sizes: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            dgp: BdarParams::reference_design(),
            innovations: InnovationSpec::StandardNormal,
            sample_sizes,
            replications,
            fit_config: None,
            seed,
            mode: StudyMode::EstimationStudy,
            burn_in: DEFAULT_BURN_IN,
            p_max: default_p_max(),
            allow_uncertified: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.innovations.validate()?;
        if self.replications == 0 {
            return Err(BdarError::Domain("replications must be >= 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 50) {
            return Err(BdarError::Domain("sample sizes must be non-empty and each >= 50".into()));
        }
        if let Some(cfg) = &self.fit_config {
            cfg.validate()?;
        }
        if self.mode == StudyMode::SelectionStudy && self.p_max == 0 {
            return Err(BdarError::Domain("p_max must be >= 1".into()));
        }
        if !self.allow_uncertified && !stationarity_report(&self.dgp, &self.innovations)?.any_holds {
            return Err(BdarError::InvalidParams(
                "no sufficient stationarity condition holds for the design; set allow_uncertified to run anyway"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn config_for(&self, n: usize) -> SearchConfig {
        self.fit_config.clone().unwrap_or_else(|| SearchConfig::fast(n))
    }
}

/// Seed of one replication's random stream.
pub fn replication_seed(seed: u64, n: usize, rep: usize) -> u64 {
    let mut z = splitmix(seed);
    z = splitmix(z ^ n as u64);
    splitmix(z ^ rep as u64)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub seed: u64,
    pub lambda: Option<Vec<f64>>,
    pub std_errors: Option<Vec<f64>>,
    pub r_lower: Option<f64>,
    pub r_upper: Option<f64>,
    pub d: Option<usize>,
    pub chosen_p: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub bias: f64,
    pub esd: f64,
    pub asd_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDevs {
    /// `n (r_lower_hat - r_lower)` per successful replication.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub coefficients: Vec<ParameterSummary>,
    pub thresholds: Vec<ParameterSummary>,
    pub d_hit_rate: Option<f64>,
    pub threshold_devs: ThresholdDevs,
    pub selection_rate: Option<f64>,
    pub outcomes: Vec<ReplicationOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub mode: StudyMode,
    pub seed: u64,
    pub sizes: Vec<SizeReport>,
    /// Elapsed seconds; kept out of the JSON so reports are reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl McReport {
    pub fn size(&self, n: usize) -> Option<&SizeReport> {
        self.sizes.iter().find(|s| s.n == n)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn simulate_for_study(design: &McDesign, n: usize, cfg: &SearchConfig, seed: u64) -> Result<TimeSeries> {
    let pre = design.dgp.p.max(cfg.d_max).max(if design.mode == StudyMode::SelectionStudy {
        design.p_max
    } else {
        0
    });
    let opts = SimulationOptions {
        burn_in: design.burn_in,
        pre_sample_len: Some(pre),
    };
    Ok(simulate_path(&design.dgp, n, &design.innovations, &opts, seed)?.series)
}

fn failed(rep: usize, seed: u64, e: BdarError) -> ReplicationOutcome {
    ReplicationOutcome {
        rep,
        seed,
        lambda: None,
        std_errors: None,
        r_lower: None,
        r_upper: None,
        d: None,
        chosen_p: None,
        error: Some(e.to_string()),
    }
}

fn estimation_replication(design: &McDesign, n: usize, cfg: &SearchConfig, rep: usize) -> ReplicationOutcome {
    let seed = replication_seed(design.seed, n, rep);
    let run = || -> Result<ReplicationOutcome> {
        let y = simulate_for_study(design, n, cfg, seed)?;
        let f = fit(&y, design.dgp.p, cfg)?;
        let inf = asymptotic_se(&f, &y)?;
        Ok(ReplicationOutcome {
            rep,
            seed,
            lambda: Some(f.params.lambda()),
            std_errors: Some(inf.std_errors),
            r_lower: Some(f.params.r_lower),
            r_upper: Some(f.params.r_upper),
            d: Some(f.params.d),
            chosen_p: None,
            error: None,
        })
    };
    run().unwrap_or_else(|e| failed(rep, seed, e))
}

fn selection_replication(design: &McDesign, n: usize, cfg: &SearchConfig, rep: usize) -> ReplicationOutcome {
    let seed = replication_seed(design.seed, n, rep);
    let run = || -> Result<ReplicationOutcome> {
        let y = simulate_for_study(design, n, cfg, seed)?;
        let table = select_order(&y, design.p_max, cfg)?;
        let chosen = table.chosen();
        let params = chosen.and_then(|r| r.fit.as_ref()).map(|f| &f.params);
        Ok(ReplicationOutcome {
            rep,
            seed,
            lambda: None,
            std_errors: None,
            r_lower: params.map(|p| p.r_lower),
            r_upper: params.map(|p| p.r_upper),
            d: params.map(|p| p.d),
            chosen_p: Some(table.chosen_p),
            error: None,
        })
    };
    run().unwrap_or_else(|e| failed(rep, seed, e))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with an `R - 1` denominator; zero when `R = 1`.
fn esd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn summarise(name: &str, truth: f64, est: &[f64], asd: Option<&[f64]>) -> ParameterSummary {
    ParameterSummary {
        name: name.to_string(),
        truth,
        bias: mean(est) - truth,
        esd: esd(est),
        asd_mean: asd.map(mean),
    }
}

fn aggregate(design: &McDesign, n: usize, outcomes: Vec<ReplicationOutcome>) -> Result<SizeReport> {
    let r = outcomes.len();
    let ok: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let failures = r - ok.len();
    if failures as f64 > MAX_FAILURE_RATE * r as f64 || ok.is_empty() {
        return Err(BdarError::StudyFailed {
            n,
            failures,
            replications: r,
        });
    }
    let dgp = &design.dgp;
    let mut coefficients = Vec::new();
    let mut thresholds = Vec::new();
    let mut d_hit_rate = None;
    let mut selection_rate = None;
    let mut devs = ThresholdDevs {
        lower: Vec::new(),
        upper: Vec::new(),
    };
    let rls: Vec<f64> = ok.iter().filter_map(|o| o.r_lower).collect();
    let rus: Vec<f64> = ok.iter().filter_map(|o| o.r_upper).collect();
    match design.mode {
        StudyMode::EstimationStudy => {
            let truth = dgp.lambda();
            let names = BdarParams::coefficient_names(dgp.p);
            for (k, name) in names.iter().enumerate() {
                let est: Vec<f64> = ok.iter().map(|o| o.lambda.as_ref().unwrap()[k]).collect();
                let se: Vec<f64> = ok.iter().map(|o| o.std_errors.as_ref().unwrap()[k]).collect();
                coefficients.push(summarise(name, truth[k], &est, Some(&se)));
            }
            thresholds.push(summarise("r_lower", dgp.r_lower, &rls, None));
            thresholds.push(summarise("r_upper", dgp.r_upper, &rus, None));
            let hits = ok.iter().filter(|o| o.d == Some(dgp.d)).count();
            d_hit_rate = Some(hits as f64 / ok.len() as f64);
            devs.lower = rls.iter().map(|r| n as f64 * (r - dgp.r_lower)).collect();
            devs.upper = rus.iter().map(|r| n as f64 * (r - dgp.r_upper)).collect();
        }
        StudyMode::SelectionStudy => {
            let hits = ok.iter().filter(|o| o.chosen_p == Some(dgp.p)).count();
            selection_rate = Some(hits as f64 / ok.len() as f64);
        }
    }
    Ok(SizeReport {
        n,
        replications: r,
        failures,
        coefficients,
        thresholds,
        d_hit_rate,
        threshold_devs: devs,
        selection_rate,
        outcomes,
    })
}

pub fn run_study(design: &McDesign) -> Result<McReport> {
    design.validate()?;
    let started = Instant::now();
    let mut sizes = Vec::with_capacity(design.sample_sizes.len());
    for &n in &design.sample_sizes {
        let cfg = design.config_for(n);
        let outcomes: Vec<ReplicationOutcome> = (0..design.replications)
            .into_par_iter()
            .map(|rep| match design.mode {
                StudyMode::EstimationStudy => estimation_replication(design, n, &cfg, rep),
                StudyMode::SelectionStudy => selection_replication(design, n, &cfg, rep),
            })
            .collect();
        sizes.push(aggregate(design, n, outcomes)?);
    }
    Ok(McReport {
        mode: design.mode,
        seed: design.seed,
        sizes,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

pub fn run_estimation_study(design: &McDesign) -> Result<McReport> {
    if design.mode != StudyMode::EstimationStudy {
        return Err(BdarError::Domain("design mode is not estimation_study".into()));
    }
    run_study(design)
}

pub fn run_selection_study(design: &McDesign) -> Result<McReport> {
    if design.mode != StudyMode::SelectionStudy {
        return Err(BdarError::Domain("design mode is not selection_study".into()));
    }
    run_study(design)
}


/// Runs the study on a dedicated pool of `threads` workers.
pub fn run_with_threads(design: &McDesign, threads: usize) -> Result<McReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| BdarError::Domain(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_study(design))
}

/// Writes `report.json` and one threshold-deviation CSV per sample size into
/// `dir`; returns the paths written.
pub fn write_report(report: &McReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json = dir.join("report.json");
    std::fs::write(&json, report.to_json()?)?;
    written.push(json);
    if report.mode == StudyMode::EstimationStudy {
        for s in &report.sizes {
            let path = dir.join(format!("threshold_devs_n{}.csv", s.n));
            write_threshold_devs(s, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Raw `n (r_hat - r)` samples, one row per successful replication.
pub fn write_threshold_devs(size: &SizeReport, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "rep,n_dev_lower,n_dev_upper")?;
    let ok = size.outcomes.iter().filter(|o| o.error.is_none());
    for (o, (l, u)) in ok.zip(size.threshold_devs.lower.iter().zip(&size.threshold_devs.upper)) {
        writeln!(out, "{},{:.16e},{:.16e}", o.rep, l, u)?;
    }
    out.flush()?;
    Ok(())
}
