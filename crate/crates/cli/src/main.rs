//! `bdar` command-line tool.
//!
//! JSON goes to stdout (or `--out`), human-readable tables to stderr.
//! Exit codes: 0 ok, 2 usage, 3 data error, 4 numerical failure.
//! `BDAR_THREADS` sets the worker-thread count.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bdar::data::{ingest, write_series_csv, DataFormat, DatasetSpec, Transform};
use bdar::diagnostics::diagnose;
use bdar::harness::{run_study, write_report, McDesign};
use bdar::inference::asymptotic_se;
use bdar::model::{simulate_path, SimulationOptions, DEFAULT_BURN_IN};
use bdar::selection::select_order;
use bdar::stationarity::stationarity_report;
use bdar::{fit, BdarError, BdarParams, ErrorCategory, InnovationSpec, SearchConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::{FitReport, SelectReport, SimulateReport};

#[derive(Parser)]
#[command(name = "bdar", version, about = "Buffered double autoregressive models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a parameter file.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: usize,
        /// Leading values that only supply lags [default: max(p, d, 6)].
        #[arg(long)]
        pre_sample: Option<usize>,
        /// `normal` or `t:<nu>`.
        #[arg(long, default_value = "normal", value_parser = parse_innovations)]
        innovations: InnovationSpec,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Evaluate the sufficient stationarity conditions.
    CheckStationarity {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "normal", value_parser = parse_innovations)]
        innovations: InnovationSpec,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model of order p with standard errors.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        p: usize,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Choose the order by BIC.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        p_max: usize,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Portmanteau tests and ACFs of a fit's standardized residuals.
    Diagnose {
        /// JSON written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "6,12")]
        m: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        acf_lags: usize,
        /// CSV of lag, residual ACF, squared-residual ACF and band.
        #[arg(long)]
        acf_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo study from a design file.
    Mc {
        #[arg(long)]
        design: PathBuf,
        /// Directory for report.json and threshold-deviation CSVs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Returns)]
    format: FormatArg,
    #[arg(long, value_enum, default_value_t = TransformArg::None)]
    transform: TransformArg,
    /// Leading values that only supply lags [default: max(p, d_max)].
    #[arg(long)]
    pre_sample: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Returns,
    Prices,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    None,
    LogReturnPct,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 6)]
    d_max: usize,
    #[arg(long, default_value_t = 10.0)]
    pct_lo: f64,
    #[arg(long, default_value_t = 90.0)]
    pct_hi: f64,
    /// Coarse-grid stride over the threshold candidates (1 = full grid).
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    min_regime_frac: f64,
    /// Coarse-to-fine search sized to the sample (overridden by --thin).
    #[arg(long)]
    fast: bool,
    /// Search only r_lower = r_upper.
    #[arg(long)]
    no_buffer: bool,
}

impl SearchArgs {
    fn config(&self, n: usize) -> SearchConfig {
        let mut cfg = if self.fast { SearchConfig::fast(n) } else { SearchConfig::default() };
        if let Some(t) = self.thin {
            cfg.grid_thinning = t;
        }
        cfg.d_max = self.d_max;
        cfg.percentile_lo = self.pct_lo;
        cfg.percentile_hi = self.pct_hi;
        cfg.min_regime_frac = self.min_regime_frac;
        cfg.equal_thresholds = self.no_buffer;
        cfg
    }
}

fn parse_innovations(s: &str) -> Result<InnovationSpec, String> {
    match s {
        "normal" | "gaussian" => Ok(InnovationSpec::StandardNormal),
        _ => match s.strip_prefix("t:").map(str::parse::<f64>) {
            Some(Ok(nu)) if nu > 2.0 => Ok(InnovationSpec::StandardizedStudentT { nu }),
            _ => Err(format!("expected `normal` or `t:<nu>` with nu > 2, got {s:?}")),
        },
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> bdar::Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> bdar::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_series(d: &DataArgs, pre_sample: usize) -> bdar::Result<bdar::TimeSeries> {
    let spec = DatasetSpec {
        path: d.data.clone(),
        format: match d.format {
            FormatArg::Returns => DataFormat::ReturnsCsv,
            FormatArg::Prices => DataFormat::PricesCsv,
        },
        transform: match d.transform {
            TransformArg::None => Transform::None,
            TransformArg::LogReturnPct => Transform::LogReturnPct,
        },
    };
    ingest(&spec, d.pre_sample.unwrap_or(pre_sample))
}

fn run(cli: Cli) -> bdar::Result<()> {
    match cli.command {
        Command::Simulate {
            params,
            n,
            seed,
            out,
            burn_in,
            pre_sample,
            innovations,
            json_out,
        } => {
            let params: BdarParams = read_json(&params)?;
            let pre = pre_sample.unwrap_or(params.p.max(params.d).max(6));
            let opts = SimulationOptions {
                burn_in,
                pre_sample_len: Some(pre),
            };
            let path = simulate_path(&params, n, &innovations, &opts, seed)?;
            write_series_csv(path.series.values(), &out)?;
            let rep = SimulateReport::new(&path, seed, &out);
            eprintln!(
                "simulated {} values ({} pre-sample) to {}",
                path.series.len(),
                pre,
                out.display()
            );
            emit(&rep, json_out.as_deref())
        }
        Command::CheckStationarity {
            params,
            innovations,
            out,
        } => {
            let params: BdarParams = read_json(&params)?;
            params.validate()?;
            let rep = stationarity_report(&params, &innovations)?;
            report::print_stationarity(&rep);
            emit(&rep, out.as_deref())
        }
        Command::Fit { data, p, search, out } => {
            let y = load_series(&data, p.max(search.d_max))?;
            let cfg = search.config(y.n_effective());
            let f = fit(&y, p, &cfg)?;
            let inf = asymptotic_se(&f, &y)?;
            let rep = FitReport::new(f, inf);
            report::print_fit(&rep);
            emit(&rep, out.as_deref())
        }
        Command::Select {
            data,
            p_max,
            search,
            out,
        } => {
            let y = load_series(&data, p_max.max(search.d_max))?;
            let cfg = search.config(y.n_effective());
            let table = select_order(&y, p_max, &cfg)?;
            let rep = SelectReport::from(&table);
            report::print_select(&rep);
            emit(&rep, out.as_deref())
        }
        Command::Diagnose {
            fit,
            m,
            acf_lags,
            acf_out,
            out,
        } => {
            let f: FitReport = read_json(&fit)?;
            let rep = diagnose(&f.as_fit_result(), &m, acf_lags)?;
            report::print_diagnostics(&rep);
            if let Some(path) = acf_out {
                report::write_acf_csv(&rep, &path)?;
            }
            emit(&rep, out.as_deref())
        }
        Command::Mc { design, out_dir } => {
            let design: McDesign = read_json(&design)?;
            let rep = run_study(&design)?;
            report::print_mc(&rep);
            eprintln!("wall time {:.1}s", rep.wall_time);
            match out_dir {
                Some(dir) => {
                    for p in write_report(&rep, &dir)? {
                        eprintln!("wrote {}", p.display());
                    }
                    Ok(())
                }
                None => emit(&rep, None),
            }
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("BDAR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| format!("BDAR_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error[usage]: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.tag(), one_line(&e));
            ExitCode::from(match e.category() {
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
            })
        }
    }
}

fn one_line(e: &BdarError) -> String {
    e.to_string().replace('\n', " ")
}
