//! CSV ingestion of price or return series and a lossless writer.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BdarError, Result};
use crate::model::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// `date,price` rows; the price is the last column.
    PricesCsv,
    /// One numeric column (extra leading columns are ignored).
    ReturnsCsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    /// `y_t = 100 (ln P_t - ln P_{t-1})`.
    LogReturnPct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: DataFormat,
    pub transform: Transform,
}

/// Reads the last column of every row. A first row whose value does not
/// parse as a number is taken as a header.
pub fn read_column<R: std::io::Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| BdarError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(i + 1),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = rec.get(rec.len() - 1).unwrap_or("");
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(v) => {
                return Err(BdarError::Parse {
                    line,
                    message: format!("non-finite value {v}"),
                })
            }
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(BdarError::Parse {
                    line,
                    message: format!("cannot parse {field:?} as a number"),
                })
            }
        }
    }
    Ok(out)
}

/// `100 (ln P_t - ln P_{t-1})` for consecutive prices.
pub fn log_returns_pct(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(BdarError::InsufficientData(format!(
            "need at least 2 prices for returns, got {}",
            prices.len()
        )));
    }
    if let Some(i) = prices.iter().position(|&p| !(p > 0.0)) {
        return Err(BdarError::Domain(format!(
            "log returns need positive prices, got {} at row {}",
            prices[i],
            i + 1
        )));
    }
    Ok(prices.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect())
}

pub fn ingest(spec: &DatasetSpec, pre_sample_len: usize) -> Result<TimeSeries> {
    let file = std::fs::File::open(&spec.path)?;
    let raw = read_column(file)?;
    let values = match spec.transform {
        Transform::None => raw,
        Transform::LogReturnPct => log_returns_pct(&raw)?,
    };
    TimeSeries::new(values, pre_sample_len)
}

/// Writes one value per row under the header `y`, with 17 significant
/// digits so that reading the file back is bit-exact.
pub fn write_series_csv(values: &[f64], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_series(values, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_series<W: Write>(values: &[f64], out: &mut W) -> Result<()> {
    writeln!(out, "y")?;
    for v in values {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}
