//! Buffered double autoregressive (BDAR) models: simulation, stationarity
//! checks, quasi-maximum-likelihood estimation with a profile search over
//! the buffer zone, asymptotic inference, order selection, residual
//! diagnostics and Monte Carlo studies.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod inference;
pub mod likelihood;
mod linalg;
pub mod model;
pub mod selection;
pub mod stationarity;

pub use error::{BdarError, ErrorCategory, Result};
pub use estimator::{fit, FitResult, SearchConfig};
pub use model::{simulate, BdarParams, InnovationSpec, TimeSeries};
