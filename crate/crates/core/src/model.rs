//! Domain types, the buffered regime recursion and sample-path simulation.
//!
//! The model has two regimes. In regime `k` the observation is
//!
//! ```text
//! y_t = phi_k0 + sum_j phi_kj y_{t-j} + eps_t * sqrt(alpha_k0 + sum_j alpha_kj y_{t-j}^2)
//! ```
//!
//! and the regime label follows a hysteresis rule on the threshold variable
//! `y_{t-d}`: label 1 (lower) when `y_{t-d} <= r_lower`, label 0 (upper) when
//! `y_{t-d} > r_upper`, and otherwise the previous label is kept.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{BdarError, Result};

/// Default number of discarded start-up draws in [`simulate`].
pub const DEFAULT_BURN_IN: usize = 500;

/// Observed series. The first `pre_sample_len` values only supply lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    pre_sample_len: usize,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, pre_sample_len: usize) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(BdarError::InvalidData(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        if pre_sample_len > values.len() {
            return Err(BdarError::InsufficientData(format!(
                "pre-sample length {pre_sample_len} exceeds series length {}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            pre_sample_len,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pre_sample_len(&self) -> usize {
        self.pre_sample_len
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of observations entering the likelihood (`n`).
    pub fn n_effective(&self) -> usize {
        self.values.len() - self.pre_sample_len
    }

    /// The observations after the pre-sample.
    pub fn effective(&self) -> &[f64] {
        &self.values[self.pre_sample_len..]
    }

    /// Same values, different split between pre-sample and sample.
    pub fn with_pre_sample(&self, pre_sample_len: usize) -> Result<Self> {
        Self::new(self.values.clone(), pre_sample_len)
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            pre_sample_len: self.pre_sample_len,
        }
    }
}

/// Full parameter vector of a BDAR(p) model.
///
/// `phi*` and `alpha*` hold the intercept first followed by the `p` lag
/// coefficients. Regime 1 is the lower regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdarParams {
    pub p: usize,
    pub d: usize,
    pub phi1: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub r_lower: f64,
    pub r_upper: f64,
}

impl BdarParams {
    /// Checks lengths, finiteness, variance positivity and threshold order.
    ///
    /// `p = 0` (intercept-only regimes) is accepted for order-selection use.
    pub fn validate(&self) -> Result<()> {
        let k = self.p + 1;
        if self.d == 0 {
            return Err(BdarError::InvalidParams("delay d must be >= 1".into()));
        }
        for (name, v) in [
            ("phi1", &self.phi1),
            ("alpha1", &self.alpha1),
            ("phi2", &self.phi2),
            ("alpha2", &self.alpha2),
        ] {
            if v.len() != k {
                return Err(BdarError::InvalidParams(format!(
                    "{name} has length {}, expected p + 1 = {k}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(BdarError::InvalidParams(format!("{name} is not finite")));
            }
        }
        for (name, a) in [("alpha1", &self.alpha1), ("alpha2", &self.alpha2)] {
            if a[0] <= 0.0 {
                return Err(BdarError::InvalidParams(format!(
                    "{name}[0] = {} must be positive",
                    a[0]
                )));
            }
            if let Some(j) = a[1..].iter().position(|&x| x < 0.0) {
                return Err(BdarError::InvalidParams(format!(
                    "{name}[{}] = {} must be nonnegative",
                    j + 1,
                    a[j + 1]
                )));
            }
        }
        if !(self.r_lower.is_finite() && self.r_upper.is_finite()) {
            return Err(BdarError::InvalidParams("thresholds must be finite".into()));
        }
        if self.r_lower > self.r_upper {
            return Err(BdarError::InvalidParams(format!(
                "r_lower = {} exceeds r_upper = {}",
                self.r_lower, self.r_upper
            )));
        }
        Ok(())
    }

    /// Both the mean and the variance coefficients differ across regimes.
    pub fn is_identifiable(&self) -> bool {
        self.phi1 != self.phi2 && self.alpha1 != self.alpha2
    }

    /// `(phi1, alpha1, phi2, alpha2)` flattened.
    pub fn lambda(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * (self.p + 1));
        out.extend_from_slice(&self.phi1);
        out.extend_from_slice(&self.alpha1);
        out.extend_from_slice(&self.phi2);
        out.extend_from_slice(&self.alpha2);
        out
    }

    pub fn from_lambda(p: usize, d: usize, lambda: &[f64], r_lower: f64, r_upper: f64) -> Self {
        let k = p + 1;
        assert_eq!(lambda.len(), 4 * k, "lambda must have length 4(p + 1)");
        Self {
            p,
            d,
            phi1: lambda[..k].to_vec(),
            alpha1: lambda[k..2 * k].to_vec(),
            phi2: lambda[2 * k..3 * k].to_vec(),
            alpha2: lambda[3 * k..].to_vec(),
            r_lower,
            r_upper,
        }
    }

    /// Names of the entries of [`BdarParams::lambda`], e.g. `phi10`, `alpha12`.
    pub fn coefficient_names(p: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(4 * (p + 1));
        for regime in 1..=2 {
            for prefix in ["phi", "alpha"] {
                for j in 0..=p {
                    names.push(format!("{prefix}{regime}{j}"));
                }
            }
        }
        names
    }

    /// Parameters of the negated series: regimes swap, thresholds reflect
    /// and the mean intercepts change sign.
    pub fn mirrored(&self) -> Self {
        let flip = |phi: &[f64]| -> Vec<f64> {
            let mut v = phi.to_vec();
            v[0] = -v[0];
            v
        };
        Self {
            p: self.p,
            d: self.d,
            phi1: flip(&self.phi2),
            alpha1: self.alpha2.clone(),
            phi2: flip(&self.phi1),
            alpha2: self.alpha1.clone(),
            r_lower: -self.r_upper,
            r_upper: -self.r_lower,
        }
    }

    /// The simulation design used for the finite-sample study: p = 2, d = 4.
    pub fn reference_design() -> Self {
        Self {
            p: 2,
            d: 4,
            phi1: vec![-0.1, 0.2, 0.1],
            alpha1: vec![0.1, 0.3, 0.05],
            phi2: vec![0.1, -0.2, 0.3],
            alpha2: vec![0.05, 0.2, 0.1],
            r_lower: -0.1,
            r_upper: 0.15,
        }
    }

    /// The model fitted to weekly index returns, padded to a common p = 3.
    pub fn weekly_returns_fit() -> Self {
        Self {
            p: 3,
            d: 1,
            phi1: vec![0.3937, 0.0385, 0.2093, 0.0],
            alpha1: vec![5.3991, 0.5432, 0.1787, 0.0],
            phi2: vec![-0.5992, 0.2354, 0.0, 0.0],
            alpha2: vec![3.4473, 0.0263, 0.0678, 0.1416],
            r_lower: -0.2048,
            r_upper: 0.8770,
        }
    }

    pub(crate) fn regime(&self, label: u8) -> (&[f64], &[f64]) {
        if label == 1 {
            (&self.phi1, &self.alpha1)
        } else {
            (&self.phi2, &self.alpha2)
        }
    }
}

/// Regime labels over the estimable range of a series.
///
/// `labels[k]` belongs to series index `start + k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimePath {
    pub start: usize,
    pub labels: Vec<u8>,
    /// Position (into `labels`) of the first label fixed by the data, `None`
    /// when every threshold value stayed inside the buffer zone.
    pub first_identified_index: Option<usize>,
    /// The leading labels were assigned to the lower regime by convention.
    pub initial_assumed: bool,
}

impl RegimePath {
    pub fn n_lower(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn n_upper(&self) -> usize {
        self.labels.len() - self.n_lower()
    }

    /// Label at series index `t`.
    pub fn label_at(&self, t: usize) -> Option<u8> {
        t.checked_sub(self.start)
            .and_then(|k| self.labels.get(k).copied())
    }
}

/// Writes the buffered labels for series indices `start..start + out.len()`
/// into `out` and returns the position of the first identified label.
///
/// Callers guarantee `start >= d` and `start + out.len() <= values.len()`.
#[inline]
pub(crate) fn fill_regime_labels(
    values: &[f64],
    start: usize,
    d: usize,
    r_lower: f64,
    r_upper: f64,
    out: &mut [u8],
) -> Option<usize> {
    let mut prev = 1u8;
    let mut first = None;
    for (k, slot) in out.iter_mut().enumerate() {
        let z = values[start + k - d];
        let label = if z <= r_lower {
            1
        } else if z > r_upper {
            0
        } else {
            prev
        };
        if first.is_none() && (z <= r_lower || z > r_upper) {
            first = Some(k);
        }
        *slot = label;
        prev = label;
    }
    first
}

/// Regime path over indices `max(d, pre_sample_len)..len`, with the leading
/// buffer-stuck indices assigned to the lower regime.
pub fn compute_regime_path(
    y: &TimeSeries,
    r_lower: f64,
    r_upper: f64,
    d: usize,
) -> Result<RegimePath> {
    if d == 0 {
        return Err(BdarError::Domain("delay d must be >= 1".into()));
    }
    if r_lower.is_nan() || r_upper.is_nan() {
        return Err(BdarError::InvalidData("threshold is NaN".into()));
    }
    if r_lower > r_upper {
        return Err(BdarError::Domain(format!(
            "r_lower = {r_lower} exceeds r_upper = {r_upper}"
        )));
    }
    if y.len() < d + 1 {
        return Err(BdarError::InsufficientData(format!(
            "series of length {} is shorter than d + 1 = {}",
            y.len(),
            d + 1
        )));
    }
    let start = d.max(y.pre_sample_len());
    let mut labels = vec![0u8; y.len().saturating_sub(start)];
    let first = fill_regime_labels(y.values(), start, d, r_lower, r_upper, &mut labels);
    Ok(RegimePath {
        start,
        initial_assumed: first != Some(0) && !labels.is_empty(),
        first_identified_index: first,
        labels,
    })
}

/// Draws from a user-supplied unit-variance law.
#[derive(Clone)]
pub struct CustomSampler(pub Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>);

impl fmt::Debug for CustomSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomSampler(..)")
    }
}

/// Innovation law. Every variant has mean zero and unit variance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationSpec {
    StandardNormal,
    /// Student t with `nu > 2` degrees of freedom scaled to unit variance.
    StandardizedStudentT { nu: f64 },
    #[serde(skip)]
    CustomIid(CustomSampler),
}

/// A moment value with its Monte Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl MomentEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
        }
    }
}

const CUSTOM_MOMENT_DRAWS: usize = 1_000_000;
const CUSTOM_MOMENT_SEED: u64 = 0x5eed_0f_be11;

impl InnovationSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            InnovationSpec::StandardizedStudentT { nu } if !(*nu > 2.0 && nu.is_finite()) => Err(
                BdarError::InvalidParams(format!("Student t needs nu > 2 for unit variance, got {nu}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InnovationSpec::StandardNormal => StandardNormal.sample(rng),
            InnovationSpec::StandardizedStudentT { nu } => {
                let t: f64 = StudentT::new(*nu)
                    .expect("nu validated before sampling")
                    .sample(rng);
                t * ((nu - 2.0) / nu).sqrt()
            }
            InnovationSpec::CustomIid(CustomSampler(f)) => {
                f(&mut RngAdapter(rng))
            }
        }
    }

    /// Whether the density is known to be symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, InnovationSpec::CustomIid(_))
    }

    /// `E|eps|^r` for each requested `r`.
    pub fn abs_moments(&self, rs: &[f64]) -> Vec<MomentEstimate> {
        match self {
            InnovationSpec::StandardNormal => rs
                .iter()
                .map(|&r| {
                    // 2^{r/2} Gamma((r+1)/2) / sqrt(pi)
                    let ln = 0.5 * r * std::f64::consts::LN_2 + ln_gamma(0.5 * (r + 1.0))
                        - 0.5 * std::f64::consts::PI.ln();
                    MomentEstimate::exact(ln.exp())
                })
                .collect(),
            InnovationSpec::StandardizedStudentT { nu } => rs
                .iter()
                .map(|&r| {
                    if r >= *nu {
                        return MomentEstimate::exact(f64::INFINITY);
                    }
                    let scale = ((nu - 2.0) / nu).sqrt();
                    let ln = 0.5 * r * nu.ln() + ln_gamma(0.5 * (r + 1.0))
                        + ln_gamma(0.5 * (nu - r))
                        - 0.5 * std::f64::consts::PI.ln()
                        - ln_gamma(0.5 * nu);
                    MomentEstimate::exact(ln.exp() * scale.powf(r))
                })
                .collect(),
            InnovationSpec::CustomIid(_) => self.monte_carlo_moments(rs, |e, r| e.abs().powf(r)),
        }
    }

    /// `E eps^4`.
    pub fn fourth_moment(&self) -> MomentEstimate {
        match self {
            InnovationSpec::StandardNormal => MomentEstimate::exact(3.0),
            InnovationSpec::StandardizedStudentT { nu } => {
                if *nu > 4.0 {
                    MomentEstimate::exact(3.0 + 6.0 / (nu - 4.0))
                } else {
                    MomentEstimate::exact(f64::INFINITY)
                }
            }
            InnovationSpec::CustomIid(_) => self.monte_carlo_moments(&[4.0], |e, r| e.powf(r))[0],
        }
    }

    fn monte_carlo_moments(&self, rs: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<MomentEstimate> {
        let mut rng = ChaCha8Rng::seed_from_u64(CUSTOM_MOMENT_SEED);
        let mut sums = vec![0.0; rs.len()];
        let mut sq = vec![0.0; rs.len()];
        for _ in 0..CUSTOM_MOMENT_DRAWS {
            let e = self.sample(&mut rng);
            for (i, &r) in rs.iter().enumerate() {
                let v = f(e, r);
                sums[i] += v;
                sq[i] += v * v;
            }
        }
        let n = CUSTOM_MOMENT_DRAWS as f64;
        sums.iter()
            .zip(&sq)
            .map(|(&s, &q)| {
                let mean = s / n;
                let var = (q / n - mean * mean).max(0.0);
                MomentEstimate {
                    value: mean,
                    std_error: (var / n).sqrt(),
                }
            })
            .collect()
    }
}

struct RngAdapter<'a, R: ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Options for [`simulate_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub burn_in: usize,
    /// Length of the returned pre-sample; `None` means `max(p, d)`.
    pub pre_sample_len: Option<usize>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            pre_sample_len: None,
        }
    }
}

/// Simulated series together with the labels used to generate it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub series: TimeSeries,
    /// Generating label for every returned value (pre-sample included).
    pub labels: Vec<u8>,
}

/// Simulates `n` observations plus a pre-sample of `max(p, d)` values.
pub fn simulate(
    params: &BdarParams,
    n: usize,
    innovations: &InnovationSpec,
    burn_in: usize,
    seed: u64,
) -> Result<TimeSeries> {
    let opts = SimulationOptions {
        burn_in,
        pre_sample_len: None,
    };
    simulate_path(params, n, innovations, &opts, seed).map(|p| p.series)
}

/// Simulates from zero initial values and lower-regime start, discarding
/// `burn_in` draws.
pub fn simulate_path(
    params: &BdarParams,
    n: usize,
    innovations: &InnovationSpec,
    opts: &SimulationOptions,
    seed: u64,
) -> Result<SimulatedPath> {
    params.validate()?;
    innovations.validate()?;
    if n == 0 {
        return Err(BdarError::Domain("n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(params, n, innovations, opts, &mut rng)
}

pub(crate) fn simulate_with_rng<R: Rng + ?Sized>(
    params: &BdarParams,
    n: usize,
    innovations: &InnovationSpec,
    opts: &SimulationOptions,
    rng: &mut R,
) -> Result<SimulatedPath> {
    let p = params.p;
    let d = params.d;
    let n0 = opts.pre_sample_len.unwrap_or(p.max(d));
    let lags = p.max(d);
    let total = opts.burn_in + n0 + n;

    let mut hist = Vec::with_capacity(lags + total);
    hist.resize(lags, 0.0);
    let mut labels = Vec::with_capacity(total);
    let mut prev = 1u8;
    for step in 0..total {
        let t = hist.len();
        let z = hist[t - d];
        let label = if z <= params.r_lower {
            1
        } else if z > params.r_upper {
            0
        } else {
            prev
        };
        let (phi, alpha) = params.regime(label);
        let mut mean = phi[0];
        let mut h = alpha[0];
        for j in 1..=p {
            let lag = hist[t - j];
            mean += phi[j] * lag;
            h += alpha[j] * lag * lag;
        }
        let y = mean + innovations.sample(rng) * h.sqrt();
        if !y.is_finite() || y.abs() > 1e150 {
            return Err(BdarError::Explosion { step });
        }
        hist.push(y);
        labels.push(label);
        prev = label;
    }
    let values = hist.split_off(lags + opts.burn_in);
    let labels = labels.split_off(opts.burn_in);
    Ok(SimulatedPath {
        series: TimeSeries::new(values, n0)?,
        labels,
    })
}
