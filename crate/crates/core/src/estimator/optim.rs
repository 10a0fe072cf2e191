//! Inner QML fit of one regime: a double AR sub-problem over the terms whose
//! label selects that regime.
//!
//! The objective `sum log h_t + u_t^2 / h_t` is minimised by damped Newton
//! steps with analytic derivatives. Positivity of the variance coefficients
//! is enforced through `alpha_0 = exp(a_0)` and `alpha_j = b_j^2`.

use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky, cholesky_solve, least_squares};
use crate::likelihood::dot;

/// Settings for the inner minimisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Relative tolerance on the Newton decrement.
    pub tolerance: f64,
    /// Number of cold starts (1 to 3) tried for every cell.
    pub n_starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tolerance: 1e-11,
            n_starts: 3,
        }
    }
}

/// Regressors and targets of the terms assigned to one regime.
#[derive(Debug, Default, Clone)]
pub(crate) struct RegimeData {
    pub k: usize,
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RegimeData {
    pub fn clear(&mut self, k: usize) {
        self.k = k;
        self.y.clear();
        self.mean.clear();
        self.var.clear();
    }

    pub fn push(&mut self, y: f64, mean_row: &[f64], var_row: &[f64]) {
        self.y.push(y);
        self.mean.extend_from_slice(mean_row);
        self.var.extend_from_slice(var_row);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }
}

/// Coefficients of one regime: `(phi_0..phi_p, alpha_0..alpha_p)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RegimeFit {
    pub coefs: Vec<f64>,
    pub loss: f64,
    pub converged: bool,
}

fn to_internal(coefs: &[f64], k: usize) -> Vec<f64> {
    let mut th = coefs.to_vec();
    th[k] = coefs[k].max(1e-300).ln();
    for j in 1..k {
        // keep slopes off the saddle at b = 0
        th[k + j] = coefs[k + j].max(1e-6).sqrt();
    }
    th
}

fn to_external(theta: &[f64], k: usize) -> Vec<f64> {
    let mut c = theta.to_vec();
    c[k] = theta[k].exp();
    for j in 1..k {
        c[k + j] = theta[k + j] * theta[k + j];
    }
    c
}

/// Objective at external coefficients; `inf` when some `h_t <= 0`.
pub(crate) fn objective(data: &RegimeData, coefs: &[f64]) -> f64 {
    let k = data.k;
    let (phi, alpha) = coefs.split_at(k);
    let mut f = 0.0;
    for t in 0..data.len() {
        let h = dot(alpha, &data.var[t * k..(t + 1) * k]);
        if !(h > 0.0) || !h.is_finite() {
            return f64::INFINITY;
        }
        let u = data.y[t] - dot(phi, &data.mean[t * k..(t + 1) * k]);
        f += h.ln() + u * u / h;
    }
    f
}

struct Workspace {
    grad: Vec<f64>,
    hess: Vec<f64>,
    factor: Vec<f64>,
    step: Vec<f64>,
    trial: Vec<f64>,
}

/// Gradient and Hessian in the internal parameterisation.
fn grad_hess(data: &RegimeData, theta: &[f64], ws: &mut Workspace) {
    let k = data.k;
    let m = 2 * k;
    let c = to_external(theta, k);
    let (phi, alpha) = c.split_at(k);
    let g = &mut ws.grad;
    let hm = &mut ws.hess;
    g.iter_mut().for_each(|v| *v = 0.0);
    hm.iter_mut().for_each(|v| *v = 0.0);
    for t in 0..data.len() {
        let yr = &data.mean[t * k..(t + 1) * k];
        let xr = &data.var[t * k..(t + 1) * k];
        let h = dot(alpha, xr);
        let u = data.y[t] - dot(phi, yr);
        let ih = 1.0 / h;
        let u_h = u * ih;
        let gphi = -2.0 * u_h;
        let galpha = ih * (1.0 - u * u_h);
        let w_pp = 2.0 * ih;
        let w_pa = 2.0 * u_h * ih;
        let w_aa = ih * ih * (2.0 * u * u_h - 1.0);
        for a in 0..k {
            g[a] += gphi * yr[a];
            g[k + a] += galpha * xr[a];
            for b in 0..=a {
                hm[a * m + b] += w_pp * yr[a] * yr[b];
                hm[(k + a) * m + k + b] += w_aa * xr[a] * xr[b];
            }
            for b in 0..k {
                hm[(k + a) * m + b] += w_pa * xr[a] * yr[b];
            }
        }
    }
    // symmetrise the phi-phi and alpha-alpha blocks
    for a in 0..k {
        for b in 0..a {
            hm[b * m + a] = hm[a * m + b];
            hm[(k + b) * m + k + a] = hm[(k + a) * m + k + b];
        }
        for b in 0..k {
            hm[b * m + k + a] = hm[(k + a) * m + b];
        }
    }
    // chain rule: d alpha / d theta is diag(alpha_0, 2 b_1, .., 2 b_p)
    let mut jac = vec![1.0; m];
    jac[k] = alpha[0];
    for j in 1..k {
        jac[k + j] = 2.0 * theta[k + j];
    }
    let galpha: Vec<f64> = (0..k).map(|a| g[k + a]).collect();
    for r in 0..m {
        for s in 0..m {
            hm[r * m + s] *= jac[r] * jac[s];
        }
    }
    hm[k * m + k] += galpha[0] * alpha[0];
    for j in 1..k {
        hm[(k + j) * m + k + j] += 2.0 * galpha[j];
    }
    for r in k..m {
        g[r] *= jac[r];
    }
}

fn newton(data: &RegimeData, start: &[f64], cfg: &OptimizerConfig) -> RegimeFit {
    let k = data.k;
    let m = 2 * k;
    let mut theta = to_internal(start, k);
    let mut f = objective(data, &to_external(&theta, k));
    if !f.is_finite() {
        return RegimeFit {
            coefs: to_external(&theta, k),
            loss: f64::INFINITY,
            converged: false,
        };
    }
    let mut ws = Workspace {
        grad: vec![0.0; m],
        hess: vec![0.0; m * m],
        factor: vec![0.0; m * m],
        step: vec![0.0; m],
        trial: vec![0.0; m],
    };
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        grad_hess(data, &theta, &mut ws);
        if ws.grad.iter().any(|v| !v.is_finite()) {
            break;
        }
        let diag_max = (0..m).map(|i| ws.hess[i * m + i].abs()).fold(0.0f64, f64::max);
        let mut mu = 0.0;
        let factored = loop {
            ws.factor.copy_from_slice(&ws.hess);
            for i in 0..m {
                ws.factor[i * m + i] += mu;
            }
            if cholesky(&mut ws.factor, m) {
                break true;
            }
            mu = if mu == 0.0 { 1e-10 * diag_max.max(1e-12) } else { mu * 10.0 };
            if mu > 1e20 * diag_max.max(1.0) {
                break false;
            }
        };
        if !factored {
            break;
        }
        for i in 0..m {
            ws.step[i] = -ws.grad[i];
        }
        cholesky_solve(&ws.factor, m, &mut ws.step);
        let slope = dot(&ws.grad, &ws.step);
        if !(slope < 0.0) {
            converged = slope.abs() <= cfg.tolerance * (1.0 + f.abs());
            break;
        }
        if -slope <= 2.0 * cfg.tolerance * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..m {
                ws.trial[i] = theta[i] + t * ws.step[i];
            }
            let ft = objective(data, &to_external(&ws.trial, k));
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                accepted = Some(ft);
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some(ft) => {
                theta.copy_from_slice(&ws.trial);
                let decrease = f - ft;
                f = ft;
                if decrease <= cfg.tolerance * (1.0 + f.abs()) && t == 1.0 {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = -slope <= 1e3 * cfg.tolerance * (1.0 + f.abs());
                break;
            }
        }
    }
    RegimeFit {
        coefs: to_external(&theta, k),
        loss: f,
        converged,
    }
}

/// The deterministic cold starts for a regime.
pub(crate) fn cold_starts(data: &RegimeData, n_starts: usize) -> Vec<Vec<f64>> {
    let k = data.k;
    let p = k - 1;
    let n = data.len().max(1) as f64;
    let phi = least_squares(&data.mean, &data.y, k);
    let resid2: Vec<f64> = (0..data.len())
        .map(|t| {
            let u = data.y[t] - dot(&phi, &data.mean[t * k..(t + 1) * k]);
            u * u
        })
        .collect();
    let s2 = (resid2.iter().sum::<f64>() / n).max(1e-12);
    let m2 = if p > 0 {
        (0..data.len()).map(|t| data.var[t * k + 1]).sum::<f64>() / n
    } else {
        0.0
    };

    let mut starts = Vec::with_capacity(3);
    // least-squares mean, residual-variance scale
    let slope = if m2 > 0.0 { 0.1 * (s2 / m2).min(1.0) } else { 0.1 };
    let mut a = phi.clone();
    a.push((s2 - p as f64 * slope * m2).max(0.2 * s2));
    a.extend(std::iter::repeat_n(slope, p));
    starts.push(a);

    // regression of squared residuals on the variance regressors
    let c = least_squares(&data.var, &resid2, k);
    let mut b = phi.clone();
    b.push(if c[0] > 0.0 { c[0].max(0.05 * s2) } else { 0.1 * s2 });
    b.extend(c[1..].iter().map(|v| v.clamp(0.01, 0.8)));
    starts.push(b.clone());

    // perturbed copy of the regression start
    let sd = s2.sqrt();
    let mut pert = b;
    pert[0] -= 0.1 * sd;
    for j in 1..k {
        pert[j] += if j % 2 == 1 { 0.1 } else { -0.1 };
        pert[k + j] = 0.5 * pert[k + j] + 0.05;
    }
    pert[k] *= 1.5;
    starts.push(pert);

    starts.truncate(n_starts.clamp(1, 3));
    starts
}

/// Best fit over the cold starts and an optional warm start.
pub(crate) fn fit_regime(
    data: &RegimeData,
    warm: Option<&[f64]>,
    cfg: &OptimizerConfig,
) -> RegimeFit {
    let mut best: Option<RegimeFit> = None;
    let mut consider = |fit: RegimeFit| {
        let better = match &best {
            None => true,
            Some(b) => fit.loss < b.loss,
        };
        if better {
            best = Some(fit);
        }
    };
    if let Some(w) = warm {
        consider(newton(data, w, cfg));
    }
    for s in cold_starts(data, cfg.n_starts) {
        consider(newton(data, &s, cfg));
    }
    best.expect("at least one start")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dar_data(phi: &[f64], alpha: &[f64], n: usize, seed: u64) -> RegimeData {
        let k = phi.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = vec![0.0; k - 1];
        for _ in 0..n + 200 {
            let t = y.len();
            let mut mu = phi[0];
            let mut h = alpha[0];
            for j in 1..k {
                mu += phi[j] * y[t - j];
                h += alpha[j] * y[t - j] * y[t - j];
            }
            let e: f64 = StandardNormal.sample(&mut rng);
            y.push(mu + e * h.sqrt());
        }
        let mut data = RegimeData::default();
        data.clear(k);
        for t in y.len() - n..y.len() {
            let mr: Vec<f64> = (0..k).map(|j| if j == 0 { 1.0 } else { y[t - j] }).collect();
            let vr: Vec<f64> = mr.iter().enumerate().map(|(j, v)| if j == 0 { 1.0 } else { v * v }).collect();
            data.push(y[t], &mr, &vr);
        }
        data
    }

    fn fd_gradient(data: &RegimeData, c: &[f64]) -> Vec<f64> {
        (0..c.len())
            .map(|i| {
                let h = 1e-6 * c[i].abs().max(1e-3);
                let mut a = c.to_vec();
                let mut b = c.to_vec();
                a[i] += h;
                b[i] -= h;
                (objective(data, &a) - objective(data, &b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn recovers_dar_coefficients() {
        let data = dar_data(&[0.1, 0.3, -0.2], &[0.5, 0.3, 0.1], 20_000, 1);
        let fit = fit_regime(&data, None, &OptimizerConfig::default());
        assert!(fit.converged);
        let truth = [0.1, 0.3, -0.2, 0.5, 0.3, 0.1];
        for (e, t) in fit.coefs.iter().zip(truth) {
            assert!((e - t).abs() < 0.05, "{:?}", fit.coefs);
        }
        // stationary point of the external objective
        let g = fd_gradient(&data, &fit.coefs);
        for gi in g {
            assert!(gi.abs() < 1e-3 * data.len() as f64 * 1e-3, "gradient {gi}");
        }
    }

    #[test]
    fn internal_gradient_matches_finite_differences() {
        let data = dar_data(&[0.0, 0.2], &[1.0, 0.4], 500, 3);
        let theta = vec![0.05, 0.1, 0.2f64.ln(), 0.5];
        let mut ws = Workspace {
            grad: vec![0.0; 4],
            hess: vec![0.0; 16],
            factor: vec![0.0; 16],
            step: vec![0.0; 4],
            trial: vec![0.0; 4],
        };
        grad_hess(&data, &theta, &mut ws);
        let f = |th: &[f64]| objective(&data, &to_external(th, 2));
        for i in 0..4 {
            let h = 1e-6;
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - ws.grad[i]).abs() < 1e-5 * (1.0 + fd.abs()), "grad {i}");
            // Hessian row by differencing the analytic gradient
            let mut wa = Workspace { grad: vec![0.0; 4], hess: vec![0.0; 16], factor: vec![0.0; 16], step: vec![0.0; 4], trial: vec![0.0; 4] };
            let mut wb = Workspace { grad: vec![0.0; 4], hess: vec![0.0; 16], factor: vec![0.0; 16], step: vec![0.0; 4], trial: vec![0.0; 4] };
            grad_hess(&data, &a, &mut wa);
            grad_hess(&data, &b, &mut wb);
            for j in 0..4 {
                let fd = (wa.grad[j] - wb.grad[j]) / (2.0 * h);
                assert!((fd - ws.hess[i * 4 + j]).abs() < 1e-4 * (1.0 + fd.abs()), "hess {i},{j}");
            }
        }
    }

    #[test]
    fn zero_slope_truth_stays_nonnegative() {
        let data = dar_data(&[0.0, 0.3], &[1.0, 0.0], 3000, 5);
        let fit = fit_regime(&data, None, &OptimizerConfig::default());
        assert!(fit.coefs[3] >= 0.0);
        assert!(fit.coefs[3] < 0.03, "{:?}", fit.coefs);
    }

    #[test]
    fn warm_start_never_hurts() {
        let data = dar_data(&[0.1, 0.3, -0.2], &[0.5, 0.3, 0.1], 800, 8);
        let cold = fit_regime(&data, None, &OptimizerConfig::default());
        let warm = fit_regime(&data, Some(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]), &OptimizerConfig::default());
        assert!(warm.loss <= cold.loss);
    }
}
