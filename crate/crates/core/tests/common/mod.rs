//! Independent reference implementations shared by integration tests and
//! the acceptance run. Nothing here calls into the estimator internals.

#![allow(dead_code)]

use bdar::model::{simulate_path, BdarParams, InnovationSpec, SimulationOptions, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Label at `t` by scanning back to the most recent exit from the buffer.
/// Labels before the first exit are lower (1).
pub fn backward_scan_label(y: &[f64], start: usize, t: usize, d: usize, rl: f64, ru: f64) -> u8 {
    let mut s = t;
    loop {
        let z = y[s - d];
        if z <= rl {
            return 1;
        }
        if z > ru {
            return 0;
        }
        if s == start {
            return 1;
        }
        s -= 1;
    }
}

/// `sum_t [ln h_t + u_t^2 / h_t]` computed term by term from the definitions.
pub fn oracle_neg2_loglik(params: &BdarParams, y: &[f64], n0: usize) -> f64 {
    let start = n0.max(params.d);
    let mut total = 0.0;
    for t in n0..y.len() {
        let label = backward_scan_label(y, start, t, params.d, params.r_lower, params.r_upper);
        let (phi, alpha) = if label == 1 {
            (&params.phi1, &params.alpha1)
        } else {
            (&params.phi2, &params.alpha2)
        };
        let mut mu = phi[0];
        let mut h = alpha[0];
        for j in 1..=params.p {
            mu += phi[j] * y[t - j];
            h += alpha[j] * y[t - j].powi(2);
        }
        let u = y[t] - mu;
        total += h.ln() + u * u / h;
    }
    total
}

/// Random admissible parameters with thresholds inside the data range and a
/// random data vector (not necessarily generated by the model).
pub fn random_instance(rng: &mut ChaCha8Rng) -> (BdarParams, TimeSeries) {
    let p = rng.random_range(0..=2usize);
    let d = rng.random_range(1..=3usize);
    let n0 = p.max(d) + rng.random_range(0..=2usize);
    let n = rng.random_range(5..=30usize);
    let values: Vec<f64> = (0..n0 + n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut coef = |lo: f64, hi: f64| -> Vec<f64> { (0..=p).map(|_| rng.random_range(lo..hi)).collect() };
    let phi1 = coef(-0.6, 0.6);
    let phi2 = coef(-0.6, 0.6);
    let mut alpha1 = coef(0.0, 0.5);
    let mut alpha2 = coef(0.0, 0.5);
    alpha1[0] += 0.05;
    alpha2[0] += 0.05;
    let a = rng.random_range(-1.5..1.5);
    let b = rng.random_range(-1.5..1.5);
    let params = BdarParams {
        p,
        d,
        phi1,
        alpha1,
        phi2,
        alpha2,
        r_lower: f64::min(a, b),
        r_upper: f64::max(a, b),
    };
    (params, TimeSeries::new(values, n0).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn reference_sample(n: usize, pre: usize, seed: u64) -> TimeSeries {
    simulate_path(
        &BdarParams::reference_design(),
        n,
        &InnovationSpec::StandardNormal,
        &SimulationOptions { burn_in: 500, pre_sample_len: Some(pre) },
        seed,
    )
    .unwrap()
    .series
}

/// Regime-specific DAR loss in the parametrisation
/// `(phi_0..phi_p, ln alpha_0, sqrt alpha_1 .. sqrt alpha_p)`.
fn dar_loss(theta: &[f64], rows: &[(f64, Vec<f64>)], k: usize) -> f64 {
    let phi = &theta[..k];
    let a0 = theta[k].exp();
    let mut total = 0.0;
    for (target, lags) in rows {
        let mut mu = phi[0];
        let mut h = a0;
        for j in 1..k {
            mu += phi[j] * lags[j - 1];
            h += theta[k + j] * theta[k + j] * lags[j - 1] * lags[j - 1];
        }
        let u = target - mu;
        total += h.ln() + u * u / h;
    }
    total
}

fn fd_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Plain BFGS with backtracking and central-difference gradients.
pub fn bfgs(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = fd_grad(f, &x);
    let mut hinv: Vec<f64> = (0..n * n).map(|i| if i % (n + 1) == 0 { 1e-2 } else { 0.0 }).collect();
    for _ in 0..iters {
        let dir: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| hinv[i * n + j] * g[j]).sum::<f64>()).collect();
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let dir = if slope < 0.0 { dir } else { g.iter().map(|v| -v * 1e-2).collect() };
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let fnew = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let gn = fd_grad(f, &xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let converged = (fx - fnew).abs() <= 1e-14 * (1.0 + fx.abs());
        x = xn;
        fx = fnew;
        g = gn;
        if sy > 1e-16 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i * n + j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        if converged || g.iter().all(|v| v.abs() < 1e-9) {
            break;
        }
    }
    (x, fx)
}

fn dar_fit(rows: &[(f64, Vec<f64>)], k: usize) -> f64 {
    let m = rows.len() as f64;
    let mean = rows.iter().map(|r| r.0).sum::<f64>() / m;
    let var = rows.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / m;
    let f = |th: &[f64]| dar_loss(th, rows, k);
    let mut best = f64::INFINITY;
    for slope in [0.1, 0.3, 0.6] {
        let mut x0 = vec![0.0; 2 * k];
        x0[0] = mean;
        x0[k] = (var * 0.7).ln();
        for j in 1..k {
            x0[k + j] = slope;
        }
        let (x1, _) = bfgs(&f, &x0, 400);
        // restart once so the inverse Hessian approximation is refreshed
        let (_, fx) = bfgs(&f, &x1, 400);
        best = best.min(fx);
    }
    best
}

/// Minimal loss over `(r, d)` of the single-threshold (no buffer) model,
/// searching the same candidates and admissibility rule as the estimator.
pub fn tdar_profile_loss(y: &TimeSeries, p: usize, d_max: usize, candidates: &[f64], required: usize) -> f64 {
    let v = y.values();
    let n0 = y.pre_sample_len();
    let k = p + 1;
    let mut best = f64::INFINITY;
    for d in 1..=d_max {
        for &r in candidates {
            let mut lower = Vec::new();
            let mut upper = Vec::new();
            for t in n0..v.len() {
                let lags: Vec<f64> = (1..=p).map(|j| v[t - j]).collect();
                if v[t - d] <= r {
                    lower.push((v[t], lags));
                } else {
                    upper.push((v[t], lags));
                }
            }
            if lower.len() < required || upper.len() < required {
                continue;
            }
            best = best.min(dar_fit(&lower, k) + dar_fit(&upper, k));
        }
    }
    best
}
