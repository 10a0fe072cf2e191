//! Small dense symmetric solves for the inner optimiser hot path.

/// In-place Cholesky of a row-major `n x n` SPD matrix (lower triangle).
/// Returns `false` when the matrix is not numerically positive definite.
pub(crate) fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    true
}

/// Solves `L L' x = b` in place given the factor from [`cholesky`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Least squares `argmin |y - X b|` through the normal equations, with a tiny
/// ridge when `X'X` is numerically singular.
pub(crate) fn least_squares(x: &[f64], y: &[f64], k: usize) -> Vec<f64> {
    let n = y.len();
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    for t in 0..n {
        let row = &x[t * k..(t + 1) * k];
        for a in 0..k {
            xty[a] += row[a] * y[t];
            for b in 0..=a {
                xtx[a * k + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[b * k + a] = xtx[a * k + b];
        }
    }
    let scale = (0..k).map(|a| xtx[a * k + a]).fold(0.0f64, f64::max).max(1.0);
    let mut ridge = 0.0;
    loop {
        let mut m = xtx.clone();
        for a in 0..k {
            m[a * k + a] += ridge;
        }
        if cholesky(&mut m, k) {
            let mut b = xty.clone();
            cholesky_solve(&m, k, &mut b);
            if b.iter().all(|v| v.is_finite()) {
                return b;
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 100.0 };
        if ridge > scale * 1e6 {
            return vec![0.0; k];
        }
    }
}
