//! Independent eigenvalue oracle: Householder reduction to tridiagonal form
//! followed by bisection on Sturm sequence counts.

use nalgebra::DMatrix;

/// Diagonal and off-diagonal of a tridiagonal matrix similar to `a`.
pub fn tridiagonalize(a: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut t = (a + a.transpose()) * 0.5;
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| t[(i, k)]).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|z| z * z).sum();
        if vv == 0.0 {
            continue;
        }
        let mut h = DMatrix::<f64>::identity(n, n);
        for (p, vp) in v.iter().enumerate() {
            for (q, vq) in v.iter().enumerate() {
                h[(k + 1 + p, k + 1 + q)] -= 2.0 * vp * vq / vv;
            }
        }
        t = &h * t * &h;
    }
    let diag = (0..n).map(|i| t[(i, i)]).collect();
    let off = (1..n).map(|i| t[(i, i - 1)]).collect();
    (diag, off)
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `x`.
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        d = diag[i] - x - e2 / d;
        if d == 0.0 {
            d = -tiny;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues in ascending order.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let (diag, off) = tridiagonalize(a);
    let mut radius: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
        radius = radius.max(diag[i].abs() + r);
    }
    let pad = 1e-12 * radius.max(f64::MIN_POSITIVE);
    (lo, hi) = (lo - pad, hi + pad);
    (0..n)
        .map(|k| {
            // smallest x with more than k eigenvalues below it
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if sturm_count(&diag, &off, mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}
