//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use causenet::gp::KernelParams;

pub fn se(p: &KernelParams, a: f64, b: f64) -> f64 {
    p.signal_variance * (-(a - b).powi(2) / (2.0 * p.length_scale * p.length_scale)).exp()
}

/// Gaussian elimination with partial pivoting. Returns (solution, ln|det|).
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| {
        let mut row = r.clone();
        row.push(v);
        row
    }).collect();
    let mut logdet = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        logdet += m[c][c].abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    (x, logdet)
}

pub fn dense_gram(p: &KernelParams, xs: &[f64]) -> Vec<Vec<f64>> {
    (0..xs.len())
        .map(|i| {
            (0..xs.len())
                .map(|j| se(p, xs[i], xs[j]) + if i == j { p.noise_variance } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Dense log marginal likelihood of zero-mean targets.
pub fn dense_lml(p: &KernelParams, xs: &[f64], ys: &[f64]) -> f64 {
    let (alpha, logdet) = dense_solve(&dense_gram(p, xs), ys);
    let fit: f64 = ys.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    -0.5 * fit - 0.5 * logdet - 0.5 * xs.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Closed-form posterior for one observation.
pub fn one_point(p: &KernelParams, x: f64, y: f64, t: f64) -> (f64, f64) {
    let k = se(p, t, x);
    let d = p.signal_variance + p.noise_variance;
    (k * y / d, p.signal_variance - k * k / d)
}

/// Closed-form posterior for two observations via the explicit 2x2 inverse.
pub fn two_point(p: &KernelParams, x: [f64; 2], y: [f64; 2], t: f64) -> (f64, f64) {
    let a = p.signal_variance + p.noise_variance;
    let b = se(p, x[0], x[1]);
    let det = a * a - b * b;
    let inv = [[a / det, -b / det], [-b / det, a / det]];
    let k = [se(p, t, x[0]), se(p, t, x[1])];
    let w = [
        inv[0][0] * k[0] + inv[0][1] * k[1],
        inv[1][0] * k[0] + inv[1][1] * k[1],
    ];
    (w[0] * y[0] + w[1] * y[1], p.signal_variance - (w[0] * k[0] + w[1] * k[1]))
}
