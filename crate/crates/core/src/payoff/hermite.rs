//! One-dimensional rules for the standard normal weight `φ(x)`: Gauss–Hermite
//! for smooth integrands, composite Gauss–Legendre split at known jumps.

use std::f64::consts::PI;

/// Nodes and weights with `Σ wᵢ f(xᵢ) ≈ E[f(Z)]`, `Z ~ N(0, 1)`.
///
/// Roots of the physicists' Hermite polynomial are found by Newton's method
/// from asymptotic initial guesses, then rescaled by `√2` (weights by `1/√π`).
pub fn standard_normal_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let pim4 = PI.powf(-0.25);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // Orthonormal recurrence avoids overflow for large n.
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let s2 = 2.0f64.sqrt();
    let spi = PI.sqrt();
    let mut nodes: Vec<f64> = x.iter().map(|v| v * s2).collect();
    let mut weights: Vec<f64> = w.iter().map(|v| v / spi).collect();
    nodes.reverse();
    weights.reverse();
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// The split rule truncates the normal law to `[-SPLIT_RANGE, SPLIT_RANGE]`.
pub const SPLIT_RANGE: f64 = 16.0;
const SPLIT_POINTS: usize = 10;

/// Nodes and log-weights for `E[f(Z)]` when `f` jumps at `breaks`:
/// unit panels on `[-16, 16]` with the breakpoints as extra panel edges,
/// 10-point Gauss–Legendre on each panel.
pub fn split_normal_rule(breaks: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut edges: Vec<f64> = (-(SPLIT_RANGE as i32)..=SPLIT_RANGE as i32).map(f64::from).collect();
    edges.extend(breaks.iter().copied().filter(|b| b.abs() < SPLIT_RANGE));
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let (gx, gw) = gauss_legendre(SPLIT_POINTS);
    let log_norm = 0.5 * (2.0 * PI).ln();
    let mut nodes = Vec::with_capacity(edges.len() * SPLIT_POINTS);
    let mut log_weights = Vec::with_capacity(edges.len() * SPLIT_POINTS);
    for pair in edges.windows(2) {
        let (mid, half) = (0.5 * (pair[0] + pair[1]), 0.5 * (pair[1] - pair[0]));
        for (x, w) in gx.iter().zip(&gw) {
            let z = mid + half * x;
            nodes.push(z);
            log_weights.push((w * half).ln() - 0.5 * z * z - log_norm);
        }
    }
    (nodes, log_weights)
}
