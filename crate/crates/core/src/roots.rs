//! Bracketing and bisection for strictly monotone scalar equations.

use crate::error::{PricerError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootConfig {
    /// First bracket offset from the starting point.
    pub initial_step: f64,
    /// Geometric growth factor of the bracket offset.
    pub growth: f64,
    /// Largest admissible bracket offset.
    pub max_offset: f64,
    /// Bisection stops when the bracket is narrower than `x_tol·(1 + |x|)`.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig {
            initial_step: 1.0,
            growth: 2.0,
            max_offset: 2f64.powi(60),
            x_tol: 1e-15,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    /// `f(x)` at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

/// Root of a strictly decreasing `f`, bracketed by geometric expansion from `start`.
pub fn solve_decreasing(mut f: impl FnMut(f64) -> Result<f64>, start: f64, cfg: &RootConfig) -> Result<Root> {
    let f0 = f(start)?;
    if f0 == 0.0 {
        return Ok(Root {
            x: start,
            residual: 0.0,
            iterations: 0,
        });
    }
    // Root lies to the right when f(start) > 0.
    let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
    let mut inner = (start, f0);
    let mut offset = cfg.initial_step;
    let outer = loop {
        let x = start + dir * offset;
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(Root {
                x,
                residual: 0.0,
                iterations: 0,
            });
        }
        if fx.signum() != f0.signum() {
            break (x, fx);
        }
        inner = (x, fx);
        offset *= cfg.growth;
        if offset > cfg.max_offset {
            let (lo, hi) = if dir > 0.0 { (inner, (x, fx)) } else { ((x, fx), inner) };
            return Err(PricerError::BracketFailure {
                lo: lo.0,
                hi: hi.0,
                f_lo: lo.1,
                f_hi: hi.1,
            });
        }
    };
    // f(lo) > 0 > f(hi) for a decreasing function.
    let (mut lo, mut hi) = if dir > 0.0 { (inner, outer) } else { (outer, inner) };
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let mid = 0.5 * (lo.0 + hi.0);
        if hi.0 - lo.0 <= cfg.x_tol * (1.0 + mid.abs()) || mid == lo.0 || mid == hi.0 {
            break;
        }
        iterations += 1;
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(Root {
                x: mid,
                residual: 0.0,
                iterations,
            });
        }
        if fm > 0.0 {
            lo = (mid, fm);
        } else {
            hi = (mid, fm);
        }
    }
    let best = if lo.1.abs() <= hi.1.abs() { lo } else { hi };
    Ok(Root {
        x: best.0,
        residual: best.1,
        iterations,
    })
}
