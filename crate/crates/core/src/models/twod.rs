use std::io::Write;

use crate::error::{PricerError, Result};
use crate::normal::{cdf, pdf};

/// `Ψ = (B¹_T, B¹_T 1{B²_T ≥ 0})`, `Σ₀ = 0`, seen from `(t, B¹_t, B²_t) = (t, b₁, b₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoDDigitalSpec {
    pub horizon: f64,
    pub t: f64,
    pub b1: f64,
    pub b2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Membership {
    pub member: bool,
    /// `p₂` sits on a zero of the log's numerator or denominator.
    pub singular: bool,
}

impl TwoDDigitalSpec {
    pub fn new(horizon: f64, t: f64, b1: f64, b2: f64) -> Result<Self> {
        if !(horizon > 0.0) || !(0.0..horizon).contains(&t) || !b1.is_finite() || !b2.is_finite() {
            return Err(PricerError::invalid("need T > 0, 0 ≤ t < T and finite (b₁, b₂)"));
        }
        Ok(TwoDDigitalSpec { horizon, t, b1, b2 })
    }

    pub fn tau(&self) -> f64 {
        self.horizon - self.t
    }

    /// `A = Φ(−b₂/√τ)`.
    pub fn a(&self) -> f64 {
        cdf(-self.b2 / self.tau().sqrt())
    }

    /// `C = √τ / φ(−b₂/√τ)`.
    pub fn c(&self) -> f64 {
        self.tau().sqrt() / pdf(-self.b2 / self.tau().sqrt())
    }

    /// Open band `(−1/((1−A)C), 1/(AC))` for `p₂`.
    pub fn p2_band(&self) -> (f64, f64) {
        let (a, c) = (self.a(), self.c());
        (-1.0 / ((1.0 - a) * c), 1.0 / (a * c))
    }

    /// Right-hand side `2τ(1 − 2(1−ACp₂)(1−A)) log((1+(1−A)Cp₂)/(1−ACp₂))`.
    pub fn threshold(&self, p2: f64) -> f64 {
        let (a, c, tau) = (self.a(), self.c(), self.tau());
        let hi = 1.0 - a * c * p2;
        let lo = 1.0 + (1.0 - a) * c * p2;
        2.0 * tau * (1.0 - 2.0 * hi * (1.0 - a)) * (lo / hi).ln()
    }
}

pub fn twod_region_membership(spec: &TwoDDigitalSpec, p1: f64, p2: f64) -> Membership {
    let (lo, hi) = spec.p2_band();
    let near = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + y.abs());
    if near(p2, lo) || near(p2, hi) {
        return Membership {
            member: false,
            singular: true,
        };
    }
    if !(lo < p2 && p2 < hi) {
        return Membership {
            member: false,
            singular: false,
        };
    }
    let lhs = (spec.tau() * p1 - spec.b1).powi(2);
    let rhs = spec.threshold(p2);
    // Closed set: equality counts as membership.
    Membership {
        member: lhs >= rhs - 1e-12 * (1.0 + rhs.abs()),
        singular: false,
    }
}

/// Membership on a `p₁ × p₂` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRaster {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    /// `cells[j][i]` is the point `(p1[i], p2[j])`.
    pub cells: Vec<Vec<Membership>>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn region_raster(spec: &TwoDDigitalSpec, p1: (f64, f64), p2: (f64, f64), resolution: (usize, usize)) -> Result<RegionRaster> {
    if resolution.0 < 2 || resolution.1 < 2 {
        return Err(PricerError::invalid("raster resolution must be at least 2 per axis"));
    }
    if !(p1.0 < p1.1) || !(p2.0 < p2.1) {
        return Err(PricerError::invalid("raster ranges must be increasing"));
    }
    let xs = linspace(p1.0, p1.1, resolution.0);
    let ys = linspace(p2.0, p2.1, resolution.1);
    let cells = ys
        .iter()
        .map(|&y| xs.iter().map(|&x| twod_region_membership(spec, x, y)).collect())
        .collect();
    Ok(RegionRaster { p1: xs, p2: ys, cells })
}

impl RegionRaster {
    /// First row containing member, non-member, member cells from left to right.
    pub fn nonconvex_triple(&self) -> Option<[(f64, f64); 3]> {
        for (j, row) in self.cells.iter().enumerate() {
            let Some(first) = row.iter().position(|m| m.member) else { continue };
            let Some(gap) = row[first..].iter().position(|m| !m.member).map(|k| k + first) else { continue };
            if let Some(last) = row[gap..].iter().position(|m| m.member).map(|k| k + gap) {
                let y = self.p2[j];
                return Some([(self.p1[first], y), (self.p1[gap], y), (self.p1[last], y)]);
            }
        }
        None
    }

    /// CSV with header `p1,p2,in_region,singular`, one lattice point per line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| PricerError::invalid(format!("writing raster: {e}"));
        w.write_record(["p1", "p2", "in_region", "singular"]).map_err(io)?;
        for (j, row) in self.cells.iter().enumerate() {
            for (i, m) in row.iter().enumerate() {
                w.write_record([
                    format!("{:.16e}", self.p1[i]),
                    format!("{:.16e}", self.p2[j]),
                    m.member.to_string(),
                    m.singular.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| PricerError::invalid(format!("writing raster: {e}")))?;
        Ok(())
    }
}
