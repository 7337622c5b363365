//! Expectation backends.
//!
//! Both backends reduce an expression set to a weighted sample table over the
//! span of its Gaussian functionals: a tensor Gauss–Hermite grid, or Monte
//! Carlo draws with one ChaCha stream per path index. All exponential moments
//! are accumulated in shifted (log-sum-exp) form.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::expr::compile::{Op, Program};
use super::expr::PayoffExpr;
use super::hermite::{split_normal_rule, standard_normal_rule};
use crate::error::{PricerError, Result};

const CHUNK: usize = 4096;
/// Largest tensor grid the quadrature backend will build.
const MAX_QUADRATURE_POINTS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationEngine {
    pub method: Method,
    /// Gauss–Hermite nodes per Gaussian dimension.
    pub nodes: usize,
    pub paths: usize,
    pub seed: u64,
    pub abs_tol: f64,
    /// Largest Gaussian rank the tensor rule will integrate.
    pub max_quadrature_dim: usize,
}

impl Default for ExpectationEngine {
    fn default() -> Self {
        ExpectationEngine {
            method: Method::Quadrature,
            nodes: 64,
            paths: 100_000,
            seed: 0,
            abs_tol: 1e-10,
            max_quadrature_dim: 3,
        }
    }
}

/// Point estimate with its Monte-Carlo standard error (zero for quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl ExpectationEngine {
    pub fn quadrature(nodes: usize) -> Self {
        ExpectationEngine {
            nodes,
            ..Default::default()
        }
    }

    pub fn monte_carlo(paths: usize, seed: u64) -> Self {
        ExpectationEngine {
            method: Method::MonteCarlo,
            paths,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.paths == 0 {
            return Err(PricerError::invalid("engine node and path counts must be positive"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(PricerError::invalid("abs_tol must be positive"));
        }
        Ok(())
    }

    /// Evaluates every expression on the engine's weighted sample set.
    pub fn tabulate(&self, exprs: &[&PayoffExpr]) -> Result<SampleTable> {
        self.validate()?;
        let program = Program::new(exprs)?;
        let (loading, breaks) = gaussian_loading(&program)?;
        let rank = loading.ncols();
        let m = loading.nrows();
        let eval_point = |x: &[f64], scratch: &mut Vec<f64>, g: &mut Vec<f64>, out: &mut Vec<f64>| {
            g.clear();
            g.extend((0..m).map(|a| (0..rank).map(|k| loading[(a, k)] * x[k]).sum::<f64>()));
            out.clear();
            out.extend(program.ops.iter().map(|op| op.eval(g, scratch)));
        };

        let (log_weights, rows): (Vec<f64>, Vec<Vec<f64>>) = match self.method {
            Method::Quadrature => {
                if rank > self.max_quadrature_dim {
                    return Err(PricerError::Unsupported(format!(
                        "quadrature over a Gaussian span of rank {rank} (max {}); use the Monte-Carlo engine",
                        self.max_quadrature_dim
                    )));
                }
                let (hx, hw) = standard_normal_rule(self.nodes);
                let hermite = (hx, hw.iter().map(|v| v.ln()).collect::<Vec<f64>>());
                let axes: Vec<(Vec<f64>, Vec<f64>)> = breaks
                    .iter()
                    .map(|b| if b.is_empty() { hermite.clone() } else { split_normal_rule(b) })
                    .collect();
                let sizes: Vec<usize> = axes.iter().map(|a| a.0.len()).collect();
                let total = sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).unwrap_or(usize::MAX);
                if total > MAX_QUADRATURE_POINTS {
                    return Err(PricerError::Unsupported(format!(
                        "tensor grid of {total} points; use the Monte-Carlo engine"
                    )));
                }
                (0..total)
                    .into_par_iter()
                    .map_init(
                        || (vec![0.0; rank], Vec::new(), Vec::new(), Vec::new()),
                        |(pt, scratch, g, out), idx| {
                            let mut rest = idx;
                            let mut logw = 0.0;
                            for (k, p) in pt.iter_mut().enumerate() {
                                let j = rest % sizes[k];
                                rest /= sizes[k];
                                *p = axes[k].0[j];
                                logw += axes[k].1[j];
                            }
                            eval_point(pt, scratch, g, out);
                            (logw, out.clone())
                        },
                    )
                    .unzip()
            }
            Method::MonteCarlo => {
                let base = ChaCha8Rng::seed_from_u64(self.seed);
                let lw = -(self.paths as f64).ln();
                (0..self.paths)
                    .into_par_iter()
                    .map_init(
                        || (vec![0.0; rank], Vec::new(), Vec::new(), Vec::new()),
                        |(pt, scratch, g, out), path| {
                            let mut rng = path_rng(&base, path as u64);
                            for p in pt.iter_mut() {
                                *p = StandardNormal.sample(&mut rng);
                            }
                            eval_point(pt, scratch, g, out);
                            (lw, out.clone())
                        },
                    )
                    .unzip()
            }
        };

        let mut columns = vec![Vec::with_capacity(rows.len()); exprs.len()];
        for row in &rows {
            for (c, v) in columns.iter_mut().zip(row) {
                c.push(*v);
            }
        }
        Ok(SampleTable {
            log_weights,
            columns,
            monte_carlo: self.method == Method::MonteCarlo,
        })
    }

    pub fn estimate(&self, expr: &PayoffExpr) -> Result<Estimate> {
        let t = self.tabulate(&[expr])?;
        let m = t.moments(|i| t.columns[0][i], |_| 0.0)?;
        Ok(Estimate {
            value: m.mean(),
            std_error: if t.monte_carlo { m.mean_std_error() } else { 0.0 },
        })
    }

    /// `E[expr]`.
    pub fn expect(&self, expr: &PayoffExpr) -> Result<f64> {
        Ok(self.estimate(expr)?.value)
    }

    /// `log E[e^expr]`, evaluated in shifted form so large exponents do not overflow.
    pub fn log_expect_exp(&self, expr: &PayoffExpr) -> Result<f64> {
        Ok(self.log_expect_exp_estimate(expr)?.value)
    }

    pub fn log_expect_exp_estimate(&self, expr: &PayoffExpr) -> Result<Estimate> {
        let t = self.tabulate(&[expr])?;
        let m = t.moments(|_| 1.0, |i| t.columns[0][i])?;
        Ok(Estimate {
            value: m.log_normaliser(),
            std_error: if t.monte_carlo { m.log_normaliser_std_error(t.len()) } else { 0.0 },
        })
    }

    /// Gibbs-tilted mean `E[X e^W] / E[e^W]`.
    pub fn tilted_expect(&self, numerator: &PayoffExpr, tilt: &PayoffExpr) -> Result<f64> {
        let t = self.tabulate(&[numerator, tilt])?;
        let m = t.moments(|i| t.columns[0][i], |i| t.columns[1][i])?;
        Ok(m.mean())
    }

    /// Essential range estimate: bounded sides are the min/max over the
    /// engine's sample support, unbounded Gaussian sides are `±∞`.
    pub fn support_range(&self, expr: &PayoffExpr) -> Result<(f64, f64)> {
        let (lo_bound, hi_bound) = expr.range_bound();
        if lo_bound.is_infinite() && hi_bound.is_infinite() {
            return Ok((lo_bound, hi_bound));
        }
        let t = self.tabulate(&[expr])?;
        let (lo, hi) = t.column_range(0);
        Ok((
            if lo_bound.is_infinite() { lo_bound } else { lo },
            if hi_bound.is_infinite() { hi_bound } else { hi },
        ))
    }
}

/// Path-indexed generator: stream `path` of the ChaCha8 generator seeded by the engine seed.
pub(crate) fn path_rng(base: &ChaCha8Rng, path: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(path);
    rng.set_word_pos(0);
    rng
}

/// Jump locations `(functional, level)`: indicators and `|affine|` kinks.
fn kinks(op: &Op, out: &mut Vec<(usize, f64)>) {
    match op {
        Op::Indicator { functional, strike } => out.push((*functional, *strike)),
        Op::Abs(x) => match x.as_ref() {
            Op::Affine { offset, functional } => out.push((*functional, -offset)),
            other => kinks(other, out),
        },
        Op::Sum(xs) | Op::Product(xs) => xs.iter().for_each(|x| kinks(x, out)),
        Op::Scale(_, x) | Op::Exp(x) => kinks(x, out),
        Op::Const(_) | Op::Affine { .. } | Op::Terminal { .. } => {}
    }
}

/// Loading matrix `L` (functionals × rank) with `L L' = Cov`, plus the
/// breakpoints of each standard-normal axis.
///
/// Without jumps the basis is the eigenbasis of `Cov`. With jumps it is a
/// Cholesky basis pivoting on the jump functionals first, so a jump whose
/// functional is orthogonal to the earlier ones sits on a single axis and the
/// axis rule can split there. Jumps that still mix axes fall back to the
/// Hermite rule.
fn gaussian_loading(program: &Program) -> Result<(DMatrix<f64>, Vec<Vec<f64>>)> {
    let m = program.functionals.len();
    if m == 0 {
        return Ok((DMatrix::zeros(0, 0), Vec::new()));
    }
    let mut cov = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let c = program.functionals[a].inner(&program.functionals[b])?;
            cov[(a, b)] = c;
            cov[(b, a)] = c;
        }
    }
    let mut jumps = Vec::new();
    program.ops.iter().for_each(|op| kinks(op, &mut jumps));
    if jumps.is_empty() {
        let eig = cov.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..m)
            .filter(|&k| eig.eigenvalues[k] > 1e-13 * lmax && eig.eigenvalues[k] > 0.0)
            .collect();
        let mut loading = DMatrix::zeros(m, keep.len());
        for (col, &k) in keep.iter().enumerate() {
            let s = eig.eigenvalues[k].sqrt();
            for a in 0..m {
                loading[(a, col)] = eig.eigenvectors[(a, k)] * s;
            }
        }
        let breaks = vec![Vec::new(); keep.len()];
        return Ok((loading, breaks));
    }

    let mut order: Vec<usize> = Vec::with_capacity(m);
    for &(f, _) in &jumps {
        if !order.contains(&f) {
            order.push(f);
        }
    }
    order.extend((0..m).filter(|a| !jumps.iter().any(|(f, _)| f == a)));
    let dmax = (0..m).map(|a| cov[(a, a)]).fold(0.0, f64::max);
    // Rows of L in pivot order, columns appended as new directions appear.
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut pivots: Vec<usize> = Vec::new();
    for &a in &order {
        let mut row = Vec::with_capacity(pivots.len() + 1);
        for (k, &p) in pivots.iter().enumerate() {
            let dot: f64 = (0..k).map(|j| row[j] * rows[p][j]).sum();
            row.push((cov[(a, p)] - dot) / rows[p][k]);
        }
        let resid = cov[(a, a)] - row.iter().map(|v| v * v).sum::<f64>();
        if resid > 1e-13 * dmax {
            row.push(resid.sqrt());
            pivots.push(a);
        }
        rows[a] = row;
    }
    let rank = pivots.len();
    let mut loading = DMatrix::zeros(m, rank);
    for (a, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            loading[(a, k)] = *v;
        }
    }
    let mut breaks = vec![Vec::new(); rank];
    for &(f, level) in &jumps {
        let row = &rows[f];
        let Some(k) = row.iter().rposition(|v| v.abs() > 0.0) else { continue };
        let scale = row[k].abs();
        if row[..k].iter().all(|v| v.abs() <= 1e-12 * scale) {
            breaks[k].push(level / row[k]);
        }
    }
    Ok((loading, breaks))
}

/// Weighted samples of several expressions on a common node set.
#[derive(Debug, Clone)]
pub struct SampleTable {
    log_weights: Vec<f64>,
    columns: Vec<Vec<f64>>,
    monte_carlo: bool,
}

impl SampleTable {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn is_monte_carlo(&self) -> bool {
        self.monte_carlo
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column_range(&self, j: usize) -> (f64, f64) {
        self.columns[j]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Shifted moments of `X` under weights `wᵢ e^{Wᵢ}`.
    pub fn moments(
        &self,
        value: impl Fn(usize) -> f64 + Sync,
        log_tilt: impl Fn(usize) -> f64 + Sync,
    ) -> Result<TiltedMoments> {
        let n = self.len();
        let chunks: Vec<Result<TiltedMoments>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = TiltedMoments::empty();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let x = value(i);
                    let w = log_tilt(i);
                    if !x.is_finite() || w.is_nan() || w == f64::INFINITY {
                        return Err(PricerError::overflow(
                            format!("sample {i} (value {x}, log-tilt {w})"),
                            "evaluate exponentials through log_expect_exp or reduce the exponent scale",
                        ));
                    }
                    acc.push(x, self.log_weights[i] + w);
                }
                Ok(acc)
            })
            .collect();
        let mut total = TiltedMoments::empty();
        for c in chunks {
            total.merge(&c?);
        }
        Ok(total)
    }

    pub fn mean(&self, j: usize) -> Result<f64> {
        Ok(self.moments(|i| self.columns[j][i], |_| 0.0)?.mean())
    }

    /// `log E[e^{f}]` for a per-sample exponent.
    pub fn log_mean_exp(&self, exponent: impl Fn(usize) -> f64 + Sync) -> Result<f64> {
        Ok(self.moments(|_| 1.0, exponent)?.log_normaliser())
    }

    /// `E[X e^W] / E[e^W]` for per-sample `X` and `W`.
    pub fn tilted_mean(
        &self,
        value: impl Fn(usize) -> f64 + Sync,
        log_tilt: impl Fn(usize) -> f64 + Sync,
    ) -> Result<f64> {
        Ok(self.moments(value, log_tilt)?.mean())
    }
}

/// Streaming sums `Σ Xᵏ e^{ℓᵢ - shift}` (k = 0, 1, 2) and the squared-weight
/// analogues used for Monte-Carlo error bars.
#[derive(Debug, Clone, Copy)]
pub struct TiltedMoments {
    shift: f64,
    s0: f64,
    s1: f64,
    s2: f64,
    q0: f64,
    q1: f64,
    q2: f64,
}

impl TiltedMoments {
    fn empty() -> Self {
        TiltedMoments {
            shift: f64::NEG_INFINITY,
            s0: 0.0,
            s1: 0.0,
            s2: 0.0,
            q0: 0.0,
            q1: 0.0,
            q2: 0.0,
        }
    }

    fn rescale(&mut self, shift: f64) {
        if shift == self.shift {
            return;
        }
        let r = if self.shift == f64::NEG_INFINITY {
            0.0
        } else {
            (self.shift - shift).exp()
        };
        let r2 = r * r;
        self.s0 *= r;
        self.s1 *= r;
        self.s2 *= r;
        self.q0 *= r2;
        self.q1 *= r2;
        self.q2 *= r2;
        self.shift = shift;
    }

    fn push(&mut self, x: f64, log_weight: f64) {
        if log_weight == f64::NEG_INFINITY {
            return;
        }
        if log_weight > self.shift {
            self.rescale(log_weight);
        }
        let u = (log_weight - self.shift).exp();
        let u2 = u * u;
        self.s0 += u;
        self.s1 += u * x;
        self.s2 += u * x * x;
        self.q0 += u2;
        self.q1 += u2 * x;
        self.q2 += u2 * x * x;
    }

    fn merge(&mut self, other: &TiltedMoments) {
        if other.shift == f64::NEG_INFINITY {
            return;
        }
        let mut o = *other;
        if o.shift > self.shift {
            self.rescale(o.shift);
        } else {
            o.rescale(self.shift);
        }
        self.s0 += o.s0;
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.q0 += o.q0;
        self.q1 += o.q1;
        self.q2 += o.q2;
    }

    /// Weighted mean of `X`.
    pub fn mean(&self) -> f64 {
        self.s1 / self.s0
    }

    /// Weighted variance of `X`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.s2 / self.s0 - m * m).max(0.0)
    }

    /// `log Σ wᵢ e^{Wᵢ}`.
    pub fn log_normaliser(&self) -> f64 {
        self.shift + self.s0.ln()
    }

    /// Delta-method standard error of the self-normalised mean.
    pub fn mean_std_error(&self) -> f64 {
        let m = self.mean();
        ((self.q2 - 2.0 * m * self.q1 + m * m * self.q0).max(0.0)).sqrt() / self.s0
    }

    fn log_normaliser_std_error(&self, n: usize) -> f64 {
        ((self.q0 - self.s0 * self.s0 / n as f64).max(0.0)).sqrt() / self.s0
    }
}
