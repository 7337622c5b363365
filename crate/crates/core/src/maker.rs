//! Representative exponential market maker.
//!
//! The maker quotes the cash balance `X(q)` that keeps her expected utility
//! unchanged after absorbing `q'Ψ`. In continuous time the investor's gains
//! from an order flow `Q` are driven by the maker's `H(q)` integrands.

use std::sync::Arc;

use crate::error::{PricerError, Result};
use crate::payoff::{sample_paths, ExpectationEngine, PathBatch, PayoffExpr, StepFunction, TimeGrid};

#[derive(Debug, Clone)]
pub struct MakerSpec {
    gamma: f64,
    endowment: PayoffExpr,
    assets: Vec<PayoffExpr>,
}

impl MakerSpec {
    pub fn new(gamma: f64, endowment: PayoffExpr, assets: Vec<PayoffExpr>) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(PricerError::invalid(format!("maker risk aversion must be positive, got {gamma}")));
        }
        if assets.is_empty() {
            return Err(PricerError::invalid("the maker needs at least one traded asset"));
        }
        let mut all = vec![endowment.clone()];
        all.extend(assets.iter().cloned());
        PayoffExpr::try_sum(&all)?;
        Ok(MakerSpec {
            gamma,
            endowment,
            assets,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn endowment(&self) -> &PayoffExpr {
        &self.endowment
    }

    pub fn assets(&self) -> &[PayoffExpr] {
        &self.assets
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Same preferences and assets, different endowment.
    pub fn with_endowment(&self, endowment: PayoffExpr) -> Result<Self> {
        Self::new(self.gamma, endowment, self.assets.clone())
    }

    fn portfolio(&self, q: &[f64]) -> Result<PayoffExpr> {
        if q.len() != self.assets.len() {
            return Err(PricerError::Dimension(format!(
                "order has {} components for {} assets",
                q.len(),
                self.assets.len()
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(PricerError::invalid("order components must be finite"));
        }
        let terms: Vec<(f64, &PayoffExpr)> = q.iter().copied().zip(self.assets.iter()).collect();
        PayoffExpr::linear_combination(&terms)
    }

    /// Empirical check that `E[e^{-γΣ₀ + q|Ψ|}]` is finite at each level `q`.
    pub fn check_integrability(&self, engine: &ExpectationEngine, levels: &[f64]) -> Result<()> {
        let abs_sum = PayoffExpr::try_sum(&self.assets.iter().map(|a| a.abs()).collect::<Vec<_>>())?;
        for &q in levels {
            let x = PayoffExpr::linear_combination(&[(-self.gamma, &self.endowment), (q, &abs_sum)])?;
            let l = engine.log_expect_exp(&x)?;
            if !l.is_finite() {
                return Err(PricerError::overflow(
                    format!("E[exp(-γΣ₀ + {q}|Ψ|)]"),
                    "the maker endowment/asset pair is not exponentially integrable",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InvestorSpec {
    alpha: f64,
    endowment: PayoffExpr,
}

impl InvestorSpec {
    pub fn new(alpha: f64, endowment: PayoffExpr) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PricerError::invalid(format!("investor risk aversion must be positive, got {alpha}")));
        }
        Ok(InvestorSpec { alpha, endowment })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn endowment(&self) -> &PayoffExpr {
        &self.endowment
    }
}

fn overflow_hint(e: PricerError) -> PricerError {
    match e {
        PricerError::Overflow { context, .. } => PricerError::Overflow {
            context,
            hint: "reduce |q| or γ".into(),
        },
        other => other,
    }
}

/// Seller's indifference price for `-q` units of `Ψ`:
/// `X(q) = (1/γ)[log E e^{-γΣ₀-γq'Ψ} − log E e^{-γΣ₀}]`.
pub fn static_quote(maker: &MakerSpec, engine: &ExpectationEngine, q: &[f64]) -> Result<f64> {
    let pos = maker.portfolio(q)?;
    if q.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let g = maker.gamma;
    let base = maker.endowment.scale(-g);
    let shifted = PayoffExpr::linear_combination(&[(-g, &maker.endowment), (-g, &pos)])?;
    let t = engine.tabulate(&[&base, &shifted]).map_err(overflow_hint)?;
    let l1 = t.log_mean_exp(|i| t.column(1)[i]).map_err(overflow_hint)?;
    let l0 = t.log_mean_exp(|i| t.column(0)[i]).map_err(overflow_hint)?;
    let x = (l1 - l0) / g;
    if !x.is_finite() {
        return Err(PricerError::overflow("static quote", "reduce |q| or γ"));
    }
    Ok(x)
}

/// `log E[e^{-γ(Σ₀+X+q'Ψ)}] − log E[e^{-γΣ₀}]`; zero when `X` is the indifference quote.
pub fn quote_indifference_defect(maker: &MakerSpec, engine: &ExpectationEngine, q: &[f64], cash: f64) -> Result<f64> {
    let pos = maker.portfolio(q)?;
    let g = maker.gamma;
    let after = PayoffExpr::linear_combination(&[(-g, &maker.endowment), (-g, &pos), (-g, &PayoffExpr::constant(cash))])?;
    Ok(engine.log_expect_exp(&after)? - engine.log_expect_exp(&maker.endowment.scale(-g))?)
}

/// Expectation under the maker's pricing measure, `dQ₀/dP ∝ e^{-γΣ₀}`.
pub fn q0_expect(maker: &MakerSpec, engine: &ExpectationEngine, expr: &PayoffExpr) -> Result<f64> {
    engine.tilted_expect(expr, &maker.endowment.scale(-maker.gamma))
}

/// Martingale-representation integrand `H_t(q)` of the maker's
/// `E[e^{-γΣ₀-γq'Ψ} | F_t]`, evaluated on the state `B_t`.
pub trait HProvider: Sync {
    /// Brownian dimension `d`.
    fn dim(&self) -> usize;
    /// Number of traded assets `k`.
    fn n_assets(&self) -> usize;
    fn h(&self, t: f64, state: &[f64], q: &[f64]) -> Vec<f64>;

    fn h_zero(&self, t: f64, state: &[f64]) -> Vec<f64> {
        self.h(t, state, &vec![0.0; self.n_assets()])
    }
}

pub type FeedbackFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Grid-adapted order flow: the value at `t_k` depends only on `(t_k, B_{t_k})`.
#[derive(Clone)]
pub enum DemandRule {
    Constant(Vec<f64>),
    /// Deterministic schedule, a `k`-vector step function.
    Schedule(StepFunction),
    /// State feedback `Q_t = rule(t, B_t)`.
    Feedback(FeedbackFn),
}

impl std::fmt::Debug for DemandRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DemandRule::Constant(q) => f.debug_tuple("Constant").field(q).finish(),
            DemandRule::Schedule(s) => f.debug_tuple("Schedule").field(s).finish(),
            DemandRule::Feedback(_) => f.write_str("Feedback(..)"),
        }
    }
}

impl DemandRule {
    pub fn at(&self, t: f64, state: &[f64]) -> Vec<f64> {
        match self {
            DemandRule::Constant(q) => q.clone(),
            DemandRule::Schedule(s) => s.value_at(t).to_vec(),
            DemandRule::Feedback(f) => f(t, state),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DemandRule::Constant(q) => q.iter().all(|&x| x == 0.0),
            DemandRule::Schedule(s) => s.norm_sq() == 0.0 && (0..s.grid().n_steps()).all(|i| s.block(i).iter().all(|&x| x == 0.0)),
            DemandRule::Feedback(_) => false,
        }
    }
}

/// Gains trajectories `V_{t_k}(Q)` for every path.
#[derive(Debug, Clone)]
pub struct GainsPaths {
    pub grid: TimeGrid,
    /// `values[p][k] = V_{t_k}` on path `p`.
    pub values: Vec<Vec<f64>>,
    pub flagged: Vec<bool>,
}

impl GainsPaths {
    pub fn terminal(&self, path: usize) -> f64 {
        *self.values[path].last().expect("trajectory has nodes")
    }

    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

fn check_provider(maker: &MakerSpec, h: &dyn HProvider, batch: &PathBatch) -> Result<()> {
    if h.dim() != batch.dim() {
        return Err(PricerError::Dimension(format!("H has dimension {} but paths have {}", h.dim(), batch.dim())));
    }
    if h.n_assets() != maker.n_assets() {
        return Err(PricerError::Dimension(format!(
            "H takes {} asset positions, maker trades {}",
            h.n_assets(),
            maker.n_assets()
        )));
    }
    Ok(())
}

/// One Euler step of the gains process, with `H` evaluated at the left endpoint.
struct StepTerms {
    pi: Vec<f64>,
    h0: Vec<f64>,
}

fn step_terms(h: &dyn HProvider, rule: &DemandRule, t: f64, state: &[f64]) -> Option<StepTerms> {
    let q = rule.at(t, state);
    let hq = h.h(t, state, &q);
    let h0 = h.h_zero(t, state);
    let pi: Vec<f64> = hq.iter().zip(&h0).map(|(a, b)| a - b).collect();
    if pi.iter().chain(&h0).all(|x| x.is_finite()) {
        Some(StepTerms { pi, h0 })
    } else {
        None
    }
}

fn abort_if_flagged(flagged: &[bool]) -> Result<()> {
    let n = flagged.iter().filter(|&&f| f).count();
    if n as f64 > 1e-3 * flagged.len() as f64 {
        return Err(PricerError::FlaggedPaths {
            flagged: n,
            paths: flagged.len(),
        });
    }
    Ok(())
}

/// Explicit Euler scheme for
/// `dV = (1/γ)(H(Q)−H(0))'(dB − H(0)dt) − (1/2γ)|H(Q)−H(0)|²dt`, `V₀ = 0`.
pub fn simulate_gains_on(maker: &MakerSpec, h: &dyn HProvider, batch: &PathBatch, rule: &DemandRule) -> Result<GainsPaths> {
    check_provider(maker, h, batch)?;
    let grid = batch.grid();
    let n = grid.n_steps();
    let g = maker.gamma();
    let mut values = Vec::with_capacity(batch.paths());
    let mut flagged = vec![false; batch.paths()];
    for p in 0..batch.paths() {
        let pos = batch.positions(p);
        let mut v = Vec::with_capacity(n + 1);
        v.push(0.0);
        let mut cur = 0.0;
        for k in 0..n {
            let t = grid.nodes()[k];
            let dt = grid.dt(k);
            let db = batch.increment(p, k);
            match step_terms(h, rule, t, &pos[k]) {
                Some(StepTerms { pi, h0 }) => {
                    let drift: f64 = pi.iter().zip(db).zip(&h0).map(|((a, b), c)| a * (b - c * dt)).sum();
                    let sq: f64 = pi.iter().map(|a| a * a).sum();
                    cur += (drift - 0.5 * sq * dt) / g;
                }
                None => {
                    flagged[p] = true;
                    cur = f64::NAN;
                }
            }
            v.push(cur);
        }
        values.push(v);
    }
    abort_if_flagged(&flagged)?;
    Ok(GainsPaths {
        grid: grid.clone(),
        values,
        flagged,
    })
}

pub fn simulate_gains(
    maker: &MakerSpec,
    h: &dyn HProvider,
    grid: &TimeGrid,
    rule: &DemandRule,
    paths: usize,
    seed: u64,
) -> Result<GainsPaths> {
    let batch = sample_paths(grid, h.dim(), paths, seed)?;
    simulate_gains_on(maker, h, &batch, rule)
}

/// Fictitious-market wealth `X(π)` for `π = H(Q) − H(0)`, `λ = −H(0)`, `X₀ = 1`,
/// integrated with the Milstein scheme on `dX/X = π'(λdt + dB)`.
pub fn fictitious_wealth_on(h: &dyn HProvider, batch: &PathBatch, rule: &DemandRule) -> Result<Vec<Vec<f64>>> {
    let grid = batch.grid();
    let n = grid.n_steps();
    let mut out = Vec::with_capacity(batch.paths());
    for p in 0..batch.paths() {
        let pos = batch.positions(p);
        let mut x = vec![1.0];
        let mut cur = 1.0f64;
        for k in 0..n {
            let t = grid.nodes()[k];
            let dt = grid.dt(k);
            let db = batch.increment(p, k);
            let Some(StepTerms { pi, h0 }) = step_terms(h, rule, t, &pos[k]) else {
                cur = f64::NAN;
                x.push(cur);
                continue;
            };
            let pi_db: f64 = pi.iter().zip(db).map(|(a, b)| a * b).sum();
            let pi_lambda: f64 = -pi.iter().zip(&h0).map(|(a, b)| a * b).sum::<f64>();
            let sq: f64 = pi.iter().map(|a| a * a).sum();
            cur *= 1.0 + pi_lambda * dt + pi_db + 0.5 * (pi_db * pi_db - sq * dt);
            x.push(cur);
        }
        out.push(x);
    }
    Ok(out)
}

/// Maximum over paths and grid times of `|V_t(Q) − (1/γ) log X_t(π)|` on shared increments.
pub fn wealth_identity_on(maker: &MakerSpec, h: &dyn HProvider, batch: &PathBatch, rule: &DemandRule) -> Result<f64> {
    let gains = simulate_gains_on(maker, h, batch, rule)?;
    if rule.is_zero() {
        return Ok(0.0);
    }
    let wealth = fictitious_wealth_on(h, batch, rule)?;
    let g = maker.gamma();
    let mut worst = 0.0f64;
    let mut flagged = gains.flagged.clone();
    for (p, (v, x)) in gains.values.iter().zip(&wealth).enumerate() {
        if flagged[p] {
            continue;
        }
        for (vt, xt) in v.iter().zip(x) {
            if !(*xt > 0.0) {
                flagged[p] = true;
                break;
            }
            worst = worst.max((vt - xt.ln() / g).abs());
        }
    }
    abort_if_flagged(&flagged)?;
    Ok(worst)
}

pub fn wealth_identity_check(
    maker: &MakerSpec,
    h: &dyn HProvider,
    grid: &TimeGrid,
    rule: &DemandRule,
    paths: usize,
    seed: u64,
) -> Result<f64> {
    let batch = sample_paths(grid, h.dim(), paths, seed)?;
    wealth_identity_on(maker, h, &batch, rule)
}

/// Monte-Carlo estimate of `E₀[e^{γV_T(Q)}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetCheck {
    pub estimate: f64,
    pub std_error: f64,
    /// `|estimate − estimate on the half-resolution grid|`, same paths.
    pub dt_bias: f64,
}

impl BudgetCheck {
    /// `estimate ≤ 1 + k·(stderr + Δt-bias)`.
    pub fn holds(&self, k: f64) -> bool {
        self.estimate <= 1.0 + k * (self.std_error + self.dt_bias)
    }
}

fn budget_estimate(maker: &MakerSpec, h: &dyn HProvider, batch: &PathBatch, rule: &DemandRule) -> Result<(f64, f64)> {
    let gains = simulate_gains_on(maker, h, batch, rule)?;
    let sigma0 = batch.evaluate(&[maker.endowment()])?.remove(0);
    let g = maker.gamma();
    // Self-normalised E₀ weights e^{-γΣ₀}, shifted by their maximum.
    let idx: Vec<usize> = (0..batch.paths()).filter(|&p| !gains.flagged[p]).collect();
    let lw: Vec<f64> = idx.iter().map(|&p| -g * sigma0[p]).collect();
    let y: Vec<f64> = idx.iter().map(|&p| g * gains.terminal(p)).collect();
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let my = lw.iter().zip(&y).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|a| (a - m).exp()).collect();
    let sw: f64 = w.iter().sum();
    let z: Vec<f64> = lw.iter().zip(&y).map(|(a, b)| (a + b - my).exp()).collect();
    let sz: f64 = z.iter().sum();
    let scale = (my - m).exp();
    let est = scale * sz / sw;
    // Ratio-estimator standard error: E₀ of (e^{γV} − est)² weighted by w².
    let var: f64 = w
        .iter()
        .zip(&z)
        .map(|(wi, zi)| {
            let r = scale * zi / wi - est;
            (wi * r).powi(2)
        })
        .sum::<f64>()
        / (sw * sw);
    Ok((est, var.sqrt()))
}

pub fn budget_check_on(maker: &MakerSpec, h: &dyn HProvider, batch: &PathBatch, rule: &DemandRule) -> Result<BudgetCheck> {
    let (estimate, std_error) = budget_estimate(maker, h, batch, rule)?;
    let dt_bias = match batch.coarsen() {
        Ok(coarse) => (budget_estimate(maker, h, &coarse, rule)?.0 - estimate).abs(),
        Err(_) => 0.0,
    };
    Ok(BudgetCheck {
        estimate,
        std_error,
        dt_bias,
    })
}
