//! Claim-level prices for an investor trading through one market maker.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{PricerError, Result};
use crate::maker::{InvestorSpec, MakerSpec};
use crate::models::BachelierSpec;
use crate::payoff::{ExpectationEngine, PayoffExpr, SampleTable, StepFunction};
use crate::roots::{solve_decreasing, RootConfig};

/// Relative width of the inclusive band around interval endpoints.
pub const CLASSIFY_TOL: f64 = 1e-9;

/// Maker, investor and claim `h` sharing one expectation engine.
#[derive(Debug, Clone)]
pub struct ClaimSetup {
    maker: MakerSpec,
    investor: InvestorSpec,
    claim: PayoffExpr,
    engine: ExpectationEngine,
    beta: f64,
    // Columns: Σ₀, Σ₁, h.
    table: OnceLock<SampleTable>,
}

impl ClaimSetup {
    pub fn new(maker: MakerSpec, investor: InvestorSpec, claim: PayoffExpr, engine: ExpectationEngine) -> Result<Self> {
        engine.validate()?;
        PayoffExpr::try_sum(&[maker.endowment().clone(), investor.endowment().clone(), claim.clone()])?;
        let (a, g) = (investor.alpha(), maker.gamma());
        Ok(ClaimSetup {
            maker,
            investor,
            claim,
            engine,
            beta: a * g / (a + g),
            table: OnceLock::new(),
        })
    }

    pub fn maker(&self) -> &MakerSpec {
        &self.maker
    }

    pub fn investor(&self) -> &InvestorSpec {
        &self.investor
    }

    pub fn claim(&self) -> &PayoffExpr {
        &self.claim
    }

    pub fn engine(&self) -> &ExpectationEngine {
        &self.engine
    }

    /// `β = αγ/(α+γ)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.maker.gamma()
    }

    pub fn alpha(&self) -> f64 {
        self.investor.alpha()
    }

    /// Same maker and claim, investor endowment replaced.
    pub fn with_investor_endowment(&self, endowment: PayoffExpr) -> Result<Self> {
        Self::new(
            self.maker.clone(),
            InvestorSpec::new(self.alpha(), endowment)?,
            self.claim.clone(),
            self.engine.clone(),
        )
    }

    pub fn table(&self) -> Result<&SampleTable> {
        if let Some(t) = self.table.get() {
            return Ok(t);
        }
        let t = self
            .engine
            .tabulate(&[self.maker.endowment(), self.investor.endowment(), &self.claim])?;
        Ok(self.table.get_or_init(|| t))
    }

    /// Finiteness of `E[e^{−γΣ₀ + p(|Ψ|+|h|)}]` and `E[e^{−αΣ₁ + p|h|}]` at each level `p`.
    pub fn check_integrability(&self, levels: &[f64]) -> Result<()> {
        let mut abs_terms: Vec<PayoffExpr> = self.maker.assets().iter().map(|a| a.abs()).collect();
        abs_terms.push(self.claim.abs());
        let abs_sum = PayoffExpr::try_sum(&abs_terms)?;
        let h_abs = self.claim.abs();
        for &p in levels {
            let a = PayoffExpr::linear_combination(&[(-self.gamma(), self.maker.endowment()), (p, &abs_sum)])?;
            let b = PayoffExpr::linear_combination(&[(-self.alpha(), self.investor.endowment()), (p, &h_abs)])?;
            for (x, what) in [(a, "E[exp(-γΣ₀ + p(|Ψ|+|h|))]"), (b, "E[exp(-αΣ₁ + p|h|)]")] {
                if !self.engine.log_expect_exp(&x)?.is_finite() {
                    return Err(PricerError::overflow(format!("{what} at p = {p}"), "the claim is not exponentially integrable"));
                }
            }
        }
        Ok(())
    }

    fn s0(&self, t: &SampleTable, i: usize) -> f64 {
        t.column(0)[i]
    }

    fn s_total(&self, t: &SampleTable, i: usize) -> f64 {
        t.column(0)[i] + t.column(1)[i]
    }

    fn h(&self, t: &SampleTable, i: usize) -> f64 {
        t.column(2)[i]
    }

    fn log_with_hint(&self, f: impl Fn(&SampleTable, usize) -> f64 + Sync, hint: &str) -> Result<f64> {
        let t = self.table()?;
        let v = t.log_mean_exp(|i| f(t, i)).map_err(|e| match e {
            PricerError::Overflow { context, .. } => PricerError::overflow(context, hint),
            other => other,
        })?;
        if !v.is_finite() {
            return Err(PricerError::overflow("log-moment", hint));
        }
        Ok(v)
    }

    /// `log E[e^{−γΣ₀}]`.
    fn log_z0(&self) -> Result<f64> {
        let g = self.gamma();
        self.log_with_hint(|t, i| -g * self.s0(t, i), "reduce γ")
    }

    /// `log E[e^{−β(Σ₀+Σ₁)}]`.
    fn log_zs(&self) -> Result<f64> {
        let b = self.beta;
        self.log_with_hint(|t, i| -b * self.s_total(t, i), "reduce β")
    }
}

/// `E₀[h] = E[h e^{−γΣ₀}] / E[e^{−γΣ₀}]`.
pub fn q0_price(setup: &ClaimSetup) -> Result<f64> {
    let t = setup.table()?;
    let g = setup.gamma();
    t.tilted_mean(|i| setup.h(t, i), |i| -g * setup.s0(t, i))
}

fn check_level(u: f64) -> Result<()> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(PricerError::invalid(format!("position size must be a finite u ≥ 0, got {u}")));
    }
    Ok(())
}

/// Seller's replication capital per unit `h̄(u) = (1/γu) log E₀[e^{γuh}]`.
pub fn upper_bound(setup: &ClaimSetup, u: f64) -> Result<f64> {
    check_level(u)?;
    if u == 0.0 {
        return q0_price(setup);
    }
    let g = setup.gamma();
    let l = setup.log_with_hint(|t, i| g * u * setup.h(t, i) - g * setup.s0(t, i), "reduce u")?;
    Ok((l - setup.log_z0()?) / (g * u))
}

/// Buyer's replication value per unit `h̲(u) = −(1/γu) log E₀[e^{−γuh}]`.
pub fn lower_bound(setup: &ClaimSetup, u: f64) -> Result<f64> {
    check_level(u)?;
    if u == 0.0 {
        return q0_price(setup);
    }
    let g = setup.gamma();
    let l = setup.log_with_hint(|t, i| -g * u * setup.h(t, i) - g * setup.s0(t, i), "reduce u")?;
    Ok(-(l - setup.log_z0()?) / (g * u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceBounds {
    pub u: f64,
    pub lower: f64,
    pub upper: f64,
    pub q0_price: f64,
}

pub fn price_bounds(setup: &ClaimSetup, u: f64) -> Result<PriceBounds> {
    Ok(PriceBounds {
        u,
        lower: lower_bound(setup, u)?,
        upper: upper_bound(setup, u)?,
        q0_price: q0_price(setup)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriceClass {
    ArbitrageFree,
    /// `p > h̄(u)`: sell `u` units and replicate.
    SellArbitrage,
    /// `p < h̲(u)`: buy `u` units and hedge.
    BuyArbitrage,
}

impl PriceClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PriceClass::ArbitrageFree => "arbitrage_free",
            PriceClass::SellArbitrage => "sell_arbitrage",
            PriceClass::BuyArbitrage => "buy_arbitrage",
        }
    }
}

impl std::fmt::Display for PriceClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Location of `p` relative to the closed interval `[lower, upper]`.
pub fn classify_against(bounds: &PriceBounds, p: f64) -> PriceClass {
    let tol = CLASSIFY_TOL * (1.0 + p.abs());
    if p > bounds.upper + tol {
        PriceClass::SellArbitrage
    } else if p < bounds.lower - tol {
        PriceClass::BuyArbitrage
    } else {
        PriceClass::ArbitrageFree
    }
}

pub fn classify_price(setup: &ClaimSetup, p: f64, u: f64) -> Result<PriceClass> {
    Ok(classify_against(&price_bounds(setup, u)?, p))
}

/// Arbitrage-free at every level: `p = E₀[h]` up to the classification tolerance.
pub fn strong_classify(setup: &ClaimSetup, p: f64) -> Result<bool> {
    Ok((p - q0_price(setup)?).abs() <= CLASSIFY_TOL * (1.0 + p.abs()))
}

/// `E[h e^{−β(Σ₀+Σ₁+uh)}] / E[e^{−β(Σ₀+Σ₁+uh)}]`, strictly decreasing in `u`.
pub fn tilted_mean(setup: &ClaimSetup, u: f64) -> Result<f64> {
    let t = setup.table()?;
    let b = setup.beta;
    t.tilted_mean(|i| setup.h(t, i), |i| -b * (setup.s_total(t, i) + u * setup.h(t, i)))
}

/// Essential range of `h`.
pub fn claim_range(setup: &ClaimSetup) -> Result<(f64, f64)> {
    setup.engine.support_range(&setup.claim)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandPoint {
    pub p: f64,
    pub u_hat: f64,
    /// `tilted_mean(u_hat) − p`.
    pub residual: f64,
}

/// Optimal demand `û(p)`: root of `tilted_mean(u) = p`.
pub fn demand(setup: &ClaimSetup, p: f64) -> Result<DemandPoint> {
    if !p.is_finite() {
        return Err(PricerError::invalid("price must be finite"));
    }
    let (lo, hi) = claim_range(setup)?;
    if !(lo < p && p < hi) {
        return Err(PricerError::NoFiniteDemand {
            price: p,
            lower: lo,
            upper: hi,
        });
    }
    let root = solve_decreasing(|u| Ok(tilted_mean(setup, u)? - p), 0.0, &RootConfig::default())?;
    Ok(DemandPoint {
        p,
        u_hat: root.x,
        residual: root.residual,
    })
}

/// Demand schedule over a price grid, evaluated in parallel.
pub fn demand_schedule(setup: &ClaimSetup, prices: &[f64]) -> Result<Vec<Result<DemandPoint>>> {
    setup.table()?;
    Ok(prices.par_iter().map(|&p| demand(setup, p)).collect())
}

/// `p^I(u) = −(1/βu) log(E[e^{−β(Σ₀+Σ₁+uh)}] / E[e^{−β(Σ₀+Σ₁)}])`; `u = 0` gives the tilted mean.
pub fn indifference_price(setup: &ClaimSetup, u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(PricerError::invalid("position size must be finite"));
    }
    if u == 0.0 {
        return tilted_mean(setup, 0.0);
    }
    let b = setup.beta;
    let l = setup.log_with_hint(|t, i| -b * (setup.s_total(t, i) + u * setup.h(t, i)), "reduce |u|")?;
    Ok(-(l - setup.log_zs()?) / (b * u))
}

/// `−E[e^{−γΣ₀}]^{−α/γ} · E[e^{−β(Σ₀+Σ₁)}]^{α/β}`.
pub fn value_function(setup: &ClaimSetup) -> Result<f64> {
    value_function_with_claim(setup, 0.0)
}

/// Value function with `u·h` added to the investor's endowment.
pub fn value_function_with_claim(setup: &ClaimSetup, u: f64) -> Result<f64> {
    let (a, g, b) = (setup.alpha(), setup.gamma(), setup.beta);
    let ls = if u == 0.0 {
        setup.log_zs()?
    } else {
        setup.log_with_hint(|t, i| -b * (setup.s_total(t, i) + u * setup.h(t, i)), "reduce |u|")?
    };
    let exponent = -(a / g) * setup.log_z0()? + (a / b) * ls;
    let v = -exponent.exp();
    if !v.is_finite() {
        return Err(PricerError::overflow("value function", "the certainty equivalent exceeds the f64 range"));
    }
    Ok(v)
}

/// Log of the magnitude of [`value_function_with_claim`], finite far beyond the f64 range of the value itself.
pub fn log_neg_value_function(setup: &ClaimSetup, u: f64) -> Result<f64> {
    let (a, g, b) = (setup.alpha(), setup.gamma(), setup.beta);
    let ls = setup.log_with_hint(|t, i| -b * (setup.s_total(t, i) + u * setup.h(t, i)), "reduce |u|")?;
    Ok(-(a / g) * setup.log_z0()? + (a / b) * ls)
}

/// `Q̂ = (αg − γf)ψ⁻¹/(α+γ)` on the common grid of `f`, `g` and `ψ`.
pub fn bachelier_optimal_strategy(spec: &BachelierSpec, gamma: f64, alpha: f64) -> Result<StepFunction> {
    if !(gamma > 0.0 && alpha > 0.0) {
        return Err(PricerError::invalid("risk aversions must be positive"));
    }
    let grid = spec.psi().grid().merge(spec.f().grid())?.merge(spec.g().grid())?;
    let rhs = StepFunction::linear_combination(&[(alpha, spec.g()), (-gamma, spec.f())])?.refine(&grid);
    rhs.map_blocks(spec.dim(), |i, v| {
        let mid = 0.5 * (grid.nodes()[i] + grid.nodes()[i + 1]);
        Ok(spec.psi_solve(mid, v).into_iter().map(|x| x / (alpha + gamma)).collect())
    })
}

/// Closed-form prices in the Bachelier market with claim `h = ∫y'dB`.
#[derive(Debug, Clone)]
pub struct BachelierClaim<'a> {
    pub spec: &'a BachelierSpec,
    pub gamma: f64,
    pub alpha: f64,
}

impl BachelierClaim<'_> {
    pub fn beta(&self) -> f64 {
        self.alpha * self.gamma / (self.alpha + self.gamma)
    }

    fn y(&self) -> Result<&StepFunction> {
        self.spec.claim_integrand()
    }

    fn yf_g(&self) -> Result<f64> {
        let fg = StepFunction::linear_combination(&[(1.0, self.spec.f()), (1.0, self.spec.g())])?;
        self.y()?.inner(&fg)
    }

    /// `−γ∫y'f`.
    pub fn q0_price(&self) -> Result<f64> {
        Ok(-self.gamma * self.y()?.inner(self.spec.f())?)
    }

    /// `E₀[h] + (γu/2)∫|y|²`.
    pub fn upper_bound(&self, u: f64) -> Result<f64> {
        Ok(self.q0_price()? + 0.5 * self.gamma * u * self.y()?.norm_sq())
    }

    pub fn lower_bound(&self, u: f64) -> Result<f64> {
        Ok(self.q0_price()? - 0.5 * self.gamma * u * self.y()?.norm_sq())
    }

    /// `û(p) = −(p + β∫y'(f+g)) / (β∫|y|²)`.
    pub fn demand(&self, p: f64) -> Result<f64> {
        let b = self.beta();
        Ok(-(p + b * self.yf_g()?) / (b * self.y()?.norm_sq()))
    }

    /// `p^I(u) = −(β/2)∫(uy + 2(f+g))'y`.
    pub fn indifference_price(&self, u: f64) -> Result<f64> {
        let b = self.beta();
        Ok(-0.5 * b * (u * self.y()?.norm_sq() + 2.0 * self.yf_g()?))
    }

    /// `∫|γf + γûy − αg|²`; zero means the optimal strategy is an exact arbitrage.
    pub fn pathology_residual(&self, u_hat: f64) -> Result<f64> {
        let v = StepFunction::linear_combination(&[
            (self.gamma, self.spec.f()),
            (self.gamma * u_hat, self.y()?),
            (-self.alpha, self.spec.g()),
        ])?;
        Ok(v.norm_sq())
    }

    pub fn is_pathological(&self, u_hat: f64, tol: f64) -> Result<bool> {
        Ok(self.pathology_residual(u_hat)? <= tol)
    }
}
