//! Bilateral price/quantity equilibrium between two investors, each trading
//! with a local market maker, and large-position asymptotics.

use rayon::prelude::*;

use crate::error::{PricerError, Result};
use crate::maker::{InvestorSpec, MakerSpec};
use crate::models::BachelierSpec;
use crate::payoff::{ExpectationEngine, PayoffExpr, StepFunction};
use crate::pricing::{self, ClaimSetup, PriceClass};
use crate::roots::{solve_decreasing, RootConfig};

/// Sample variance below which `β_A S_A − β_B S_B` counts as constant.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Investor A buys `u` units of `h` from investor B.
#[derive(Debug, Clone)]
pub struct SegmentedMarket {
    a: ClaimSetup,
    b: ClaimSetup,
}

impl SegmentedMarket {
    pub fn new(a: ClaimSetup, b: ClaimSetup) -> Result<Self> {
        let (ha, hb) = (a.claim(), b.claim());
        let sa = PayoffExpr::linear_combination(&[(1.0, a.maker().endowment()), (1.0, a.investor().endowment())])?;
        let sb = PayoffExpr::linear_combination(&[(1.0, b.maker().endowment()), (1.0, b.investor().endowment())])?;
        let witness = PayoffExpr::linear_combination(&[(a.beta(), &sa), (-b.beta(), &sb)])?;
        let t = a.engine().tabulate(&[ha, hb, &witness])?;
        let scale = t.column(0).iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if t.column(0).iter().zip(t.column(1)).any(|(x, y)| (x - y).abs() > 1e-12 * scale) {
            return Err(PricerError::invalid("both sides must trade the same claim h"));
        }
        let var = t.moments(|i| t.column(2)[i], |_| 0.0)?.variance();
        if !(var > DEGENERACY_TOL) {
            return Err(PricerError::Degenerate(format!(
                "β_A(Σ₀ᴬ+Σ₁ᴬ) − β_B(Σ₀ᴮ+Σ₁ᴮ) is constant (sample variance {var:e}); the equilibrium is not unique"
            )));
        }
        Ok(SegmentedMarket { a, b })
    }

    pub fn side_a(&self) -> &ClaimSetup {
        &self.a
    }

    pub fn side_b(&self) -> &ClaimSetup {
        &self.b
    }

    /// Same market with the labels A and B exchanged.
    pub fn swapped(&self) -> SegmentedMarket {
        SegmentedMarket {
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PepqResult {
    pub u_star: f64,
    pub p_star: f64,
    /// A's marginal price at `u*` minus `p*`.
    pub residual_a: f64,
    /// B's marginal price at `−u*` minus `p*`.
    pub residual_b: f64,
}

fn marginal_prices(market: &SegmentedMarket, u: f64) -> Result<(f64, f64)> {
    Ok((
        pricing::tilted_mean(&market.a, u)?,
        pricing::tilted_mean(&market.b, -u)?,
    ))
}

/// Quantity where both investors' marginal prices agree; their common value is `p*`.
pub fn solve_pepq(market: &SegmentedMarket) -> Result<PepqResult> {
    let cfg = RootConfig::default();
    let root = solve_decreasing(
        |u| {
            let (ma, mb) = marginal_prices(market, u)?;
            Ok(ma - mb)
        },
        0.0,
        &cfg,
    )?;
    let (ma, mb) = marginal_prices(market, root.x)?;
    let p_star = 0.5 * (ma + mb);
    Ok(PepqResult {
        u_star: root.x,
        p_star,
        residual_a: ma - p_star,
        residual_b: mb - p_star,
    })
}

/// One side of a Bachelier segmented market.
#[derive(Debug, Clone)]
pub struct BachelierSide {
    pub spec: BachelierSpec,
    pub gamma: f64,
    pub alpha: f64,
}

impl BachelierSide {
    pub fn beta(&self) -> f64 {
        self.alpha * self.gamma / (self.alpha + self.gamma)
    }

    fn endowment_sum(&self) -> Result<StepFunction> {
        StepFunction::linear_combination(&[(1.0, self.spec.f()), (1.0, self.spec.g())])
    }

    /// Numeric setup on the same data.
    pub fn setup(&self, engine: ExpectationEngine) -> Result<ClaimSetup> {
        ClaimSetup::new(
            self.spec.maker(self.gamma)?,
            self.spec.investor(self.alpha)?,
            self.spec.claim()?,
            engine,
        )
    }
}

/// Closed-form equilibrium of two Bachelier sides sharing `h = ∫y'dB`:
/// `u* = ∫(β_B(f_B+g_B) − β_A(f_A+g_A))'y / ((β_A+β_B)∫|y|²)` and
/// `p* = −Γ∫(f_A+g_A+f_B+g_B)'y` with `1/Γ = 1/β_A + 1/β_B`.
pub fn bachelier_pepq(a: &BachelierSide, b: &BachelierSide) -> Result<PepqResult> {
    let y = a.spec.claim_integrand()?;
    let yb = b.spec.claim_integrand()?;
    let diff = StepFunction::linear_combination(&[(1.0, y), (-1.0, yb)])?;
    let yy = y.norm_sq();
    if diff.norm_sq() > 1e-24 * yy.max(1.0) {
        return Err(PricerError::invalid("the two sides must share the claim integrand y"));
    }
    if yy == 0.0 {
        return Err(PricerError::Degenerate("∫|y|² = 0".into()));
    }
    let (ba, bb) = (a.beta(), b.beta());
    let ka = y.inner(&a.endowment_sum()?)?;
    let kb = y.inner(&b.endowment_sum()?)?;
    let u_star = (bb * kb - ba * ka) / ((ba + bb) * yy);
    let gamma_agg = 1.0 / (1.0 / ba + 1.0 / bb);
    let p_star = -gamma_agg * (ka + kb);
    // Marginal prices −β(k + uy'y) at (u*, −u*).
    let ma = -ba * (ka + u_star * yy);
    let mb = -bb * (kb - u_star * yy);
    Ok(PepqResult {
        u_star,
        p_star,
        residual_a: ma - p_star,
        residual_b: mb - p_star,
    })
}

/// Arbitrage status of `p*` for one side at level `|u*|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideArbitrage {
    pub class: PriceClass,
    pub lower: f64,
    pub upper: f64,
    /// `|u*|` times the distance from `p*` to the nearest bound (zero inside).
    pub gain: f64,
}

pub fn side_arbitrage(setup: &ClaimSetup, result: &PepqResult) -> Result<SideArbitrage> {
    let u = result.u_star.abs();
    let bounds = pricing::price_bounds(setup, u)?;
    let class = pricing::classify_against(&bounds, result.p_star);
    let gain = match class {
        PriceClass::ArbitrageFree => 0.0,
        PriceClass::SellArbitrage => u * (result.p_star - bounds.upper),
        PriceClass::BuyArbitrage => u * (bounds.lower - result.p_star),
    };
    Ok(SideArbitrage {
        class,
        lower: bounds.lower,
        upper: bounds.upper,
        gain,
    })
}

/// `−(1/ℓ) log(E[e^{−ℓh−W}] / E[e^{−W}])` for an optional fixed tilt `W = γΣ₀`;
/// `ℓ = 0` gives the `W`-tilted mean.
pub fn limit_price(engine: &ExpectationEngine, h: &PayoffExpr, ell: f64, tilt: Option<&PayoffExpr>) -> Result<f64> {
    if !ell.is_finite() {
        return Err(PricerError::invalid("ℓ must be finite"));
    }
    let zero = PayoffExpr::zero();
    let w = tilt.unwrap_or(&zero);
    let t = engine.tabulate(&[h, w])?;
    if ell == 0.0 {
        return t.tilted_mean(|i| t.column(0)[i], |i| -t.column(1)[i]);
    }
    let l = t.log_mean_exp(|i| -ell * t.column(0)[i] - t.column(1)[i])?;
    let l0 = t.log_mean_exp(|i| -t.column(1)[i])?;
    let v = -(l - l0) / ell;
    if !v.is_finite() {
        return Err(PricerError::overflow("limit price", "reduce |ℓ|"));
    }
    Ok(v)
}

/// `E[h e^{−ℓh−W}] / E[e^{−ℓh−W}]`, the derivative of `ℓ ↦ ℓ p^∞(ℓ)`.
pub fn limit_marginal_price(engine: &ExpectationEngine, h: &PayoffExpr, ell: f64, tilt: Option<&PayoffExpr>) -> Result<f64> {
    let zero = PayoffExpr::zero();
    let w = tilt.unwrap_or(&zero);
    let t = engine.tabulate(&[h, w])?;
    t.tilted_mean(|i| t.column(0)[i], |i| -ell * t.column(0)[i] - t.column(1)[i])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DemandRate {
    /// Demand grows like `ℓ·r_n`.
    Rate(f64),
    /// `p = p^∞(0)`: demand stays bounded.
    Bounded,
}

/// Rate `ℓ` solving `p = E[h e^{−ℓh−W}] / E[e^{−ℓh−W}]`.
pub fn demand_rate(engine: &ExpectationEngine, h: &PayoffExpr, p: f64, tilt: Option<&PayoffExpr>) -> Result<DemandRate> {
    let zero = PayoffExpr::zero();
    let w = tilt.unwrap_or(&zero);
    let t = engine.tabulate(&[h, w])?;
    let mean_at = |ell: f64| t.tilted_mean(|i| t.column(0)[i], |i| -ell * t.column(0)[i] - t.column(1)[i]);
    let p0 = mean_at(0.0)?;
    if (p - p0).abs() <= pricing::CLASSIFY_TOL * (1.0 + p.abs()) {
        return Ok(DemandRate::Bounded);
    }
    let (lo, hi) = engine.support_range(h)?;
    if !(lo < p && p < hi) {
        return Err(PricerError::NoFiniteDemand {
            price: p,
            lower: lo,
            upper: hi,
        });
    }
    let root = solve_decreasing(|ell| Ok(mean_at(ell)? - p), 0.0, &RootConfig::default())?;
    Ok(DemandRate::Rate(root.x))
}

/// One point of an asymptotic schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticPoint {
    pub n: u32,
    /// `β_n`, `γ_n` or the maker count driving the schedule.
    pub param: f64,
    /// Raw quantity (`u*_n` or `û_n`).
    pub quantity: f64,
    /// `p*_n`, or the traded price for demand schedules.
    pub price: f64,
    /// Quantity times the configured scale, expected to converge.
    pub scaled: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticSchedule {
    pub points: Vec<AsymptoticPoint>,
    /// Common value once three consecutive scaled quantities agree within [`LIMIT_RTOL`].
    pub limit: Option<f64>,
}

pub const LIMIT_RTOL: f64 = 0.01;

/// First window of three successful consecutive points agreeing within `rtol`
/// (relative, with an absolute floor of `rtol` near zero).
pub fn detect_limit(points: &[AsymptoticPoint], rtol: f64) -> Option<f64> {
    points.windows(3).find_map(|w| {
        if w.iter().any(|p| p.error.is_some() || !p.scaled.is_finite()) {
            return None;
        }
        let last = w[2].scaled;
        let tol = rtol * last.abs().max(1.0);
        if w.iter().all(|p| (p.scaled - last).abs() <= tol) {
            Some(last)
        } else {
            None
        }
    })
}

/// Market at step `n` together with the schedule parameter and quantity scale.
pub struct AsymptoticStep {
    pub market: SegmentedMarket,
    pub param: f64,
    pub scale: f64,
}

fn check_params(points: &[AsymptoticPoint], decreasing: bool) -> Result<()> {
    for w in points.windows(2) {
        let ok = if decreasing { w[1].param < w[0].param } else { w[1].param > w[0].param };
        if !ok || !(w[1].param > 0.0) {
            return Err(PricerError::invalid("schedule parameters must be positive and strictly monotone"));
        }
    }
    Ok(())
}

/// Solves the equilibrium along `ns`; per-step failures are recorded, not fatal.
pub fn pepq_asymptotics(
    ns: &[u32],
    build: impl Fn(u32) -> Result<AsymptoticStep> + Sync,
) -> Result<AsymptoticSchedule> {
    let points: Vec<AsymptoticPoint> = ns
        .par_iter()
        .map(|&n| {
            let step = build(n);
            let (param, scale) = step.as_ref().map(|s| (s.param, s.scale)).unwrap_or((f64::NAN, f64::NAN));
            match step.and_then(|s| solve_pepq(&s.market)) {
                Ok(r) => AsymptoticPoint {
                    n,
                    param,
                    quantity: r.u_star,
                    price: r.p_star,
                    scaled: r.u_star * scale,
                    error: None,
                },
                Err(e) => AsymptoticPoint {
                    n,
                    param,
                    quantity: f64::NAN,
                    price: f64::NAN,
                    scaled: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let limit = detect_limit(&points, LIMIT_RTOL);
    Ok(AsymptoticSchedule { points, limit })
}

/// Demand `û_n(p)·β_n` along setups with shrinking `β_n`.
pub fn demand_asymptotics(
    ns: &[u32],
    p: f64,
    build: impl Fn(u32) -> Result<ClaimSetup> + Sync,
) -> Result<AsymptoticSchedule> {
    let points: Vec<AsymptoticPoint> = ns
        .par_iter()
        .map(|&n| match build(n).and_then(|s| Ok((s.beta(), pricing::demand(&s, p)?))) {
            Ok((beta, d)) => AsymptoticPoint {
                n,
                param: beta,
                quantity: d.u_hat,
                price: p,
                scaled: d.u_hat * beta,
                error: None,
            },
            Err(e) => AsymptoticPoint {
                n,
                param: f64::NAN,
                quantity: f64::NAN,
                price: p,
                scaled: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let ok: Vec<AsymptoticPoint> = points.iter().filter(|p| p.error.is_none()).cloned().collect();
    check_params(&ok, true)?;
    let limit = detect_limit(&points, LIMIT_RTOL);
    Ok(AsymptoticSchedule { points, limit })
}

/// Shared data for the two stylised asymptotic regimes.
#[derive(Debug, Clone)]
pub struct AsymptoticData {
    pub claim: PayoffExpr,
    pub maker_endowment_a: PayoffExpr,
    pub maker_endowment_b: PayoffExpr,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub engine: ExpectationEngine,
}

impl AsymptoticData {
    fn setup(&self, gamma: f64, maker_endowment: &PayoffExpr, alpha: f64, investor_endowment: PayoffExpr) -> Result<ClaimSetup> {
        ClaimSetup::new(
            MakerSpec::new(gamma, maker_endowment.clone(), vec![self.claim.clone()])?,
            InvestorSpec::new(alpha, investor_endowment)?,
            self.claim.clone(),
            self.engine.clone(),
        )
    }

    /// Makers with `γ_A = δγ_B`, `γ_B = 2⁻ⁿ`; investor B holds `(ℓ/γ_B)h`.
    /// The scaled quantity is `u*(γ_A + γ_B)`.
    pub fn large_claim_step(&self, n: u32, ell: f64, delta: f64) -> Result<AsymptoticStep> {
        let gb = 2f64.powi(-(n as i32));
        let ga = delta * gb;
        let a = self.setup(ga, &self.maker_endowment_a, self.alpha_a, PayoffExpr::zero())?;
        let b = self.setup(gb, &self.maker_endowment_b, self.alpha_b, self.claim.scale(ell / gb))?;
        Ok(AsymptoticStep {
            market: SegmentedMarket::new(a, b)?,
            param: gb,
            scale: ga + gb,
        })
    }

    /// `n` makers of risk aversion `γ` and endowment `Σ₀` per side, pooled into
    /// one maker with `γ/n` and `nΣ₀`. The scaled quantity is `u*/n`.
    pub fn many_makers_step(&self, n: u32, gamma_a: f64, gamma_b: f64) -> Result<AsymptoticStep> {
        if n == 0 {
            return Err(PricerError::invalid("maker count must be positive"));
        }
        let k = n as f64;
        let a = self.setup(gamma_a / k, &self.maker_endowment_a.scale(k), self.alpha_a, PayoffExpr::zero())?;
        let b = self.setup(gamma_b / k, &self.maker_endowment_b.scale(k), self.alpha_b, PayoffExpr::zero())?;
        Ok(AsymptoticStep {
            market: SegmentedMarket::new(a, b)?,
            param: k,
            scale: 1.0 / k,
        })
    }
}
