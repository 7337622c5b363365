//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p impact-core --test acceptance`.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use impact_core::cli::{self, config::ScenarioConfig};
use impact_core::equilibrium::{
    self, bachelier_pepq, demand_rate, solve_pepq, AsymptoticData, DemandRate, SegmentedMarket,
};
use impact_core::maker::{
    budget_check_on, static_quote, wealth_identity_on, DemandRule, InvestorSpec, MakerSpec,
};
use impact_core::models::{
    self, region_raster, twod_region_membership, BachelierMaker, DigitalMaker, DigitalSpec, TwoDDigitalSpec,
};
use impact_core::payoff::{sample_paths, BrownianSpace, ExpectationEngine, PayoffExpr, StepFunction, TimeGrid};
use impact_core::pricing::{self, BachelierClaim, ClaimSetup};

use common::{gaussian_log_mean_exp, random_bachelier, random_bachelier_market, rng, uniform};

// Pinned tolerances and budgets.
const QUOTE_QUAD_TOL: f64 = 1e-8;
const QUOTE_MC_SIGMAS: f64 = 3.0;
const QUOTE_MC_PATHS: usize = 1_000_000;
const QUOTE_TIME: Duration = Duration::from_secs(5);
const IDENTITY_RATIO: f64 = 0.6;
const IDENTITY_PATHS: usize = 1_000;
const IDENTITY_TIME: Duration = Duration::from_secs(30);
const BUDGET_K: f64 = 5.0;
const BUDGET_PATHS: usize = 4_000;
const BUDGET_STEPS: usize = 128;
const ORDER_TOL: f64 = 1e-12;
const BOUNDS_ORACLE_TOL: f64 = 1e-9;
const DIGITAL_LIMIT_TOL: f64 = 0.05;
const BOUNDS_TIME: Duration = Duration::from_secs(60);
const ROUND_TRIP_TOL: f64 = 1e-8;
const SCHEDULE_TOL: f64 = 1e-8;
const VF_REL_TOL: f64 = 1e-8;
const PEPQ_TOL: f64 = 1e-6;
const PEPQ_RESIDUAL_TOL: f64 = 1e-8;
const SWAP_TOL: f64 = 1e-9;
const DEMAND_RATE_REL: f64 = 0.01;
const LARGE_CLAIM_REL: f64 = 0.02;
const FD_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn quoting_oracle() -> Check {
    let start = Instant::now();
    let space = BrownianSpace::new(2, 1.0).map_err(e2s)?;
    let quad = ExpectationEngine::default();
    let mut r = rng(101);
    // Σ₀ = a'Z + c₀, Ψⱼ = cⱼ'Z + mⱼ, so X(q) = −q'm + (γ/2)|C'q|² + γ a'C'q.
    let draw = |r: &mut rand_chacha::ChaCha8Rng| {
        let gamma = uniform(r, 0.3, 2.0);
        let a = [uniform(r, -1.0, 1.0), uniform(r, -1.0, 1.0)];
        let c0 = uniform(r, -1.0, 1.0);
        let cs = [[uniform(r, -1.0, 1.0), uniform(r, -1.0, 1.0)], [uniform(r, -1.0, 1.0), uniform(r, -1.0, 1.0)]];
        let ms = [uniform(r, -1.0, 1.0), uniform(r, -1.0, 1.0)];
        let q = [uniform(r, -1.0, 1.0), uniform(r, -1.0, 1.0)];
        let cq = [q[0] * cs[0][0] + q[1] * cs[1][0], q[0] * cs[0][1] + q[1] * cs[1][1]];
        let exact = -(q[0] * ms[0] + q[1] * ms[1])
            + 0.5 * gamma * (cq[0] * cq[0] + cq[1] * cq[1])
            + gamma * (a[0] * cq[0] + a[1] * cq[1]);
        let sigma0 = space.linear(a.to_vec()).unwrap().try_add(&PayoffExpr::constant(c0)).unwrap();
        let assets: Vec<PayoffExpr> = (0..2)
            .map(|j| space.linear(cs[j].to_vec()).unwrap().try_add(&PayoffExpr::constant(ms[j])).unwrap())
            .collect();
        (MakerSpec::new(gamma, sigma0, assets).unwrap(), q, exact)
    };
    let mut worst_quad = 0f64;
    for _ in 0..20 {
        let (maker, q, exact) = draw(&mut r);
        let x = static_quote(&maker, &quad, &q).map_err(e2s)?;
        worst_quad = worst_quad.max((x - exact).abs());
    }
    ensure(worst_quad <= QUOTE_QUAD_TOL, format!("quadrature error {worst_quad:.2e}"))?;

    let mut worst_sigmas = 0f64;
    for seed in 0..3u64 {
        let (maker, q, exact) = draw(&mut r);
        let mc = ExpectationEngine::monte_carlo(QUOTE_MC_PATHS, seed);
        let x = static_quote(&maker, &mc, &q).map_err(e2s)?;
        // Delta-method error of the ratio E[e^{−γ(Σ₀+q'Ψ)}]/E[e^{−γΣ₀}] on the same draws.
        let assets = maker.assets();
        let t = mc.tabulate(&[maker.endowment(), &assets[0], &assets[1]]).map_err(e2s)?;
        let g = maker.gamma();
        let n = t.len();
        let la: Vec<f64> = (0..n)
            .map(|i| -g * (t.column(0)[i] + q[0] * t.column(1)[i] + q[1] * t.column(2)[i]))
            .collect();
        let lb: Vec<f64> = (0..n).map(|i| -g * t.column(0)[i]).collect();
        let shift = la.iter().chain(&lb).copied().fold(f64::NEG_INFINITY, f64::max);
        let a: Vec<f64> = la.iter().map(|v| (v - shift).exp()).collect();
        let b: Vec<f64> = lb.iter().map(|v| (v - shift).exp()).collect();
        let (ma, mb) = (a.iter().sum::<f64>() / n as f64, b.iter().sum::<f64>() / n as f64);
        let ratio = ma / mb;
        let var = a.iter().zip(&b).map(|(x, y)| (x - ratio * y).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt() / mb / ratio / g;
        worst_sigmas = worst_sigmas.max((x - exact).abs() / se);
    }
    ensure(worst_sigmas <= QUOTE_MC_SIGMAS, format!("Monte-Carlo error {worst_sigmas:.2} standard errors"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < QUOTE_TIME, format!("took {elapsed:?}"))?;
    Ok(format!(
        "20 quadrature draws max err {worst_quad:.1e} <= {QUOTE_QUAD_TOL:.0e}; 3 MC runs at 1e6 paths max {worst_sigmas:.2} se <= {QUOTE_MC_SIGMAS}; {elapsed:.2?}"
    ))
}

fn gains_identity() -> Check {
    let start = Instant::now();
    let mut r = rng(202);
    let mut ratios = Vec::new();
    for inst in 0..6 {
        let d = 1 + inst % 2;
        let spec = random_bachelier(&mut r, d, 1.0);
        let gamma = uniform(&mut r, 0.5, 2.0);
        let alpha = uniform(&mut r, 0.5, 2.0);
        let rule = if inst < 3 {
            DemandRule::Schedule(pricing::bachelier_optimal_strategy(&spec, gamma, alpha).map_err(e2s)?)
        } else {
            let grid = TimeGrid::from_nodes(vec![0.0, 0.25, 0.5, 1.0]).map_err(e2s)?;
            let v = (0..3).map(|_| (0..d).map(|_| uniform(&mut r, -1.5, 1.5)).collect()).collect();
            DemandRule::Schedule(StepFunction::vector(grid, v).map_err(e2s)?)
        };
        let maker = spec.maker(gamma).map_err(e2s)?;
        let h = BachelierMaker { spec: spec.clone(), gamma };
        let fine = sample_paths(&TimeGrid::uniform(1.0, 512).map_err(e2s)?, d, IDENTITY_PATHS, 7 + inst as u64)
            .map_err(e2s)?;
        let coarse = fine.coarsen().map_err(e2s)?;
        let zero = wealth_identity_on(&maker, &h, &coarse, &DemandRule::Constant(vec![0.0; d])).map_err(e2s)?;
        ensure(zero == 0.0, format!("Q = 0 discrepancy {zero}"))?;
        let d256 = wealth_identity_on(&maker, &h, &coarse, &rule).map_err(e2s)?;
        let d512 = wealth_identity_on(&maker, &h, &fine, &rule).map_err(e2s)?;
        let ratio = d512 / d256;
        ensure(ratio <= IDENTITY_RATIO, format!("instance {inst}: ratio {ratio:.3} ({d256:.2e} -> {d512:.2e})"))?;
        ratios.push(ratio);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < IDENTITY_TIME, format!("took {elapsed:?}"))?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(format!(
        "6 Bachelier instances, 1e3 paths, max ratio d(512)/d(256) = {worst:.3} <= {IDENTITY_RATIO}; Q = 0 gives 0; {elapsed:.2?}"
    ))
}

fn budget_constraint() -> Check {
    let mut r = rng(303);
    let grid = TimeGrid::uniform(1.0, BUDGET_STEPS).map_err(e2s)?;
    let mut worst = f64::NEG_INFINITY;
    for inst in 0..20u64 {
        let check = if inst < 10 {
            let d = 1 + (inst % 2) as usize;
            let spec = random_bachelier(&mut r, d, 1.0);
            let gamma = uniform(&mut r, 0.5, 2.0);
            let rule = match inst % 3 {
                0 => DemandRule::Schedule(pricing::bachelier_optimal_strategy(&spec, gamma, 1.0).map_err(e2s)?),
                1 => DemandRule::Constant((0..d).map(|_| uniform(&mut r, -1.0, 1.0)).collect()),
                _ => {
                    let c = uniform(&mut r, -1.0, 1.0);
                    DemandRule::Feedback(std::sync::Arc::new(move |_, b: &[f64]| b.iter().map(|x| c * x.tanh()).collect()))
                }
            };
            let batch = sample_paths(&grid, d, BUDGET_PATHS, 1000 + inst).map_err(e2s)?;
            budget_check_on(&spec.maker(gamma).map_err(e2s)?, &BachelierMaker { spec, gamma }, &batch, &rule)
                .map_err(e2s)?
        } else {
            let spec = DigitalSpec::new(uniform(&mut r, 0.5, 2.0), 1.0).map_err(e2s)?;
            let rule = if inst % 2 == 0 {
                DemandRule::Constant(vec![uniform(&mut r, -2.0, 2.0)])
            } else {
                let c = uniform(&mut r, -2.0, 2.0);
                DemandRule::Feedback(std::sync::Arc::new(move |_, b: &[f64]| vec![c * (-b[0] * b[0]).exp()]))
            };
            let batch = sample_paths(&grid, 1, BUDGET_PATHS, 1000 + inst).map_err(e2s)?;
            budget_check_on(&spec.maker().map_err(e2s)?, &DigitalMaker(spec), &batch, &rule).map_err(e2s)?
        };
        ensure(
            check.holds(BUDGET_K),
            format!("instance {inst}: estimate {} se {} bias {}", check.estimate, check.std_error, check.dt_bias),
        )?;
        worst = worst.max((check.estimate - 1.0) / (check.std_error + check.dt_bias));
    }
    Ok(format!(
        "20 instances (10 Bachelier, 10 digital), max (estimate - 1)/(se + bias) = {worst:.2} <= {BUDGET_K}"
    ))
}

fn bounds_suite() -> Check {
    let start = Instant::now();
    let engine = ExpectationEngine::default();
    let mut r = rng(404);
    let levels = [0.25, 1.0, 4.0, 16.0];
    let mut oracle_worst = 0f64;
    for draw in 0..100 {
        let one_d = draw % 2 == 0;
        let space = BrownianSpace::new(if one_d { 1 } else { 2 }, 1.0).map_err(e2s)?;
        let gamma = uniform(&mut r, 0.3, 1.0);
        let (s_lin, s_dig) = (uniform(&mut r, -0.5, 0.5), uniform(&mut r, -1.0, 1.0));
        let (h_lin, h_dig) = (uniform(&mut r, -0.15, 0.15), uniform(&mut r, -1.0, 1.0));
        let coord = if one_d { 0 } else { 1 };
        let z0 = space.z(0).map_err(e2s)?;
        let sigma0 = z0.scale(s_lin).try_add(&space.indicator(0, 0.0).map_err(e2s)?.scale(s_dig)).map_err(e2s)?;
        let h = z0.scale(h_lin).try_add(&space.indicator(coord, 0.0).map_err(e2s)?.scale(h_dig)).map_err(e2s)?;
        let maker = MakerSpec::new(gamma, sigma0, vec![z0.clone()]).map_err(e2s)?;
        let setup = ClaimSetup::new(maker, InvestorSpec::new(1.0, PayoffExpr::zero()).map_err(e2s)?, h, engine.clone())
            .map_err(e2s)?;
        let e0 = pricing::q0_price(&setup).map_err(e2s)?;
        let u = uniform(&mut r, 0.01, 16.0);
        let (lo, hi) = (pricing::lower_bound(&setup, u).map_err(e2s)?, pricing::upper_bound(&setup, u).map_err(e2s)?);
        let tol = ORDER_TOL * (1.0 + e0.abs());
        ensure(lo <= e0 + tol && e0 <= hi + tol, format!("draw {draw}: Jensen order {lo} {e0} {hi}"))?;
        let mut prev: Option<(f64, f64)> = None;
        for &v in &levels {
            let b = pricing::price_bounds(&setup, v).map_err(e2s)?;
            if let Some((pl, pu)) = prev {
                ensure(b.upper >= pu - tol && b.lower <= pl + tol, format!("draw {draw}: bounds not monotone at u = {v}"))?;
            }
            prev = Some((b.lower, b.upper));
        }
        if one_d {
            // Independent Simpson oracle: h̄(u) = (1/γu)[log E[e^{γuh − γΣ₀}] − log E[e^{−γΣ₀}]].
            let ind = |z: f64| if z >= 0.0 { 1.0 } else { 0.0 };
            let s0 = |z: f64| s_lin * z + s_dig * ind(z);
            let hz = |z: f64| h_lin * z + h_dig * ind(z);
            let l0 = gaussian_log_mean_exp(|z| -gamma * s0(z), 0.0);
            let lu = gaussian_log_mean_exp(|z| gamma * u * hz(z) - gamma * s0(z), 0.0);
            let oracle = (lu - l0) / (gamma * u);
            oracle_worst = oracle_worst.max((oracle - hi).abs());
        }
    }
    ensure(oracle_worst <= BOUNDS_ORACLE_TOL, format!("upper bound vs oracle {oracle_worst:.2e}"))?;

    let space = BrownianSpace::new(1, 1.0).map_err(e2s)?;
    let digital = ClaimSetup::new(
        MakerSpec::new(1.0, space.z(0).map_err(e2s)?.scale(0.3), vec![space.z(0).map_err(e2s)?]).map_err(e2s)?,
        InvestorSpec::new(1.0, PayoffExpr::zero()).map_err(e2s)?,
        space.indicator(0, 0.0).map_err(e2s)?,
        engine,
    )
    .map_err(e2s)?;
    let b = pricing::price_bounds(&digital, 100.0).map_err(e2s)?;
    ensure(
        b.lower.abs() <= DIGITAL_LIMIT_TOL && (b.upper - 1.0).abs() <= DIGITAL_LIMIT_TOL,
        format!("digital bounds at u = 100: [{}, {}]", b.lower, b.upper),
    )?;
    let elapsed = start.elapsed();
    ensure(elapsed < BOUNDS_TIME, format!("took {elapsed:?}"))?;
    Ok(format!(
        "100 draws ordered and monotone over u in {{1/4,1,4,16}}; oracle err {oracle_worst:.1e}; digital at u = 100 in [{:.4}, {:.4}]; {elapsed:.2?}",
        b.lower, b.upper
    ))
}

fn demand_round_trip() -> Check {
    let engine = ExpectationEngine::default();
    let space = BrownianSpace::new(2, 1.0).map_err(e2s)?;
    let z1 = space.z(0).map_err(e2s)?;
    let z2 = space.z(1).map_err(e2s)?;
    let h = z1.scale(0.5).try_add(&space.indicator(1, 0.0).map_err(e2s)?.scale(0.5)).map_err(e2s)?;
    let setup = ClaimSetup::new(
        MakerSpec::new(1.0, z1.scale(0.3), vec![z1.clone()]).map_err(e2s)?,
        InvestorSpec::new(1.0, z2.scale(-0.2)).map_err(e2s)?,
        h,
        engine.clone(),
    )
    .map_err(e2s)?;
    let mut r = rng(505);
    let mut worst = 0f64;
    for _ in 0..50 {
        let u0 = uniform(&mut r, -10.0, 10.0);
        let p = pricing::tilted_mean(&setup, u0).map_err(e2s)?;
        let d = pricing::demand(&setup, p).map_err(e2s)?;
        worst = worst.max((d.u_hat - u0).abs());
    }
    ensure(worst <= ROUND_TRIP_TOL, format!("round trip error {worst:.2e}"))?;

    let spec = random_bachelier(&mut r, 2, 1.0);
    let (gamma, alpha) = (uniform(&mut r, 0.5, 2.0), uniform(&mut r, 0.5, 2.0));
    let side = equilibrium::BachelierSide { spec: spec.clone(), gamma, alpha };
    let bsetup = side.setup(engine).map_err(e2s)?;
    let closed = BachelierClaim { spec: &spec, gamma, alpha };
    let prices: Vec<f64> = (0..101).map(|i| -2.0 + 4.0 * i as f64 / 100.0).collect();
    let mut worst_schedule = 0f64;
    for (p, pt) in prices.iter().zip(pricing::demand_schedule(&bsetup, &prices).map_err(e2s)?) {
        let pt = pt.map_err(e2s)?;
        worst_schedule = worst_schedule.max((pt.u_hat - closed.demand(*p).map_err(e2s)?).abs());
    }
    ensure(worst_schedule <= SCHEDULE_TOL, format!("Bachelier schedule error {worst_schedule:.2e}"))?;
    Ok(format!(
        "50 round trips max |u - u0| = {worst:.1e}; 101-point Bachelier schedule max err {worst_schedule:.1e} (tol {ROUND_TRIP_TOL:.0e})"
    ))
}

fn value_function_identity() -> Check {
    let engine = ExpectationEngine::default();
    let mut r = rng(606);
    let mut worst_identity = 0f64;
    let mut worst_oracle = 0f64;
    for inst in 0..20 {
        let u = uniform(&mut r, 0.2, 3.0) * if inst % 3 == 0 { -1.0 } else { 1.0 };
        let (setup, pi_reference, vf_reference) = if inst < 10 {
            let d = 1 + inst % 2;
            let spec = random_bachelier(&mut r, d, 1.0);
            let (gamma, alpha) = (uniform(&mut r, 0.5, 2.0), uniform(&mut r, 0.5, 2.0));
            let closed = BachelierClaim { spec: &spec, gamma, alpha };
            let pi = closed.indifference_price(u).map_err(e2s)?;
            let setup = ClaimSetup::new(
                spec.maker(gamma).map_err(e2s)?,
                spec.investor(alpha).map_err(e2s)?,
                spec.claim().map_err(e2s)?,
                engine.clone(),
            )
            .map_err(e2s)?;
            (setup, pi, None)
        } else {
            let space = BrownianSpace::new(1, 1.0).map_err(e2s)?;
            let (gamma, alpha) = (uniform(&mut r, 0.5, 2.0), uniform(&mut r, 0.5, 2.0));
            let c: Vec<f64> = (0..6).map(|_| uniform(&mut r, -0.6, 0.6)).collect();
            let z = space.z(0).map_err(e2s)?;
            let ind = space.indicator(0, 0.0).map_err(e2s)?;
            let mix = |a: f64, b: f64| z.scale(a).try_add(&ind.scale(b));
            let setup = ClaimSetup::new(
                MakerSpec::new(gamma, mix(c[0], c[1]).map_err(e2s)?, vec![z.clone()]).map_err(e2s)?,
                InvestorSpec::new(alpha, mix(c[2], c[3]).map_err(e2s)?).map_err(e2s)?,
                mix(c[4], c[5]).map_err(e2s)?,
                engine.clone(),
            )
            .map_err(e2s)?;
            // Simpson oracle for the closed-form value function with u·h added.
            let beta = alpha * gamma / (alpha + gamma);
            let step = |z: f64| if z >= 0.0 { 1.0 } else { 0.0 };
            let f = |a: f64, b: f64| move |x: f64| a * x + b * step(x);
            let (s0, s1, hh) = (f(c[0], c[1]), f(c[2], c[3]), f(c[4], c[5]));
            let l0 = gaussian_log_mean_exp(|x| -gamma * s0(x), 0.0);
            let ls = |v: f64| gaussian_log_mean_exp(|x| -beta * (s0(x) + s1(x) + v * hh(x)), 0.0);
            let vf = |v: f64| -(-(alpha / gamma) * l0 + (alpha / beta) * ls(v)).exp();
            let pi = -(ls(u) - ls(0.0)) / (beta * u);
            (setup, pi, Some((vf(0.0), vf(u))))
        };
        let alpha = setup.alpha();
        let v0 = pricing::value_function(&setup).map_err(e2s)?;
        let vu = pricing::value_function_with_claim(&setup, u).map_err(e2s)?;
        let pi = pricing::indifference_price(&setup, u).map_err(e2s)?;
        // Indifference: adding u·h and paying u·p^I leaves the value unchanged.
        let identity = rel(vu / v0, (-alpha * u * pi).exp());
        let reference = rel(pi, pi_reference).min((pi - pi_reference).abs());
        worst_identity = worst_identity.max(identity);
        worst_oracle = worst_oracle.max(reference);
        if let Some((o0, ou)) = vf_reference {
            worst_oracle = worst_oracle.max(rel(v0, o0)).max(rel(vu, ou));
        }
    }
    ensure(worst_identity <= VF_REL_TOL, format!("identity rel err {worst_identity:.2e}"))?;
    ensure(worst_oracle <= VF_REL_TOL, format!("oracle rel err {worst_oracle:.2e}"))?;
    Ok(format!(
        "20 instances: vf(S1 + uh)/vf(S1) = exp(-alpha u p_I) rel err {worst_identity:.1e}; vs closed form / Simpson oracle {worst_oracle:.1e} (tol {VF_REL_TOL:.0e})"
    ))
}

fn pepq_closed_forms() -> Check {
    let engine = ExpectationEngine::default();
    let mut r = rng(707);
    let (mut worst, mut worst_res, mut worst_swap) = (0f64, 0f64, 0f64);
    for inst in 0..20 {
        let (a, b) = random_bachelier_market(&mut r, 1 + inst % 2);
        let closed = bachelier_pepq(&a, &b).map_err(e2s)?;
        let market = SegmentedMarket::new(a.setup(engine.clone()).map_err(e2s)?, b.setup(engine.clone()).map_err(e2s)?)
            .map_err(e2s)?;
        let num = solve_pepq(&market).map_err(e2s)?;
        let swapped = solve_pepq(&market.swapped()).map_err(e2s)?;
        worst = worst.max((num.u_star - closed.u_star).abs()).max((num.p_star - closed.p_star).abs());
        worst_res = worst_res.max(num.residual_a.abs()).max(num.residual_b.abs());
        worst_swap = worst_swap
            .max((swapped.u_star + num.u_star).abs() / (1.0 + num.u_star.abs()))
            .max((swapped.p_star - num.p_star).abs() / (1.0 + num.p_star.abs()));
    }
    ensure(worst <= PEPQ_TOL, format!("numeric vs closed form {worst:.2e}"))?;
    ensure(worst_res <= PEPQ_RESIDUAL_TOL, format!("residual {worst_res:.2e}"))?;
    ensure(worst_swap <= SWAP_TOL, format!("swap asymmetry {worst_swap:.2e}"))?;
    Ok(format!(
        "20 markets: |numeric - closed| <= {worst:.1e}; residuals <= {worst_res:.1e}; swap defect {worst_swap:.1e}"
    ))
}

fn asymptotics() -> Check {
    let engine = ExpectationEngine::default();
    let space = BrownianSpace::new(1, 1.0).map_err(e2s)?;
    let z = space.z(0).map_err(e2s)?;
    let ind = space.indicator(0, 0.0).map_err(e2s)?;
    let p = -0.5;
    let ell = match demand_rate(&engine, &z, p, None).map_err(e2s)? {
        DemandRate::Rate(l) => l,
        DemandRate::Bounded => return Err("demand rate reported bounded".into()),
    };
    // Tilted Gaussian mean is −ℓ.
    ensure((ell - 0.5).abs() <= 1e-10, format!("demand rate {ell}"))?;
    let maker_endowment = z.scale(0.4).try_add(&ind.scale(0.5)).map_err(e2s)?;
    let investor_endowment = z.scale(-0.3);
    let ns: Vec<u32> = (6..=12).collect();
    let schedule = equilibrium::demand_asymptotics(&ns, p, |n| {
        let g = 2f64.powi(1 - n as i32);
        ClaimSetup::new(
            MakerSpec::new(g, maker_endowment.clone(), vec![z.clone()])?,
            InvestorSpec::new(g, investor_endowment.clone())?,
            z.clone(),
            engine.clone(),
        )
    })
    .map_err(e2s)?;
    let mut worst = 0f64;
    for pt in &schedule.points {
        ensure(pt.error.is_none(), format!("n = {}: {:?}", pt.n, pt.error))?;
        worst = worst.max(rel(pt.scaled, 0.5));
    }
    ensure(worst <= DEMAND_RATE_REL, format!("demand(beta_n)/r_n off by {:.2}%", 100.0 * worst))?;

    let claim = ind.try_add(&z.scale(0.5)).map_err(e2s)?;
    let data = AsymptoticData {
        claim,
        maker_endowment_a: z.scale(0.5),
        maker_endowment_b: ind.scale(-0.5),
        alpha_a: 1.0,
        alpha_b: 1.5,
        engine,
    };
    let large_ell = 1.0;
    let delta = 2.0;
    let large = equilibrium::pepq_asymptotics(&[0, 2, 4, 6, 8, 10], |n| data.large_claim_step(n, large_ell, delta))
        .map_err(e2s)?;
    let last = large.points.iter().find(|pt| pt.n == 10).ok_or("missing n = 10")?;
    ensure(last.error.is_none(), format!("large claim n = 10: {:?}", last.error))?;
    let err = rel(last.scaled, large_ell);
    ensure(err <= LARGE_CLAIM_REL, format!("u*(gamma_A + gamma_B) = {} at gamma_B = 2^-10", last.scaled))?;
    Ok(format!(
        "demand rate 0.5, demand(beta_n)/r_n within {:.3}% for n = 6..12; large-claim u*(gA+gB) = {:.5} at gB = 2^-10 (delta = 2, err {:.3}%)",
        100.0 * worst,
        last.scaled,
        100.0 * err
    ))
}

fn geometry() -> Check {
    let mut r = rng(909);
    let mut worst = 0f64;
    for _ in 0..100 {
        let spec = DigitalSpec::new(uniform(&mut r, 0.5, 2.0), 1.0).map_err(e2s)?;
        let t = uniform(&mut r, 0.0, 0.9);
        let b = uniform(&mut r, -2.0, 2.0);
        let q = uniform(&mut r, -3.0, 3.0);
        let fd = (models::digital_v(&spec, t, b + FD_STEP, q) - models::digital_v(&spec, t, b - FD_STEP, q)) / (2.0 * FD_STEP);
        worst = worst.max((fd + models::digital_h(&spec, t, b, q)).abs());
    }
    ensure(worst <= FD_TOL, format!("finite difference error {worst:.2e}"))?;

    let spec = TwoDDigitalSpec::new(1.0, 0.0, 0.0, 0.0).map_err(e2s)?;
    let (lo, hi) = spec.p2_band();
    let raster = region_raster(&spec, (-4.0, 4.0), (lo * 0.999, hi * 0.999), (161, 81)).map_err(e2s)?;
    let triple = raster.nonconvex_triple().ok_or("no true-false-true triple in the raster")?;
    let pattern: Vec<bool> = triple.iter().map(|&(x, y)| twod_region_membership(&spec, x, y).member).collect();
    ensure(pattern == [true, false, true], format!("triple {triple:?} re-evaluates to {pattern:?}"))?;

    let mut slice_points = 0;
    for spec in [spec, TwoDDigitalSpec::new(1.0, 0.3, 0.4, -0.5).map_err(e2s)?] {
        for i in 0..=1000 {
            let p1 = -6.0 + 12.0 * i as f64 / 1000.0;
            ensure(twod_region_membership(&spec, p1, 0.0).member, format!("p2 = 0 slice excludes p1 = {p1}"))?;
            slice_points += 1;
        }
    }
    Ok(format!(
        "100 finite-difference checks max err {worst:.1e}; true-false-true triple at p2 = {:.4}; {slice_points} p2 = 0 points all members",
        triple[0].1
    ))
}

fn arbitrage_demo() -> Check {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/arbitrage_demo.toml");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg = ScenarioConfig::from_toml(&text).map_err(e2s)?;
    let engine = cfg.engine.build().map_err(e2s)?;
    let out = cli::execute("pepq", &cfg, &engine).map_err(e2s)?;
    let get = |k: &str| out.summary.get(k).cloned().ok_or(format!("summary lacks {k}"));
    let flagged: Vec<String> = ["A", "B"]
        .iter()
        .filter(|s| {
            let c = out.summary.get(&format!("side_{s}_class")).map(String::as_str);
            matches!(c, Some("sell_arbitrage" | "buy_arbitrage"))
        })
        .map(|s| s.to_string())
        .collect();
    ensure(!flagged.is_empty(), "p* is arbitrage-free on both sides")?;
    let report = get("arbitrage_report")?;
    ensure(report.contains("bounded arbitrage gain"), format!("report lacks the gain: {report}"))?;
    // Hand solution of the shipped data: u* = 2, p* = 0, side A upper bound −1, gain 2.
    let u: f64 = get("u_star")?.parse().map_err(e2s)?;
    let p: f64 = get("p_star")?.parse().map_err(e2s)?;
    let gain: f64 = get(&format!("side_{}_gain", flagged[0]))?.parse().map_err(e2s)?;
    ensure((u - 2.0).abs() < 1e-8 && p.abs() < 1e-8 && (gain - 2.0).abs() < 1e-8, format!("u* {u}, p* {p}, gain {gain}"))?;
    Ok(format!("side {} {} at level u* = {u:.6}, gain {gain:.6}", flagged[0], get(&format!("side_{}_class", flagged[0]))?))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("quoting oracle", quoting_oracle),
        ("gains-process identity", gains_identity),
        ("budget constraint", budget_constraint),
        ("bounds suite", bounds_suite),
        ("demand round trip", demand_round_trip),
        ("value-function identity", value_function_identity),
        ("equilibrium closed forms", pepq_closed_forms),
        ("asymptotics", asymptotics),
        ("geometry", geometry),
        ("equilibrium arbitrage", arbitrage_demo),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let res = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match res {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
