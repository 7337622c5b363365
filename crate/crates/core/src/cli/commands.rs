use std::collections::BTreeMap;

use crate::equilibrium::{self, AsymptoticData, AsymptoticSchedule, BachelierSide, SegmentedMarket};
use crate::error::{PricerError, Result};
use crate::maker::{self, DemandRule, HProvider, InvestorSpec, MakerSpec};
use crate::models::{self, BachelierMaker, DigitalMaker};
use crate::payoff::{sample_paths, ExpectationEngine, PathBatch, PayoffExpr, StepFunction, TimeGrid};
use crate::pricing::{self, BachelierClaim, ClaimSetup, CLASSIFY_TOL};

use super::config::{AsymptoticKind, DemandConfig, ExprConfig, ModelTag, PepqSideConfig, ScenarioConfig};
use super::output::{fmt_f64, Table};

/// Tables and headline numbers produced by one command.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub tolerances: BTreeMap<String, f64>,
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

/// Machine-readable tag for per-row failures.
pub fn error_code(e: &PricerError) -> &'static str {
    match e {
        PricerError::InvalidInput(_) => "invalid_input",
        PricerError::Dimension(_) => "dimension",
        PricerError::Overflow { .. } => "overflow",
        PricerError::Unsupported(_) => "unsupported",
        PricerError::NoFiniteDemand { .. } => "no_finite_demand",
        PricerError::BracketFailure { .. } => "bracket_failure",
        PricerError::Degenerate(_) => "degenerate",
        PricerError::FlaggedPaths { .. } => "flagged_paths",
        PricerError::Singular(_) => "singular",
    }
}

fn maker_of(cfg: &ScenarioConfig) -> Result<MakerSpec> {
    match cfg.model {
        ModelTag::Bachelier => {
            let b = cfg.bachelier()?;
            b.spec()?.maker(b.gamma)
        }
        ModelTag::Digital => cfg.digital()?.spec()?.maker(),
        ModelTag::Generic => cfg.generic()?.maker(),
        ModelTag::Twod => Err(PricerError::Unsupported("the two-dimensional model only supports the region command".into())),
    }
}

pub fn claim_setup(cfg: &ScenarioConfig, engine: &ExpectationEngine) -> Result<ClaimSetup> {
    match cfg.model {
        ModelTag::Bachelier => {
            let b = cfg.bachelier()?;
            let spec = b.spec()?;
            ClaimSetup::new(spec.maker(b.gamma)?, spec.investor(b.alpha)?, spec.claim()?, engine.clone())
        }
        ModelTag::Digital => {
            let d = cfg.digital()?;
            let m = d.spec()?.maker()?;
            let h = m.assets()[0].clone();
            ClaimSetup::new(m, InvestorSpec::new(d.alpha, PayoffExpr::zero())?, h, engine.clone())
        }
        ModelTag::Generic => {
            let g = cfg.generic()?;
            ClaimSetup::new(g.maker()?, g.investor()?, g.claim()?, engine.clone())
        }
        ModelTag::Twod => Err(PricerError::Unsupported("the two-dimensional model only supports the region command".into())),
    }
}

pub fn cmd_quote(cfg: &ScenarioConfig, engine: &ExpectationEngine) -> Result<CommandOutput> {
    let q = &cfg.require(&cfg.quote, "quote")?.q;
    let m = maker_of(cfg)?;
    let mut header: Vec<String> = (1..=m.n_assets()).map(|j| format!("q{j}")).collect();
    header.push("x".into());
    header.push("indifference_defect".into());
    let mut t = Table::with_header("quote", header);
    for row in q {
        let x = maker::static_quote(&m, engine, row)?;
        let defect = maker::quote_indifference_defect(&m, engine, row, x)?;
        let mut r: Vec<String> = row.iter().map(|v| f(*v)).collect();
        r.push(f(x));
        r.push(f(defect));
        t.push(r);
    }
    Ok(CommandOutput {
        tables: vec![t],
        seeds: vec![engine.seed],
        ..Default::default()
    })
}

pub fn cmd_bounds(cfg: &ScenarioConfig, engine: &ExpectationEngine) -> Result<CommandOutput> {
    let bc = cfg.require(&cfg.bounds, "bounds")?;
    let setup = claim_setup(cfg, engine)?;
    let q0 = pricing::q0_price(&setup)?;
    let price = bc.price.unwrap_or(q0);
    let mut t = Table::new("bounds", &["u", "lower", "q0_price", "upper", "price", "class"]);
    for &u in &bc.u {
        let b = pricing::price_bounds(&setup, u)?;
        t.push(vec![
            f(u),
            f(b.lower),
            f(b.q0_price),
            f(b.upper),
            f(price),
            pricing::classify_against(&b, price).to_string(),
        ]);
    }
    let mut summary = BTreeMap::new();
    summary.insert("q0_price".into(), f(q0));
    summary.insert("strongly_arbitrage_free".into(), pricing::strong_classify(&setup, price)?.to_string());
    Ok(CommandOutput {
        tables: vec![t],
        summary,
        seeds: vec![engine.seed],
        tolerances: BTreeMap::from([("classification_rel".into(), CLASSIFY_TOL)]),
    })
}

pub fn cmd_schedule(cfg: &ScenarioConfig, engine: &ExpectationEngine) -> Result<CommandOutput> {
    let prices = cfg.require(&cfg.schedule, "schedule")?.grid()?;
    let setup = claim_setup(cfg, engine)?;
    let closed = if cfg.model == ModelTag::Bachelier {
        let b = cfg.bachelier()?;
        Some((b.spec()?, b.gamma, b.alpha))
    } else {
        None
    };
    let mut t = Table::new("schedule", &["p", "u_hat", "residual", "closed_form", "status"]);
    for (p, r) in prices.iter().zip(pricing::demand_schedule(&setup, &prices)?) {
        let cf = match &closed {
            Some((spec, gamma, alpha)) => BachelierClaim {
                spec,
                gamma: *gamma,
                alpha: *alpha,
            }
            .demand(*p)?,
            None => f64::NAN,
        };
        match r {
            Ok(d) => {
                let status = if d.residual.abs() <= engine.abs_tol * (1.0 + p.abs()) {
                    "ok"
                } else {
                    "residual_above_tol"
                };
                t.push(vec![f(*p), f(d.u_hat), f(d.residual), f(cf), status.into()]);
            }
            Err(e) => t.push(vec![f(*p), f(f64::NAN), f(f64::NAN), f(cf), error_code(&e).into()]),
        }
    }
    Ok(CommandOutput {
        tables: vec![t],
        seeds: vec![engine.seed],
        tolerances: BTreeMap::from([("residual_abs".into(), engine.abs_tol)]),
        ..Default::default()
    })
}

fn generic_side(cfg: &ScenarioConfig, side: &PepqSideConfig, engine: &ExpectationEngine) -> Result<ClaimSetup> {
    let g = cfg.generic()?;
    let s = g.space()?;
    let zero = ExprConfig::Constant { value: 0.0 };
    let assets = g.assets.iter().map(|a| a.build(s)).collect::<Result<Vec<_>>>()?;
    let maker = MakerSpec::new(side.gamma, side.maker_endowment.as_ref().unwrap_or(&zero).build(s)?, assets)?;
    let investor = InvestorSpec::new(side.alpha, side.investor_endowment.as_ref().unwrap_or(&zero).build(s)?)?;
    ClaimSetup::new(maker, investor, g.claim()?, engine.clone())
}

fn bachelier_side(cfg: &ScenarioConfig, side: &PepqSideConfig) -> Result<BachelierSide> {
    let b = cfg.bachelier()?;
    let fa = side.f.as_deref().unwrap_or(&b.f);
    let ga = side.g.as_deref().or(b.g.as_deref());
    Ok(BachelierSide {
        spec: b.spec_with(fa, ga)?,
        gamma: side.gamma,
        alpha: side.alpha,
    })
}

pub fn cmd_pepq(cfg: &ScenarioConfig, engine: &ExpectationEngine) -> Result<CommandOutput> {
    let pc = cfg.require(&cfg.pepq, "pepq")?;
    let mut t = Table::new("pepq", &["method", "u_star", "p_star", "residual_a", "residual_b"]);
    let (market, closed) = match cfg.model {
        ModelTag::Bachelier => {
            let a = bachelier_side(cfg, &pc.a)?;
            let b = bachelier_side(cfg, &pc.b)?;
            let closed = equilibrium::bachelier_pepq(&a, &b)?;
            (SegmentedMarket::new(a.setup(engine.clone())?, b.setup(engine.clone())?)?, Some(closed))
        }
        ModelTag::Generic => (
            SegmentedMarket::new(generic_side(cfg, &pc.a, engine)?, generic_side(cfg, &pc.b, engine)?)?,
            None,
        ),
        _ => return Err(PricerError::Unsupported("pepq needs the bachelier or generic model".into())),
    };
    let r = equilibrium::solve_pepq(&market)?;
    t.push(vec!["numeric".into(), f(r.u_star), f(r.p_star), f(r.residual_a), f(r.residual_b)]);
    if let Some(c) = closed {
        t.push(vec!["closed_form".into(), f(c.u_star), f(c.p_star), f(c.residual_a), f(c.residual_b)]);
    }
    let mut sides = Table::new("pepq_arbitrage", &["side", "level", "lower", "upper", "p_star", "class", "gain"]);
    let mut summary = BTreeMap::new();
    summary.insert("u_star".into(), f(r.u_star));
    summary.insert("p_star".into(), f(r.p_star));
    let mut reports = Vec::new();
    for (name, setup) in [("A", market.side_a()), ("B", market.side_b())] {
        let s = equilibrium::side_arbitrage(setup, &r)?;
        sides.push(vec![
            name.into(),
            f(r.u_star.abs()),
            f(s.lower),
            f(s.upper),
            f(r.p_star),
            s.class.to_string(),
            f(s.gain),
        ]);
        summary.insert(format!("side_{name}_class"), s.class.to_string());
        summary.insert(format!("side_{name}_gain"), f(s.gain));
        if s.class != pricing::PriceClass::ArbitrageFree {
            reports.push(format!(
                "side {name}: p* = {} is {} at level u* = {}; bounded arbitrage gain u*|p* - nearest bound| = {}",
                r.p_star,
                s.class,
                r.u_star.abs(),
                s.gain
            ));
        }
    }
    summary.insert(
        "arbitrage_report".into(),
        if reports.is_empty() {
            "p* is arbitrage-free at level |u*| for both sides".into()
        } else {
            reports.join("; ")
        },
    );
    Ok(CommandOutput {
        tables: vec![t, sides],
        summary,
        seeds: vec![engine.seed],
        tolerances: BTreeMap::from([
            ("classification_rel".into(), CLASSIFY_TOL),
            ("degeneracy_variance".into(), equilibrium::DEGENERACY_TOL),
        ]),
    })
}

pub fn cmd_region(cfg: &ScenarioConfig) -> Result<CommandOutput> {
    let rc = cfg.require(&cfg.region, "region")?;
    let spec = cfg.twod()?.spec()?;
    let p2 = match rc.p2 {
        Some(r) => (r[0], r[1]),
        None => {
            let (lo, hi) = spec.p2_band();
            (lo * (1.0 - 1e-3), hi * (1.0 - 1e-3))
        }
    };
    let raster = models::region_raster(&spec, (rc.p1[0], rc.p1[1]), p2, (rc.resolution[0], rc.resolution[1]))?;
    let mut t = Table::new("region", &["p1", "p2", "in_region", "singular"]);
    for (j, row) in raster.cells.iter().enumerate() {
        for (i, m) in row.iter().enumerate() {
            t.push(vec![f(raster.p1[i]), f(raster.p2[j]), m.member.to_string(), m.singular.to_string()]);
        }
    }
    let mut summary = BTreeMap::new();
    let (lo, hi) = spec.p2_band();
    summary.insert("p2_band".into(), format!("({}, {})", f(lo), f(hi)));
    summary.insert(
        "nonconvex_triple".into(),
        match raster.nonconvex_triple() {
            Some(tr) => format!("{tr:?}"),
            None => "none found".into(),
        },
    );
    Ok(CommandOutput {
        tables: vec![t],
        summary,
        ..Default::default()
    })
}

/// Paths for every requested step count; counts that divide the finest one by
/// a power of two reuse its Brownian paths.
fn nested_batches(horizon: f64, dim: usize, steps: &[usize], paths: usize, seed: u64) -> Result<Vec<PathBatch>> {
    let finest = *steps.iter().max().ok_or_else(|| PricerError::invalid("simulate.steps is empty"))?;
    let fine = sample_paths(&TimeGrid::uniform(horizon, finest)?, dim, paths, seed)?;
    steps
        .iter()
        .map(|&n| {
            let ratio = finest / n.max(1);
            if n > 0 && finest % n == 0 && ratio.is_power_of_two() {
                let mut b = fine.clone();
                while b.grid().n_steps() > n {
                    b = b.coarsen()?;
                }
                Ok(b)
            } else {
                sample_paths(&TimeGrid::uniform(horizon, n)?, dim, paths, seed)
            }
        })
        .collect()
}

pub fn cmd_simulate(cfg: &ScenarioConfig, engine: &ExpectationEngine) -> Result<CommandOutput> {
    let sc = cfg.require(&cfg.simulate, "simulate")?;
    let seed = sc.seed.unwrap_or(engine.seed);
    let (maker, provider, horizon, optimal): (MakerSpec, Box<dyn HProvider>, f64, Option<StepFunction>) = match cfg.model {
        ModelTag::Bachelier => {
            let b = cfg.bachelier()?;
            let spec = b.spec()?;
            let opt = pricing::bachelier_optimal_strategy(&spec, b.gamma, b.alpha)?;
            (
                spec.maker(b.gamma)?,
                Box::new(BachelierMaker {
                    spec: spec.clone(),
                    gamma: b.gamma,
                }),
                spec.horizon(),
                Some(opt),
            )
        }
        ModelTag::Digital => {
            let d = cfg.digital()?;
            let spec = d.spec()?;
            (spec.maker()?, Box::new(DigitalMaker(spec)), spec.horizon, None)
        }
        _ => return Err(PricerError::Unsupported("simulate needs the bachelier or digital model".into())),
    };
    let rule = match &sc.demand {
        DemandConfig::Constant { q } => DemandRule::Constant(q.clone()),
        DemandConfig::Optimal => DemandRule::Schedule(
            optimal.ok_or_else(|| PricerError::invalid("simulate.demand: optimal is only available for the Bachelier model"))?,
        ),
        DemandConfig::Schedule { grid, values } => {
            let g = match grid {
                Some(n) => TimeGrid::from_nodes(n.clone())?,
                None => TimeGrid::uniform(horizon, values.len())?,
            };
            DemandRule::Schedule(StepFunction::vector(g, values.clone())?)
        }
    };
    let batches = nested_batches(horizon, provider.dim(), &sc.steps, sc.paths, seed)?;
    let mut t = Table::new(
        "simulate",
        &[
            "n_steps",
            "paths",
            "identity_discrepancy",
            "budget_estimate",
            "budget_std_error",
            "budget_dt_bias",
            "budget_holds",
        ],
    );
    let mut disc = Vec::new();
    for batch in &batches {
        let d = maker::wealth_identity_on(&maker, provider.as_ref(), batch, &rule)?;
        let b = maker::budget_check_on(&maker, provider.as_ref(), batch, &rule)?;
        disc.push((batch.grid().n_steps(), d));
        t.push(vec![
            batch.grid().n_steps().to_string(),
            batch.paths().to_string(),
            f(d),
            f(b.estimate),
            f(b.std_error),
            f(b.dt_bias),
            b.holds(5.0).to_string(),
        ]);
    }
    let mut summary = BTreeMap::new();
    disc.sort_by_key(|x| x.0);
    for w in disc.windows(2) {
        summary.insert(format!("discrepancy_ratio_{}_over_{}", w[1].0, w[0].0), f(w[1].1 / w[0].1));
    }
    Ok(CommandOutput {
        tables: vec![t],
        summary,
        seeds: vec![seed],
        tolerances: BTreeMap::from([("budget_sigma_multiple".into(), 5.0)]),
    })
}

fn schedule_table(s: &AsymptoticSchedule) -> Table {
    let mut t = Table::new("asymptotics", &["n", "param", "quantity", "price", "scaled", "status"]);
    for p in &s.points {
        t.push(vec![
            p.n.to_string(),
            f(p.param),
            f(p.quantity),
            f(p.price),
            f(p.scaled),
            p.error.clone().unwrap_or_else(|| "ok".into()),
        ]);
    }
    t
}

pub fn cmd_asymptotics(cfg: &ScenarioConfig, engine: &ExpectationEngine) -> Result<CommandOutput> {
    let ac = cfg.require(&cfg.asymptotics, "asymptotics")?;
    let g = cfg.generic()?;
    let space = g.space()?;
    let claim = g.claim()?;
    let mut summary = BTreeMap::new();
    let schedule = match ac.kind {
        AsymptoticKind::Demand => {
            let p = ac.p.ok_or_else(|| PricerError::invalid("asymptotics.p is required for kind = \"demand\""))?;
            let maker = g.maker()?;
            let investor = g.investor()?;
            let rate = equilibrium::demand_rate(engine, &claim, p, None)?;
            summary.insert("demand_rate".into(), format!("{rate:?}"));
            // β_n = 2⁻ⁿ with α_n = γ_n = 2^{1−n}.
            equilibrium::demand_asymptotics(&ac.ns, p, |n| {
                let r = 2f64.powi(1 - n as i32);
                ClaimSetup::new(
                    MakerSpec::new(r, maker.endowment().clone(), maker.assets().to_vec())?,
                    InvestorSpec::new(r, investor.endowment().clone())?,
                    claim.clone(),
                    engine.clone(),
                )
            })?
        }
        AsymptoticKind::LargeClaim | AsymptoticKind::ManyMakers => {
            let zero = ExprConfig::Constant { value: 0.0 };
            let data = AsymptoticData {
                claim: claim.clone(),
                maker_endowment_a: ac.maker_endowment_a.as_ref().unwrap_or(&zero).build(space)?,
                maker_endowment_b: ac.maker_endowment_b.as_ref().unwrap_or(&zero).build(space)?,
                alpha_a: ac.alpha_a,
                alpha_b: ac.alpha_b,
                engine: engine.clone(),
            };
            if ac.kind == AsymptoticKind::LargeClaim {
                let ell = ac
                    .ell
                    .ok_or_else(|| PricerError::invalid("asymptotics.ell is required for kind = \"large_claim\""))?;
                equilibrium::pepq_asymptotics(&ac.ns, |n| data.large_claim_step(n, ell, ac.delta))?
            } else {
                equilibrium::pepq_asymptotics(&ac.ns, |n| data.many_makers_step(n, ac.gamma_a, ac.gamma_b))?
            }
        }
    };
    summary.insert(
        "limit".into(),
        schedule.limit.map(f).unwrap_or_else(|| "not detected".into()),
    );
    Ok(CommandOutput {
        tables: vec![schedule_table(&schedule)],
        summary,
        seeds: vec![engine.seed],
        tolerances: BTreeMap::from([("limit_rel".into(), equilibrium::LIMIT_RTOL)]),
    })
}
