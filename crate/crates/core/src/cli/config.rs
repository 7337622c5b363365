//! Scenario files: one TOML document per experiment, unknown keys rejected.

use serde::Deserialize;

use crate::error::{PricerError, Result};
use crate::maker::{InvestorSpec, MakerSpec};
use crate::models::{BachelierSpec, DigitalSpec, TwoDDigitalSpec};
use crate::payoff::{BrownianSpace, ExpectationEngine, Method, PayoffExpr, StepFunction, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Bachelier,
    Digital,
    Twod,
    Generic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelTag,
    #[serde(default)]
    pub engine: EngineConfig,
    pub bachelier: Option<BachelierConfig>,
    pub digital: Option<DigitalConfig>,
    pub twod: Option<TwoDConfig>,
    pub generic: Option<GenericConfig>,
    pub quote: Option<QuoteConfig>,
    pub bounds: Option<BoundsConfig>,
    pub schedule: Option<ScheduleConfig>,
    pub pepq: Option<PepqConfig>,
    pub region: Option<RegionConfig>,
    pub simulate: Option<SimulateConfig>,
    pub asymptotics: Option<AsymptoticsConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_method() -> String {
    "quadrature".into()
}
fn default_nodes() -> usize {
    64
}
fn default_paths() -> usize {
    100_000
}
fn default_tol() -> f64 {
    1e-10
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            method: default_method(),
            nodes: default_nodes(),
            paths: default_paths(),
            seed: 0,
            tol: default_tol(),
        }
    }
}

pub fn parse_method(s: &str) -> Result<Method> {
    match s {
        "quadrature" => Ok(Method::Quadrature),
        "mc" | "monte_carlo" => Ok(Method::MonteCarlo),
        other => Err(PricerError::invalid(format!("engine.method: expected quadrature or mc, got {other:?}"))),
    }
}

impl EngineConfig {
    pub fn build(&self) -> Result<ExpectationEngine> {
        let e = ExpectationEngine {
            method: parse_method(&self.method)?,
            nodes: self.nodes,
            paths: self.paths,
            seed: self.seed,
            abs_tol: self.tol,
            ..Default::default()
        };
        e.validate()?;
        Ok(e)
    }
}

/// Step-function data: `values[i]` on interval `i` of `grid`, or a single
/// row broadcast over every interval.
fn vector_table(grid: &TimeGrid, values: &[Vec<f64>], field: &str) -> Result<StepFunction> {
    let rows = broadcast(grid, values, field)?;
    StepFunction::vector(grid.clone(), rows).map_err(|e| field_err(field, e))
}

fn matrix_table(grid: &TimeGrid, values: &[Vec<Vec<f64>>], field: &str) -> Result<StepFunction> {
    let rows = broadcast(grid, values, field)?;
    StepFunction::matrix(grid.clone(), rows).map_err(|e| field_err(field, e))
}

fn broadcast<T: Clone>(grid: &TimeGrid, values: &[T], field: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); grid.n_steps()]),
        n if n == grid.n_steps() => Ok(values.to_vec()),
        n => Err(PricerError::invalid(format!(
            "{field}: {n} rows for a grid with {} intervals",
            grid.n_steps()
        ))),
    }
}

fn field_err(field: &str, e: PricerError) -> PricerError {
    PricerError::invalid(format!("{field}: {e}"))
}

fn make_grid(horizon: f64, nodes: &Option<Vec<f64>>) -> Result<TimeGrid> {
    match nodes {
        Some(n) => {
            let g = TimeGrid::from_nodes(n.clone()).map_err(|e| field_err("grid", e))?;
            if (g.horizon() - horizon).abs() > 1e-12 * horizon.max(1.0) {
                return Err(PricerError::invalid("grid: last node must equal the horizon"));
            }
            Ok(g)
        }
        None => TimeGrid::uniform(horizon, 1).map_err(|e| field_err("horizon", e)),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BachelierConfig {
    pub horizon: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    /// Breakpoints `0 = t₀ < … < t_m = T`.
    pub grid: Option<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub g: Option<Vec<Vec<f64>>>,
    pub psi: Vec<Vec<Vec<f64>>>,
    pub y: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}

impl BachelierConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        make_grid(self.horizon, &self.grid)
    }

    /// Spec with `f` and `g` overridden (used for the two sides of an equilibrium).
    pub fn spec_with(&self, f: &[Vec<f64>], g: Option<&[Vec<f64>]>) -> Result<BachelierSpec> {
        let grid = self.grid()?;
        let f = vector_table(&grid, f, "bachelier.f")?;
        let d = f.rows();
        let g = match g {
            Some(g) => vector_table(&grid, g, "bachelier.g")?,
            None => StepFunction::vector(grid.clone(), vec![vec![0.0; d]; grid.n_steps()])?,
        };
        let psi = matrix_table(&grid, &self.psi, "bachelier.psi")?;
        let y = self
            .y
            .as_ref()
            .map(|y| vector_table(&grid, y, "bachelier.y"))
            .transpose()?;
        BachelierSpec::new(f, g, psi, y)
    }

    pub fn spec(&self) -> Result<BachelierSpec> {
        self.spec_with(&self.f, self.g.as_deref())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitalConfig {
    pub gamma: f64,
    pub horizon: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

impl DigitalConfig {
    pub fn spec(&self) -> Result<DigitalSpec> {
        DigitalSpec::new(self.gamma, self.horizon)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoDConfig {
    pub horizon: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub b1: f64,
    #[serde(default)]
    pub b2: f64,
}

impl TwoDConfig {
    pub fn spec(&self) -> Result<TwoDDigitalSpec> {
        TwoDDigitalSpec::new(self.horizon, self.t, self.b1, self.b2)
    }
}

/// Payoff built from Brownian functionals of `B_T`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExprConfig {
    Constant {
        value: f64,
    },
    /// `a'Z` with `Z = B_T/√T`.
    Linear {
        coeffs: Vec<f64>,
    },
    /// `amount · 1{Bⁱ_T ≥ strike}`.
    Digital {
        coord: usize,
        #[serde(default)]
        strike: f64,
        #[serde(default = "one")]
        amount: f64,
    },
    /// `∫φ'dB` for a step function `φ`.
    Integral {
        grid: Option<Vec<f64>>,
        values: Vec<Vec<f64>>,
    },
    Sum {
        terms: Vec<ExprConfig>,
    },
}

impl ExprConfig {
    pub fn build(&self, space: BrownianSpace) -> Result<PayoffExpr> {
        match self {
            ExprConfig::Constant { value } => Ok(PayoffExpr::constant(*value)),
            ExprConfig::Linear { coeffs } => space.linear(coeffs.clone()),
            ExprConfig::Digital { coord, strike, amount } => Ok(space.indicator(*coord, *strike)?.scale(*amount)),
            ExprConfig::Integral { grid, values } => {
                let g = make_grid(space.horizon, grid)?;
                space.integral(vector_table(&g, values, "integral.values")?)
            }
            ExprConfig::Sum { terms } => {
                let built = terms.iter().map(|t| t.build(space)).collect::<Result<Vec<_>>>()?;
                PayoffExpr::try_sum(&built)
            }
        }
    }
}

fn zero_expr() -> ExprConfig {
    ExprConfig::Constant { value: 0.0 }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericConfig {
    pub dim: usize,
    pub horizon: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "zero_expr")]
    pub maker_endowment: ExprConfig,
    pub assets: Vec<ExprConfig>,
    #[serde(default = "zero_expr")]
    pub investor_endowment: ExprConfig,
    pub claim: Option<ExprConfig>,
}

impl GenericConfig {
    pub fn space(&self) -> Result<BrownianSpace> {
        BrownianSpace::new(self.dim, self.horizon)
    }

    pub fn maker(&self) -> Result<MakerSpec> {
        let s = self.space()?;
        let assets = self.assets.iter().map(|a| a.build(s)).collect::<Result<Vec<_>>>()?;
        MakerSpec::new(self.gamma, self.maker_endowment.build(s)?, assets)
    }

    pub fn investor(&self) -> Result<InvestorSpec> {
        InvestorSpec::new(self.alpha, self.investor_endowment.build(self.space()?)?)
    }

    pub fn claim(&self) -> Result<PayoffExpr> {
        self.claim
            .as_ref()
            .ok_or_else(|| PricerError::invalid("generic.claim is required for this command"))?
            .build(self.space()?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuoteConfig {
    /// Orders `q ∈ ℝᵏ`, one row each.
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub u: Vec<f64>,
    /// Price to classify at each level; defaults to `E₀[h]`.
    pub price: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub prices: Option<Vec<f64>>,
    pub p_from: Option<f64>,
    pub p_to: Option<f64>,
    pub points: Option<usize>,
}

impl ScheduleConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if let Some(p) = &self.prices {
            return Ok(p.clone());
        }
        match (self.p_from, self.p_to, self.points) {
            (Some(a), Some(b), Some(n)) if n >= 2 => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
            _ => Err(PricerError::invalid("schedule: give `prices` or `p_from`, `p_to` and `points >= 2`")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PepqSideConfig {
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    /// Bachelier maker integrand.
    pub f: Option<Vec<Vec<f64>>>,
    /// Bachelier investor integrand.
    pub g: Option<Vec<Vec<f64>>>,
    pub maker_endowment: Option<ExprConfig>,
    pub investor_endowment: Option<ExprConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PepqConfig {
    pub a: PepqSideConfig,
    pub b: PepqSideConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub p1: [f64; 2],
    /// Defaults to the open `p₂` band shrunk by `1e-3` on each side.
    pub p2: Option<[f64; 2]>,
    pub resolution: [usize; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandConfig {
    Constant { q: Vec<f64> },
    /// The investor's deterministic optimum (Bachelier only).
    Optimal,
    Schedule { grid: Option<Vec<f64>>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub steps: Vec<usize>,
    pub paths: usize,
    pub seed: Option<u64>,
    pub demand: DemandConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoticKind {
    Demand,
    LargeClaim,
    ManyMakers,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub kind: AsymptoticKind,
    pub ns: Vec<u32>,
    /// Traded price for `kind = "demand"`.
    pub p: Option<f64>,
    /// Claim-regime intensity for `kind = "large_claim"`.
    pub ell: Option<f64>,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "one")]
    pub gamma_a: f64,
    #[serde(default = "one")]
    pub gamma_b: f64,
    #[serde(default = "one")]
    pub alpha_a: f64,
    #[serde(default = "one")]
    pub alpha_b: f64,
    pub maker_endowment_a: Option<ExprConfig>,
    pub maker_endowment_b: Option<ExprConfig>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PricerError::invalid(format!("config: {e}")))
    }

    pub fn require<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| PricerError::invalid(format!("config section [{name}] is required for this command")))
    }

    pub fn bachelier(&self) -> Result<&BachelierConfig> {
        self.require(&self.bachelier, "bachelier")
    }

    pub fn digital(&self) -> Result<&DigitalConfig> {
        self.require(&self.digital, "digital")
    }

    pub fn twod(&self) -> Result<&TwoDConfig> {
        self.require(&self.twod, "twod")
    }

    pub fn generic(&self) -> Result<&GenericConfig> {
        self.require(&self.generic, "generic")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bachelier_and_rejects_unknown_keys() {
        let text = r#"
            model = "bachelier"
            [bachelier]
            horizon = 1.0
            gamma = 2.0
            f = [[1.0]]
            psi = [[[1.0]]]
            y = [[1.0]]
            [bounds]
            u = [0.0, 1.0]
        "#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(cfg.model, ModelTag::Bachelier);
        let spec = cfg.bachelier().unwrap().spec().unwrap();
        assert_eq!(spec.dim(), 1);
        let bad = text.replace("gamma = 2.0", "gamma = 2.0\ncolour = 3");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn broadcast_rows_must_match_grid() {
        let g = TimeGrid::from_nodes(vec![0.0, 0.5, 1.0]).unwrap();
        assert!(vector_table(&g, &[vec![1.0]], "f").is_ok());
        assert!(vector_table(&g, &[vec![1.0], vec![2.0]], "f").is_ok());
        assert!(vector_table(&g, &[vec![1.0], vec![2.0], vec![3.0]], "f").is_err());
    }

    #[test]
    fn expression_kinds() {
        let s = BrownianSpace::new(2, 1.0).unwrap();
        let e: ExprConfig = toml::from_str(
            r#"
            kind = "sum"
            terms = [{ kind = "linear", coeffs = [1.0, 0.0] }, { kind = "digital", coord = 1, amount = 2.0 }]
            "#,
        )
        .unwrap();
        let x = e.build(s).unwrap();
        let m = ExpectationEngine::default().expect(&x).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
    }
}
