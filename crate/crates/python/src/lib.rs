use pyo3::exceptions::{PyOverflowError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use impact_core::equilibrium::{self, BachelierSide, SegmentedMarket};
use impact_core::maker::{self, InvestorSpec, MakerSpec};
use impact_core::models::{self, BachelierSpec, DigitalSpec, TwoDDigitalSpec};
use impact_core::payoff::{BrownianSpace, ExpectationEngine, PayoffExpr, StepFunction, TimeGrid};
use impact_core::pricing::{self, ClaimSetup};
use impact_core::PricerError;

fn to_py(e: PricerError) -> PyErr {
    match e {
        PricerError::Overflow { .. } => PyOverflowError::new_err(e.to_string()),
        PricerError::InvalidInput(_) | PricerError::Dimension(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Brownian motion on `[0, horizon]` in `dim` dimensions.
#[pyclass(name = "Space", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PySpace(BrownianSpace);

#[pymethods]
impl PySpace {
    #[new]
    fn new(dim: usize, horizon: f64) -> PyResult<Self> {
        BrownianSpace::new(dim, horizon).map(PySpace).map_err(to_py)
    }

    /// Standardised terminal coordinate `Bⁱ_T/√T`.
    fn z(&self, i: usize) -> PyResult<PyExpr> {
        self.0.z(i).map(PyExpr).map_err(to_py)
    }

    fn terminal(&self, i: usize) -> PyResult<PyExpr> {
        self.0.terminal(i).map(PyExpr).map_err(to_py)
    }

    fn linear(&self, coeffs: Vec<f64>) -> PyResult<PyExpr> {
        self.0.linear(coeffs).map(PyExpr).map_err(to_py)
    }

    #[pyo3(signature = (i, strike = 0.0))]
    fn indicator(&self, i: usize, strike: f64) -> PyResult<PyExpr> {
        self.0.indicator(i, strike).map(PyExpr).map_err(to_py)
    }

    /// `∫φ'dB` with `values[k]` on `[nodes[k], nodes[k+1])`.
    fn integral(&self, nodes: Vec<f64>, values: Vec<Vec<f64>>) -> PyResult<PyExpr> {
        let grid = TimeGrid::from_nodes(nodes).map_err(to_py)?;
        let phi = StepFunction::vector(grid, values).map_err(to_py)?;
        self.0.integral(phi).map(PyExpr).map_err(to_py)
    }
}

#[pyclass(name = "Expr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyExpr(PayoffExpr);

fn expr_or_scalar(other: &Bound<'_, PyAny>) -> PyResult<PayoffExpr> {
    if let Ok(c) = other.extract::<f64>() {
        return Ok(PayoffExpr::constant(c));
    }
    let e = other.cast::<PyExpr>()?;
    Ok(e.get().0.clone())
}

#[pymethods]
impl PyExpr {
    #[staticmethod]
    fn constant(c: f64) -> Self {
        PyExpr(PayoffExpr::constant(c))
    }

    fn __add__(&self, other: &Bound<'_, PyAny>) -> PyResult<Self> {
        self.0.try_add(&expr_or_scalar(other)?).map(PyExpr).map_err(to_py)
    }

    fn __radd__(&self, other: &Bound<'_, PyAny>) -> PyResult<Self> {
        self.__add__(other)
    }

    fn __sub__(&self, other: &Bound<'_, PyAny>) -> PyResult<Self> {
        self.0.try_add(&expr_or_scalar(other)?.scale(-1.0)).map(PyExpr).map_err(to_py)
    }

    fn __mul__(&self, other: &Bound<'_, PyAny>) -> PyResult<Self> {
        if let Ok(c) = other.extract::<f64>() {
            return Ok(PyExpr(self.0.scale(c)));
        }
        self.0.try_mul(&expr_or_scalar(other)?).map(PyExpr).map_err(to_py)
    }

    fn __rmul__(&self, other: &Bound<'_, PyAny>) -> PyResult<Self> {
        self.__mul__(other)
    }

    fn __neg__(&self) -> Self {
        PyExpr(self.0.scale(-1.0))
    }

    fn exp(&self) -> Self {
        PyExpr(self.0.exp())
    }

    fn abs(&self) -> Self {
        PyExpr(self.0.abs())
    }
}

#[pyclass(name = "Engine", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEngine(ExpectationEngine);

#[pymethods]
impl PyEngine {
    #[new]
    #[pyo3(signature = (method = "quadrature", nodes = 64, paths = 100_000, seed = 0))]
    fn new(method: &str, nodes: usize, paths: usize, seed: u64) -> PyResult<Self> {
        let e = match method {
            "quadrature" => ExpectationEngine::quadrature(nodes),
            "mc" => ExpectationEngine::monte_carlo(paths, seed),
            other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
        };
        e.validate().map_err(to_py)?;
        Ok(PyEngine(e))
    }

    fn expect(&self, x: &PyExpr) -> PyResult<f64> {
        self.0.expect(&x.0).map_err(to_py)
    }

    fn log_expect_exp(&self, x: &PyExpr) -> PyResult<f64> {
        self.0.log_expect_exp(&x.0).map_err(to_py)
    }

    fn tilted_expect(&self, x: &PyExpr, tilt: &PyExpr) -> PyResult<f64> {
        self.0.tilted_expect(&x.0, &tilt.0).map_err(to_py)
    }
}

#[pyclass(name = "Maker", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMaker(MakerSpec);

#[pymethods]
impl PyMaker {
    #[new]
    fn new(gamma: f64, endowment: &PyExpr, assets: Vec<PyRef<'_, PyExpr>>) -> PyResult<Self> {
        let assets = assets.iter().map(|a| a.0.clone()).collect();
        MakerSpec::new(gamma, endowment.0.clone(), assets).map(PyMaker).map_err(to_py)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma()
    }

    fn quote(&self, engine: &PyEngine, q: Vec<f64>) -> PyResult<f64> {
        maker::static_quote(&self.0, &engine.0, &q).map_err(to_py)
    }

    fn q0_expect(&self, engine: &PyEngine, x: &PyExpr) -> PyResult<f64> {
        maker::q0_expect(&self.0, &engine.0, &x.0).map_err(to_py)
    }
}

/// Investor with risk aversion `alpha` trading a claim through one maker.
#[pyclass(name = "Claim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyClaim(ClaimSetup);

#[pymethods]
impl PyClaim {
    #[new]
    fn new(maker: &PyMaker, alpha: f64, investor_endowment: &PyExpr, claim: &PyExpr, engine: &PyEngine) -> PyResult<Self> {
        let investor = InvestorSpec::new(alpha, investor_endowment.0.clone()).map_err(to_py)?;
        ClaimSetup::new(maker.0.clone(), investor, claim.0.clone(), engine.0.clone())
            .map(PyClaim)
            .map_err(to_py)
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta()
    }

    fn q0_price(&self) -> PyResult<f64> {
        pricing::q0_price(&self.0).map_err(to_py)
    }

    fn upper_bound(&self, u: f64) -> PyResult<f64> {
        pricing::upper_bound(&self.0, u).map_err(to_py)
    }

    fn lower_bound(&self, u: f64) -> PyResult<f64> {
        pricing::lower_bound(&self.0, u).map_err(to_py)
    }

    /// `"arbitrage_free"`, `"sell_arbitrage"` or `"buy_arbitrage"`.
    fn classify(&self, p: f64, u: f64) -> PyResult<&'static str> {
        pricing::classify_price(&self.0, p, u).map(|c| c.as_str()).map_err(to_py)
    }

    fn strong_classify(&self, p: f64) -> PyResult<bool> {
        pricing::strong_classify(&self.0, p).map_err(to_py)
    }

    /// `(u_hat, residual)`.
    fn demand(&self, p: f64) -> PyResult<(f64, f64)> {
        pricing::demand(&self.0, p).map(|d| (d.u_hat, d.residual)).map_err(to_py)
    }

    fn indifference_price(&self, u: f64) -> PyResult<f64> {
        pricing::indifference_price(&self.0, u).map_err(to_py)
    }

    fn value_function(&self) -> PyResult<f64> {
        pricing::value_function(&self.0).map_err(to_py)
    }
}

/// `(u_star, p_star, residual_a, residual_b)`; side A buys.
#[pyfunction]
fn solve_pepq(a: &PyClaim, b: &PyClaim) -> PyResult<(f64, f64, f64, f64)> {
    let m = SegmentedMarket::new(a.0.clone(), b.0.clone()).map_err(to_py)?;
    let r = equilibrium::solve_pepq(&m).map_err(to_py)?;
    Ok((r.u_star, r.p_star, r.residual_a, r.residual_b))
}

/// Closed-form equilibrium for scalar constant-coefficient Bachelier sides,
/// each given as `(f, g, gamma, alpha)`, sharing `psi` and `y`.
#[pyfunction]
#[pyo3(signature = (a, b, y = 1.0, psi = 1.0, horizon = 1.0))]
fn bachelier_pepq(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), y: f64, psi: f64, horizon: f64) -> PyResult<(f64, f64)> {
    let side = |s: (f64, f64, f64, f64)| -> PyResult<BachelierSide> {
        Ok(BachelierSide {
            spec: BachelierSpec::scalar(horizon, s.0, s.1, psi, Some(y)).map_err(to_py)?,
            gamma: s.2,
            alpha: s.3,
        })
    };
    let r = equilibrium::bachelier_pepq(&side(a)?, &side(b)?).map_err(to_py)?;
    Ok((r.u_star, r.p_star))
}

#[pyfunction]
fn digital_h(gamma: f64, horizon: f64, t: f64, b: f64, q: f64) -> PyResult<f64> {
    let s = DigitalSpec::new(gamma, horizon).map_err(to_py)?;
    Ok(models::digital_h(&s, t, b, q))
}

#[pyfunction]
fn digital_constraint_interval(gamma: f64, horizon: f64, t: f64, b: f64) -> PyResult<(f64, f64)> {
    let s = DigitalSpec::new(gamma, horizon).map_err(to_py)?;
    Ok(models::digital_constraint_interval(&s, t, b))
}

/// `(member, singular)`.
#[pyfunction]
fn twod_membership(horizon: f64, t: f64, b1: f64, b2: f64, p1: f64, p2: f64) -> PyResult<(bool, bool)> {
    let s = TwoDDigitalSpec::new(horizon, t, b1, b2).map_err(to_py)?;
    let m = models::twod_region_membership(&s, p1, p2);
    Ok((m.member, m.singular))
}

#[pymodule]
fn impact_pricer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_class::<PyExpr>()?;
    m.add_class::<PyEngine>()?;
    m.add_class::<PyMaker>()?;
    m.add_class::<PyClaim>()?;
    m.add_function(wrap_pyfunction!(solve_pepq, m)?)?;
    m.add_function(wrap_pyfunction!(bachelier_pepq, m)?)?;
    m.add_function(wrap_pyfunction!(digital_h, m)?)?;
    m.add_function(wrap_pyfunction!(digital_constraint_interval, m)?)?;
    m.add_function(wrap_pyfunction!(twod_membership, m)?)?;
    Ok(())
}
