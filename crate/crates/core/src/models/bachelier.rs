use nalgebra::{DMatrix, DVector};

use crate::error::{PricerError, Result};
use crate::maker::{HProvider, InvestorSpec, MakerSpec};
use crate::payoff::{BrownianSpace, PayoffExpr, StepFunction, TimeGrid};

/// Gaussian market: `Σ₀ = ∫f'dB`, `Σ₁ = ∫g'dB`, `Ψ = ∫ψ'dB`, claim `h = ∫y'dB`.
#[derive(Debug, Clone)]
pub struct BachelierSpec {
    f: StepFunction,
    g: StepFunction,
    psi: StepFunction,
    y: Option<StepFunction>,
    // Per interval of ψ's grid.
    psi_inv: Vec<DMatrix<f64>>,
    condition: Vec<f64>,
}

fn same_horizon(a: &StepFunction, b: &StepFunction) -> bool {
    (a.horizon() - b.horizon()).abs() <= 1e-12 * a.horizon().max(1.0)
}

impl BachelierSpec {
    pub fn new(f: StepFunction, g: StepFunction, psi: StepFunction, y: Option<StepFunction>) -> Result<Self> {
        let d = psi.rows();
        if psi.cols() != d {
            return Err(PricerError::Dimension(format!("ψ must be square, got {}x{}", d, psi.cols())));
        }
        for (name, v) in [("f", Some(&f)), ("g", Some(&g)), ("y", y.as_ref())] {
            let Some(v) = v else { continue };
            if !v.is_vector() || v.rows() != d {
                return Err(PricerError::Dimension(format!("{name} must be a {d}-vector step function")));
            }
            if !same_horizon(v, &psi) {
                return Err(PricerError::Dimension(format!("{name} and ψ have different horizons")));
            }
        }
        let mut psi_inv = Vec::with_capacity(psi.grid().n_steps());
        let mut condition = Vec::with_capacity(psi.grid().n_steps());
        for i in 0..psi.grid().n_steps() {
            let m = DMatrix::from_row_slice(d, d, psi.block(i));
            let sv = m.singular_values();
            let smax = sv.max();
            let smin = sv.min();
            if !(smin > 1e-12 * smax) {
                return Err(PricerError::Singular(format!(
                    "ψ on [{}, {}) has singular values in [{smin:e}, {smax:e}]",
                    psi.grid().nodes()[i],
                    psi.grid().nodes()[i + 1]
                )));
            }
            condition.push(smax / smin);
            psi_inv.push(m.try_inverse().ok_or_else(|| PricerError::Singular("ψ block".into()))?);
        }
        Ok(BachelierSpec {
            f,
            g,
            psi,
            y,
            psi_inv,
            condition,
        })
    }

    /// `d = k = 1`, constant coefficients.
    pub fn scalar(horizon: f64, f: f64, g: f64, psi: f64, y: Option<f64>) -> Result<Self> {
        Self::new(
            StepFunction::constant_vector(horizon, vec![f])?,
            StepFunction::constant_vector(horizon, vec![g])?,
            StepFunction::constant_matrix(horizon, vec![vec![psi]])?,
            y.map(|y| StepFunction::constant_vector(horizon, vec![y])).transpose()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.psi.rows()
    }

    pub fn horizon(&self) -> f64 {
        self.psi.horizon()
    }

    pub fn f(&self) -> &StepFunction {
        &self.f
    }

    pub fn g(&self) -> &StepFunction {
        &self.g
    }

    pub fn psi(&self) -> &StepFunction {
        &self.psi
    }

    pub fn y(&self) -> Option<&StepFunction> {
        self.y.as_ref()
    }

    pub fn claim_integrand(&self) -> Result<&StepFunction> {
        self.y
            .as_ref()
            .ok_or_else(|| PricerError::invalid("this Bachelier spec has no claim integrand y"))
    }

    /// Condition number of `ψ` on each interval of its grid.
    pub fn condition_numbers(&self) -> &[f64] {
        &self.condition
    }

    pub fn space(&self) -> BrownianSpace {
        BrownianSpace::new(self.dim(), self.horizon()).expect("validated dimensions")
    }

    pub fn maker_endowment(&self) -> Result<PayoffExpr> {
        self.space().integral(self.f.clone())
    }

    pub fn investor_endowment(&self) -> Result<PayoffExpr> {
        self.space().integral(self.g.clone())
    }

    /// `Ψⱼ = ∫ψ_{·j}'dB`, so that `q'Ψ = ∫(ψq)'dB`.
    pub fn assets(&self) -> Result<Vec<PayoffExpr>> {
        (0..self.dim())
            .map(|j| self.space().integral(self.psi.column(j)?))
            .collect()
    }

    pub fn claim(&self) -> Result<PayoffExpr> {
        self.space().integral(self.claim_integrand()?.clone())
    }

    pub fn maker(&self, gamma: f64) -> Result<MakerSpec> {
        MakerSpec::new(gamma, self.maker_endowment()?, self.assets()?)
    }

    pub fn investor(&self, alpha: f64) -> Result<InvestorSpec> {
        InvestorSpec::new(alpha, self.investor_endowment()?)
    }

    /// `H_t(q) = −γ(f_t + ψ_t q)`.
    pub fn h(&self, gamma: f64, t: f64, q: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let f = self.f.value_at(t);
        let psi = self.psi.value_at(t);
        (0..d)
            .map(|r| -gamma * (f[r] + (0..d).map(|c| psi[r * d + c] * q[c]).sum::<f64>()))
            .collect()
    }

    /// `ψ_t⁻¹ v`.
    pub fn psi_solve(&self, t: f64, v: &[f64]) -> Vec<f64> {
        let inv = &self.psi_inv[self.psi.grid().interval_index(t)];
        (inv * DVector::from_column_slice(v)).iter().copied().collect()
    }

    /// Position `Q_t = −(γψ_t)⁻¹π_t` with `H_t(Q_t) − H_t(0) = π_t`.
    pub fn position_for(&self, gamma: f64, t: f64, pi: &[f64]) -> Vec<f64> {
        self.psi_solve(t, pi).into_iter().map(|x| -x / gamma).collect()
    }

    /// Grid containing every breakpoint of `f`, `g`, `ψ` and `y`.
    pub fn common_grid(&self) -> Result<TimeGrid> {
        let mut grid = self.psi.grid().merge(self.f.grid())?.merge(self.g.grid())?;
        if let Some(y) = &self.y {
            grid = grid.merge(y.grid())?;
        }
        Ok(grid)
    }
}

/// `H` of a Bachelier maker with risk aversion `γ`.
#[derive(Debug, Clone)]
pub struct BachelierMaker {
    pub spec: BachelierSpec,
    pub gamma: f64,
}

impl HProvider for BachelierMaker {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn n_assets(&self) -> usize {
        self.spec.dim()
    }

    fn h(&self, t: f64, _state: &[f64], q: &[f64]) -> Vec<f64> {
        self.spec.h(self.gamma, t, q)
    }
}
