//! Random variables over a `d`-dimensional Brownian path on `[0, T]`.
//!
//! Every leaf is a function of finitely many centred Gaussian functionals
//! `∫₀ᵀ φₜ'dBₜ` with deterministic step integrands `φ` (the terminal state
//! `B_T` is the functional with `φ ≡ eᵢ`). Compilation collapses each maximal
//! affine sub-tree into a single functional, so expectations only integrate
//! over the span of the functionals that actually appear.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use super::grid::StepFunction;
use crate::error::{PricerError, Result};

/// Pointwise evaluator of the terminal state `B_T ∈ ℝᵈ`.
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Dimension and horizon of the driving Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianSpace {
    pub dim: usize,
    pub horizon: f64,
}

impl BrownianSpace {
    pub fn new(dim: usize, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(PricerError::invalid("Brownian dimension must be positive"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PricerError::invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(BrownianSpace { dim, horizon })
    }

    fn check_coord(&self, i: usize) -> Result<()> {
        if i >= self.dim {
            return Err(PricerError::Dimension(format!(
                "coordinate {i} out of range for a {}-dimensional Brownian motion",
                self.dim
            )));
        }
        Ok(())
    }

    /// Linear form `a'Z` on the standardised terminal state `Z = B_T/√T`.
    pub fn linear(&self, coeffs: Vec<f64>) -> Result<PayoffExpr> {
        if coeffs.len() != self.dim {
            return Err(PricerError::Dimension(format!(
                "linear form has {} coefficients for dimension {}",
                coeffs.len(),
                self.dim
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(PricerError::invalid("linear coefficients must be finite"));
        }
        Ok(PayoffExpr::leaf(Node::Linear(coeffs), *self))
    }

    /// Standard normal coordinate `Zᵢ = Bⁱ_T/√T`.
    pub fn z(&self, i: usize) -> Result<PayoffExpr> {
        self.check_coord(i)?;
        let mut a = vec![0.0; self.dim];
        a[i] = 1.0;
        self.linear(a)
    }

    /// Terminal coordinate `Bⁱ_T`.
    pub fn terminal(&self, i: usize) -> Result<PayoffExpr> {
        self.check_coord(i)?;
        let mut a = vec![0.0; self.dim];
        a[i] = self.horizon.sqrt();
        self.linear(a)
    }

    /// Stochastic integral `∫₀ᵀ φₜ'dBₜ` for a deterministic vector step function.
    pub fn integral(&self, integrand: StepFunction) -> Result<PayoffExpr> {
        if !integrand.is_vector() || integrand.rows() != self.dim {
            return Err(PricerError::Dimension(format!(
                "integrand must be a {}-vector, got {}x{}",
                self.dim,
                integrand.rows(),
                integrand.cols()
            )));
        }
        if (integrand.horizon() - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
            return Err(PricerError::Dimension(format!(
                "integrand horizon {} differs from {}",
                integrand.horizon(),
                self.horizon
            )));
        }
        Ok(PayoffExpr::leaf(Node::Integral(integrand), *self))
    }

    /// Digital `1{Bⁱ_T ≥ strike}`.
    pub fn indicator(&self, i: usize, strike: f64) -> Result<PayoffExpr> {
        self.check_coord(i)?;
        Ok(PayoffExpr::leaf(Node::Indicator { coord: i, strike }, *self))
    }

    /// Arbitrary pointwise function of the terminal state `B_T`.
    ///
    /// Finiteness of its exponential moments cannot be checked symbolically;
    /// the engines reject non-finite samples, the model author is responsible
    /// for integrability.
    pub fn terminal_fn(&self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> PayoffExpr {
        PayoffExpr::leaf(Node::Terminal(Arc::new(f)), *self)
    }
}

#[derive(Clone)]
pub(crate) enum Node {
    Const(f64),
    Linear(Vec<f64>),
    Integral(StepFunction),
    Indicator { coord: usize, strike: f64 },
    Terminal(TerminalFn),
    Sum(Vec<PayoffExpr>),
    Scale(f64, PayoffExpr),
    Product(Vec<PayoffExpr>),
    Exp(PayoffExpr),
    Abs(PayoffExpr),
}

/// Symbolic random variable. Cheap to clone.
#[derive(Clone)]
pub struct PayoffExpr {
    node: Arc<Node>,
    space: Option<BrownianSpace>,
}

impl fmt::Debug for PayoffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.node {
            Node::Const(c) => write!(f, "{c}"),
            Node::Linear(a) => write!(f, "lin{a:?}·Z"),
            Node::Integral(_) => write!(f, "∫φdB"),
            Node::Indicator { coord, strike } => write!(f, "1{{B{coord}_T≥{strike}}}"),
            Node::Terminal(_) => write!(f, "f(B_T)"),
            Node::Sum(xs) => f.debug_tuple("Sum").field(xs).finish(),
            Node::Scale(c, x) => write!(f, "{c}*({x:?})"),
            Node::Product(xs) => f.debug_tuple("Product").field(xs).finish(),
            Node::Exp(x) => write!(f, "exp({x:?})"),
            Node::Abs(x) => write!(f, "|{x:?}|"),
        }
    }
}

fn join_space(a: Option<BrownianSpace>, b: Option<BrownianSpace>) -> Result<Option<BrownianSpace>> {
    match (a, b) {
        (Some(x), Some(y)) => {
            if x.dim != y.dim || (x.horizon - y.horizon).abs() > 1e-12 * x.horizon.max(1.0) {
                Err(PricerError::Dimension(format!(
                    "expressions live on different Brownian spaces ({}, {}) and ({}, {})",
                    x.dim, x.horizon, y.dim, y.horizon
                )))
            } else {
                Ok(Some(x))
            }
        }
        (x, None) => Ok(x),
        (None, y) => Ok(y),
    }
}

impl PayoffExpr {
    fn leaf(node: Node, space: BrownianSpace) -> Self {
        PayoffExpr {
            node: Arc::new(node),
            space: Some(space),
        }
    }

    pub fn constant(c: f64) -> Self {
        PayoffExpr {
            node: Arc::new(Node::Const(c)),
            space: None,
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub(crate) fn node(&self) -> &Node {
        &self.node
    }

    /// Brownian space the expression depends on; `None` for constants.
    pub fn space(&self) -> Option<BrownianSpace> {
        self.space
    }

    /// Value if the expression is a literal constant.
    pub fn as_constant(&self) -> Option<f64> {
        match &*self.node {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn try_sum(terms: &[PayoffExpr]) -> Result<PayoffExpr> {
        let mut space = None;
        for t in terms {
            space = join_space(space, t.space)?;
        }
        Ok(PayoffExpr {
            node: Arc::new(Node::Sum(terms.to_vec())),
            space,
        })
    }

    pub fn try_add(&self, other: &PayoffExpr) -> Result<PayoffExpr> {
        Self::try_sum(&[self.clone(), other.clone()])
    }

    pub fn try_mul(&self, other: &PayoffExpr) -> Result<PayoffExpr> {
        let space = join_space(self.space, other.space)?;
        Ok(PayoffExpr {
            node: Arc::new(Node::Product(vec![self.clone(), other.clone()])),
            space,
        })
    }

    pub fn scale(&self, c: f64) -> PayoffExpr {
        PayoffExpr {
            node: Arc::new(Node::Scale(c, self.clone())),
            space: self.space,
        }
    }

    pub fn exp(&self) -> PayoffExpr {
        PayoffExpr {
            node: Arc::new(Node::Exp(self.clone())),
            space: self.space,
        }
    }

    pub fn abs(&self) -> PayoffExpr {
        PayoffExpr {
            node: Arc::new(Node::Abs(self.clone())),
            space: self.space,
        }
    }

    /// `Σ cᵢ Xᵢ`; fails if the terms live on different spaces.
    pub fn linear_combination(terms: &[(f64, &PayoffExpr)]) -> Result<PayoffExpr> {
        let scaled: Vec<PayoffExpr> = terms.iter().map(|(c, x)| x.scale(*c)).collect();
        Self::try_sum(&scaled)
    }

    /// Upper bound on `ess sup` and lower bound on `ess inf` by interval
    /// arithmetic; infinite where a Gaussian component is unbounded.
    pub(crate) fn range_bound(&self) -> (f64, f64) {
        if let Some(space) = self.space {
            if let Ok(Some((c, phi))) = compile::affine(self, space) {
                return if phi.norm_sq() > 0.0 {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    (c, c)
                };
            }
        }
        match &*self.node {
            Node::Const(c) => (*c, *c),
            Node::Linear(_) | Node::Integral(_) => (f64::NEG_INFINITY, f64::INFINITY),
            Node::Indicator { .. } => (0.0, 1.0),
            Node::Terminal(_) => (f64::NEG_INFINITY, f64::INFINITY),
            Node::Sum(xs) => {
                xs.iter().fold((0.0, 0.0), |(lo, hi), x| {
                    let (a, b) = x.range_bound();
                    (lo + a, hi + b)
                })
            }
            Node::Scale(c, x) => {
                let (a, b) = x.range_bound();
                if *c == 0.0 {
                    (0.0, 0.0)
                } else if *c > 0.0 {
                    (c * a, c * b)
                } else {
                    (c * b, c * a)
                }
            }
            Node::Product(xs) => xs.iter().fold((1.0, 1.0), |(lo, hi), x| {
                let (a, b) = x.range_bound();
                let cands = [mul_ext(lo, a), mul_ext(lo, b), mul_ext(hi, a), mul_ext(hi, b)];
                (
                    cands.iter().copied().fold(f64::INFINITY, f64::min),
                    cands.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            }),
            Node::Exp(x) => {
                let (a, b) = x.range_bound();
                (a.exp(), b.exp())
            }
            Node::Abs(x) => {
                let (a, b) = x.range_bound();
                if a >= 0.0 {
                    (a, b)
                } else if b <= 0.0 {
                    (-b, -a)
                } else {
                    (0.0, b.max(-a))
                }
            }
        }
    }

}

/// `0 · ∞ = 0` product used by interval arithmetic.
fn mul_ext(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl From<f64> for PayoffExpr {
    fn from(c: f64) -> Self {
        PayoffExpr::constant(c)
    }
}

// Operator sugar for same-space expressions; panics on a space mismatch.
impl Add for &PayoffExpr {
    type Output = PayoffExpr;
    fn add(self, rhs: &PayoffExpr) -> PayoffExpr {
        self.try_add(rhs).expect("adding expressions on different Brownian spaces")
    }
}

impl Add for PayoffExpr {
    type Output = PayoffExpr;
    fn add(self, rhs: PayoffExpr) -> PayoffExpr {
        &self + &rhs
    }
}

impl Sub for &PayoffExpr {
    type Output = PayoffExpr;
    fn sub(self, rhs: &PayoffExpr) -> PayoffExpr {
        self + &rhs.scale(-1.0)
    }
}

impl Sub for PayoffExpr {
    type Output = PayoffExpr;
    fn sub(self, rhs: PayoffExpr) -> PayoffExpr {
        &self - &rhs
    }
}

impl Mul for &PayoffExpr {
    type Output = PayoffExpr;
    fn mul(self, rhs: &PayoffExpr) -> PayoffExpr {
        self.try_mul(rhs).expect("multiplying expressions on different Brownian spaces")
    }
}

impl Mul for PayoffExpr {
    type Output = PayoffExpr;
    fn mul(self, rhs: PayoffExpr) -> PayoffExpr {
        &self * &rhs
    }
}

impl Mul<&PayoffExpr> for f64 {
    type Output = PayoffExpr;
    fn mul(self, rhs: &PayoffExpr) -> PayoffExpr {
        rhs.scale(self)
    }
}

impl Mul<PayoffExpr> for f64 {
    type Output = PayoffExpr;
    fn mul(self, rhs: PayoffExpr) -> PayoffExpr {
        rhs.scale(self)
    }
}

impl Neg for &PayoffExpr {
    type Output = PayoffExpr;
    fn neg(self) -> PayoffExpr {
        self.scale(-1.0)
    }
}

impl Neg for PayoffExpr {
    type Output = PayoffExpr;
    fn neg(self) -> PayoffExpr {
        self.scale(-1.0)
    }
}

pub(crate) mod compile {
    //! Lowering of expression trees onto a shared list of Gaussian functionals.

    use super::*;

    /// Node of a compiled expression. Functional indices refer to
    /// [`Program::functionals`].
    #[derive(Clone)]
    pub(crate) enum Op {
        Const(f64),
        Affine { offset: f64, functional: usize },
        Indicator { functional: usize, strike: f64 },
        Terminal { functionals: Vec<usize>, f: TerminalFn },
        Sum(Vec<Op>),
        Scale(f64, Box<Op>),
        Product(Vec<Op>),
        Exp(Box<Op>),
        Abs(Box<Op>),
    }

    impl Op {
        pub(crate) fn eval(&self, g: &[f64], scratch: &mut Vec<f64>) -> f64 {
            match self {
                Op::Const(c) => *c,
                Op::Affine { offset, functional } => offset + g[*functional],
                Op::Indicator { functional, strike } => {
                    if g[*functional] >= *strike {
                        1.0
                    } else {
                        0.0
                    }
                }
                Op::Terminal { functionals, f } => {
                    let start = scratch.len();
                    scratch.extend(functionals.iter().map(|&j| g[j]));
                    let v = f(&scratch[start..]);
                    scratch.truncate(start);
                    v
                }
                Op::Sum(xs) => xs.iter().map(|x| x.eval(g, scratch)).sum(),
                Op::Scale(c, x) => c * x.eval(g, scratch),
                Op::Product(xs) => xs.iter().map(|x| x.eval(g, scratch)).product(),
                Op::Exp(x) => x.eval(g, scratch).exp(),
                Op::Abs(x) => x.eval(g, scratch).abs(),
            }
        }
    }

    /// Several expressions lowered onto one functional basis.
    pub(crate) struct Program {
        pub(crate) space: Option<BrownianSpace>,
        pub(crate) functionals: Vec<StepFunction>,
        pub(crate) ops: Vec<Op>,
    }

    impl Program {
        pub(crate) fn new(exprs: &[&PayoffExpr]) -> Result<Program> {
            let mut space = None;
            for e in exprs {
                space = join_space(space, e.space)?;
            }
            let mut program = Program {
                space,
                functionals: Vec::new(),
                ops: Vec::new(),
            };
            for e in exprs {
                let op = program.lower(e)?;
                program.ops.push(op);
            }
            Ok(program)
        }

        fn intern(&mut self, phi: StepFunction) -> usize {
            if let Some(i) = self.functionals.iter().position(|f| *f == phi) {
                return i;
            }
            self.functionals.push(phi);
            self.functionals.len() - 1
        }

        fn terminal_functional(&mut self, space: BrownianSpace, i: usize) -> Result<usize> {
            let mut e = vec![0.0; space.dim];
            e[i] = 1.0;
            Ok(self.intern(StepFunction::constant_vector(space.horizon, e)?))
        }

        fn lower(&mut self, e: &PayoffExpr) -> Result<Op> {
            let Some(space) = e.space else {
                return Ok(Op::Const(eval_constant(e)));
            };
            if let Some((offset, phi)) = affine(e, space)? {
                if phi.norm_sq() == 0.0 {
                    return Ok(Op::Const(offset));
                }
                let functional = self.intern(phi);
                return Ok(Op::Affine { offset, functional });
            }
            Ok(match e.node() {
                Node::Const(c) => Op::Const(*c),
                Node::Linear(_) | Node::Integral(_) => unreachable!("affine leaves handled above"),
                Node::Indicator { coord, strike } => Op::Indicator {
                    functional: self.terminal_functional(space, *coord)?,
                    strike: *strike,
                },
                Node::Terminal(f) => {
                    let functionals = (0..space.dim)
                        .map(|i| self.terminal_functional(space, i))
                        .collect::<Result<Vec<_>>>()?;
                    Op::Terminal { functionals, f: f.clone() }
                }
                Node::Sum(xs) => Op::Sum(xs.iter().map(|x| self.lower(x)).collect::<Result<_>>()?),
                Node::Scale(c, x) => Op::Scale(*c, Box::new(self.lower(x)?)),
                Node::Product(xs) => Op::Product(xs.iter().map(|x| self.lower(x)).collect::<Result<_>>()?),
                Node::Exp(x) => Op::Exp(Box::new(self.lower(x)?)),
                Node::Abs(x) => Op::Abs(Box::new(self.lower(x)?)),
            })
        }
    }

    /// Value of an expression without Gaussian leaves.
    fn eval_constant(e: &PayoffExpr) -> f64 {
        match e.node() {
            Node::Const(c) => *c,
            Node::Sum(xs) => xs.iter().map(eval_constant).sum(),
            Node::Scale(c, x) => c * eval_constant(x),
            Node::Product(xs) => xs.iter().map(eval_constant).product(),
            Node::Exp(x) => eval_constant(x).exp(),
            Node::Abs(x) => eval_constant(x).abs(),
            _ => unreachable!("leaf nodes always carry a Brownian space"),
        }
    }

    /// `Some((c, φ))` if `e = c + ∫φ'dB` exactly, `None` if it is not affine.
    pub(crate) fn affine(e: &PayoffExpr, space: BrownianSpace) -> Result<Option<(f64, StepFunction)>> {
        let zero = || StepFunction::constant_vector(space.horizon, vec![0.0; space.dim]);
        Ok(match e.node() {
            Node::Const(c) => Some((*c, zero()?)),
            Node::Linear(a) => {
                let s = space.horizon.sqrt();
                Some((0.0, StepFunction::constant_vector(space.horizon, a.iter().map(|x| x / s).collect())?))
            }
            Node::Integral(phi) => Some((0.0, phi.clone())),
            Node::Sum(xs) => {
                let mut offset = 0.0;
                let mut parts = Vec::with_capacity(xs.len());
                for x in xs {
                    match affine(x, space)? {
                        Some((c, phi)) => {
                            offset += c;
                            parts.push(phi);
                        }
                        None => return Ok(None),
                    }
                }
                if parts.is_empty() {
                    Some((offset, zero()?))
                } else {
                    let terms: Vec<(f64, &StepFunction)> = parts.iter().map(|p| (1.0, p)).collect();
                    Some((offset, StepFunction::linear_combination(&terms)?))
                }
            }
            Node::Scale(c, x) => affine(x, space)?.map(|(o, phi)| (c * o, phi.scaled(*c))),
            Node::Product(xs) => {
                // Affine only if at most one factor is non-constant.
                let mut constant = 1.0;
                let mut varying: Option<(f64, StepFunction)> = None;
                for x in xs {
                    match x.space {
                        None => constant *= eval_constant(x),
                        Some(_) => {
                            if varying.is_some() {
                                return Ok(None);
                            }
                            match affine(x, space)? {
                                Some(a) => varying = Some(a),
                                None => return Ok(None),
                            }
                        }
                    }
                }
                match varying {
                    Some((o, phi)) => Some((constant * o, phi.scaled(constant))),
                    None => Some((constant, zero()?)),
                }
            }
            Node::Indicator { .. } | Node::Terminal(_) | Node::Exp(_) | Node::Abs(_) => None,
        })
    }
}
